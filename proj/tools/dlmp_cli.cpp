#include "dlmp/errors.hpp"
#include "dlmp/harness.hpp"
#include "dlmp/kernels.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>

namespace {

using namespace dlmp;

struct Common {
    std::string scenario = "I";
    std::uint64_t seed = 1;
    std::string config;
    std::string isa;
    std::optional<double> eta, relaxation;
    std::optional<long> max_iter;
    std::string out;
};

void add_common(CLI::App* cmd, Common& c)
{
    cmd->add_option("--scenario", c.scenario, "I, II, III or a scenario JSON file")->capture_default_str();
    cmd->add_option("--seed", c.seed, "RNG seed")->capture_default_str();
    cmd->add_option("--config", c.config, "JSON file with scenario overrides");
    cmd->add_option("--eta", c.eta, "penalty parameter");
    cmd->add_option("--relaxation", c.relaxation, "price relaxation factor in (0, 1]");
    cmd->add_option("--max-iter", c.max_iter, "iteration cap");
    cmd->add_option("--isa", c.isa, "kernel set: scalar or avx2")->check(CLI::IsMember({"scalar", "avx2"}));
    cmd->add_option("--out", c.out, "output directory")->required();
}

Scenario build(const Common& c, const ScenarioOverrides& extra = {})
{
    if (!c.isa.empty()) kernels::set_isa(c.isa == "avx2" ? kernels::Isa::avx2 : kernels::Isa::scalar);
    Scenario s;
    if (c.scenario == "I" || c.scenario == "II" || c.scenario == "III") {
        ScenarioOverrides o = extra;
        if (!c.config.empty()) {
            std::ifstream in(c.config);
            if (!in) throw Error("cannot open config " + c.config);
            const auto j = nlohmann::json::parse(in);
            const auto file = overrides_from_json(j.contains("overrides") ? j["overrides"] : j);
            o = file;
            if (extra.tol_p_per_aggregator && !file.tol_p_per_aggregator) o.tol_p_per_aggregator = extra.tol_p_per_aggregator;
            if (extra.tol_feas && !file.tol_feas) o.tol_feas = extra.tol_feas;
        }
        s = generate_scenario(parse_scenario_kind(c.scenario), c.seed, o);
    } else {
        s = load_scenario_file(c.scenario);
    }
    if (c.eta) s.solver.eta = *c.eta;
    if (c.relaxation) s.solver.relaxation = *c.relaxation;
    if (c.max_iter) s.solver.max_iter = *c.max_iter;
    return s;
}

void report(const RunRecord& r)
{
    const auto& m = r.result;
    std::printf("status %s  iterations %ld  welfare %.9g  J %.9g  max slack %.3g  %.2fs\n", to_string(m.status),
                m.iterations, m.total_welfare, m.jain, m.slacks.worst(), r.seconds);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Fairness-regularized DLMP market simulator"};
    app.require_subcommand(1);

    Common run_opt;
    double fairness = 0.0;
    bool fairness_set = false;
    auto* run = app.add_subcommand("run", "run one market clearing");
    add_common(run, run_opt);
    run->add_option("--fairness", fairness, "fairness weight C")->each([&](const std::string&) { fairness_set = true; });

    Common sweep_opt;
    double c_from = 0.0, c_to = 0.5, c_step = 0.02;
    double sweep_tol_p = 1e-11, sweep_tol_feas = 1e-10;
    auto* sweep = app.add_subcommand("sweep", "sweep the fairness weight");
    add_common(sweep, sweep_opt);
    sweep->add_option("--c-from", c_from, "first fairness weight")->capture_default_str();
    sweep->add_option("--c-to", c_to, "last fairness weight")->capture_default_str();
    sweep->add_option("--c-step", c_step, "grid step")->capture_default_str();
    sweep->add_option("--tol-p", sweep_tol_p, "step tolerance per aggregator")->capture_default_str();
    sweep->add_option("--tol-feas", sweep_tol_feas, "feasibility tolerance")->capture_default_str();

    Common val_opt;
    auto* validate = app.add_subcommand("validate", "linearization error against the AC power flow");
    add_common(validate, val_opt);

    std::string dec_in, dec_out;
    auto* decompose = app.add_subcommand("decompose", "re-emit the DLMP component table of a run");
    decompose->add_option("--in", dec_in, "run directory")->required();
    decompose->add_option("--out", dec_out, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            Scenario s = build(run_opt);
            if (fairness_set) s.fairness_weight = fairness;
            const RunRecord r = run_scenario(s);
            emit_results(r, run_opt.out);
            report(r);
            return r.result.converged() ? 0 : 3;
        }
        if (*sweep) {
            ScenarioOverrides tight;
            tight.tol_p_per_aggregator = sweep_tol_p;
            tight.tol_feas = sweep_tol_feas;
            Scenario s = build(sweep_opt, tight);
            if (sweep_opt.scenario != "I" && sweep_opt.scenario != "II" && sweep_opt.scenario != "III") {
                s.solver.tol_p_per_aggregator = sweep_tol_p;
                s.solver.tol_feas = sweep_tol_feas;
            }
            const SweepResult res = run_sweep(s, fairness_grid(c_from, c_to, c_step));
            emit_sweep(s, res, sweep_opt.out);
            std::fputs(sweep_csv(res.rows).c_str(), stdout);
            for (const auto& row : res.rows)
                if (!row.converged) return 3;
            return 0;
        }
        if (*validate) {
            const RunRecord r = run_scenario(build(val_opt));
            emit_results(r, val_opt.out);
            emit_linearization_report(r, val_opt.out);
            report(r);
            std::printf("max |dV| %.3e  max |dP| %.3e  max |dQ| %.3e  AC residual %.3e\n", r.linearization.max_voltage,
                        r.linearization.max_p_flow, r.linearization.max_q_flow, r.linearization.ac.max_residual);
            return 0;
        }
        if (*decompose) {
            decompose_run(dec_in, dec_out);
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
