// Acceptance checks 1-10. One PASS/FAIL line per criterion; exit status is
// nonzero when any criterion fails.
#include "dlmp/errors.hpp"
#include "dlmp/harness.hpp"
#include "dlmp/kernels.hpp"

#include "instances.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

using namespace dlmp;
using namespace dlmp::testing;
using Eigen::VectorXd;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t seed = 1;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Scenario tight(Scenario s)
{
    s.solver.tol_p_per_aggregator = 1e-11;
    s.solver.tol_feas = 1e-10;
    return s;
}

// Payoff maximizer independent of the closed form: x = 0 if the payoff slope is
// nonpositive there, otherwise bisection on the payoff slope u'(x) - c.
double numeric_argmax(const Prosumer& pr, double c)
{
    const LogUtility u{pr.a, pr.b};
    if (u.marginal(0.0) - c <= 0.0) return -pr.g;
    double lo = 0.0, hi = 1.0;
    while (u.marginal(hi) - c > 0.0) hi *= 2.0;
    for (int i = 0; i < 200 && hi - lo > 0.0; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        (u.marginal(mid) - c > 0.0 ? lo : hi) = mid;
    }
    const double x = payoff(pr, lo - pr.g, c) >= payoff(pr, hi - pr.g, c) ? lo : hi;
    return x - pr.g;
}

Outcome criterion1()
{
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ua(1, 4), ub(0.5, 2), ug(0, 0.05), uc(0.05, 10);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Prosumer pr{ua(rng), ub(rng), ug(rng)};
        const double c = uc(rng);
        worst = std::max(worst, std::abs(best_response(pr, c) - numeric_argmax(pr, c)));
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-8 && secs < 1.0, fmt("max |dp| = %.2e over 1000 draws, %.3f s", worst, secs)};
}

Outcome criterion2()
{
    std::mt19937_64 rng(seed + 1);
    std::uniform_real_distribution<double> up(0.05, 5.0), uc(0.5, 2.0);
    std::uniform_int_distribution<int> ug(5, 30), un(2, 17);
    double worst = 0.0;
    bool masked_zero = true;
    int cases = 0;
    while (cases < 100) {
        const int n = un(rng);
        VectorXd p(n), c(n), g(n);
        for (int k = 0; k < n; ++k) {
            p(k) = up(rng);
            if (k % 5 == 4) p(k) = -p(k); // suppliers sit outside the mask
            c(k) = uc(rng);
            g(k) = ug(rng);
        }
        const auto ctx = make_fairness_context(p, c, g);
        if (ctx.active_count() < 1.0) continue;
        ++cases;
        const VectorXd grad = jain_gradient(ctx, p);
        VectorXd fd(n);
        const double h = 1e-6;
        for (int k = 0; k < n; ++k) {
            VectorXd a = p, b = p;
            a(k) += h;
            b(k) -= h;
            fd(k) = (jain_masked(ctx, a) - jain_masked(ctx, b)) / (2 * h);
            if (ctx.mask(k) == 0.0 && grad(k) != 0.0) masked_zero = false;
        }
        const double scale = fd.cwiseAbs().maxCoeff();
        if (scale > 0.0) worst = std::max(worst, (grad - fd).cwiseAbs().maxCoeff() / scale);
        else worst = std::max(worst, grad.cwiseAbs().maxCoeff());
    }
    bool fractional = true;
    for (int n = 1; n <= 10; ++n)
        for (int m = 1; m <= n; ++m) {
            VectorXd x = VectorXd::Zero(n);
            x.head(m).setConstant(1.7);
            if (jain_scalar(x) != static_cast<double>(m) / n) fractional = false;
        }
    return {worst <= 1e-5 && masked_zero && fractional,
            fmt("max rel err = %.2e on %d vectors, masked entries zero: %s, m/n exact: %s", worst, cases,
                masked_zero ? "yes" : "no", fractional ? "yes" : "no")};
}

Outcome criterion3(const RunRecord& one)
{
    const auto& l = one.linearization;
    const bool ok = one.result.converged() && l.max_voltage <= 5e-3 && l.ac.max_residual <= 1e-10;
    return {ok, fmt("max |V_lin - V_AC| = %.2e pu, AC residual = %.2e", l.max_voltage, l.ac.max_residual)};
}

struct SmallReport {
    bool ok = true;
    std::string detail;
    double worst_decomposition = 0.0;
    double min_dual = 0.0;
};

SmallReport criterion4_runs()
{
    SmallReport rep;
    std::string d;
    for (auto kind : {SmallCase::unconstrained, SmallCase::voltage, SmallCase::congestion}) {
        const auto s = small_instance(kind);
        const auto ref = solve_reference(s.constraints, s.aggregators, 0.0);
        const auto n = static_cast<Eigen::Index>(s.constraints.node_count());
        // the intended rows must actually bind at the oracle solution
        const VectorXd rows = s.constraints.inequality_rows(ref.demand);
        bool binds = true;
        if (kind == SmallCase::voltage)
            binds = rows.segment(0, n).maxCoeff() > -1e-7 && ref.duals.voltage_lower.maxCoeff() > 0.0;
        if (kind == SmallCase::congestion)
            binds = rows.segment(2 * n, 4 * n).maxCoeff() > -1e-7 && ref.duals.flow.maxCoeff() > 0.0;
        if (kind == SmallCase::unconstrained) binds = rows.maxCoeff() < -1e-3;
        double dp = 0.0, dw = 0.0, kkt = ref.kkt.worst();
        bool converged = true;
        for (double eta : {1e-3, 1e-2}) {
            MarketConfig cfg;
            cfg.eta = eta;
            cfg.relaxation = 1.0;
            cfg.tol_p_per_aggregator = 1e-9;
            cfg.tol_feas = 1e-9;
            const auto r = run_market(s.constraints, s.aggregators, cfg);
            converged = converged && r.converged();
            dp = std::max(dp, (r.demand - ref.demand).cwiseAbs().maxCoeff());
            dw = std::max(dw, std::abs(r.total_welfare - ref.total_welfare) / ref.total_welfare);
            kkt = std::max(kkt, r.kkt.worst());
            rep.worst_decomposition = std::max(rep.worst_decomposition, r.max_decomposition_error);
            rep.min_dual = std::min(rep.min_dual, r.min_inequality_dual);
        }
        const bool ok = binds && converged && dp <= 1e-3 && dw <= 1e-3 && kkt <= 1e-4;
        rep.ok = rep.ok && ok;
        d += fmt("%s%s: |dp| %.1e, dW %.1e, KKT %.1e%s", d.empty() ? "" : "; ", to_string(kind), dp, dw, kkt,
                 binds ? "" : " (intended rows not binding)");
    }
    rep.detail = d;
    return rep;
}

} // namespace

int main()
{
    int failures = 0;
    auto report = [&](int id, const char* name, const std::function<Outcome()>& f) {
        Outcome o;
        try {
            o = f();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
        std::fflush(stdout);
        if (!o.pass) ++failures;
    };

    // Shared runs
    std::optional<RunRecord> run_one, run_two, run_three;
    double run_one_seconds = 0.0;
    try {
        const auto t0 = std::chrono::steady_clock::now();
        run_one = run_scenario(generate_scenario(ScenarioKind::I, seed));
        run_one_seconds = seconds_since(t0);
        run_two = run_scenario(generate_scenario(ScenarioKind::II, seed));
        run_three = run_scenario(generate_scenario(ScenarioKind::III, seed));
    } catch (const std::exception& e) {
        std::printf("scenario runs failed: %s\n", e.what());
    }
    SmallReport small;
    try {
        small = criterion4_runs();
    } catch (const std::exception& e) {
        small.ok = false;
        small.detail = std::string("exception: ") + e.what();
    }
    std::optional<SweepResult> sweep;
    try {
        sweep = run_sweep(tight(generate_scenario(ScenarioKind::II, seed)), fairness_grid(0.0, 0.5, 0.02));
    } catch (const std::exception& e) {
        std::printf("fairness sweep failed: %s\n", e.what());
    }

    report(1, "closed-form best response", criterion1);
    report(2, "Jain gradient", criterion2);
    report(3, "linearization accuracy", [&]() -> Outcome {
        if (!run_one) return {false, "Scenario I run unavailable"};
        return criterion3(*run_one);
    });
    report(4, "oracle equivalence", [&]() -> Outcome { return {small.ok, small.detail}; });
    report(5, "decomposition identity", [&]() -> Outcome {
        if (!run_one || !run_two || !run_three || !sweep) return {false, "runs unavailable"};
        double worst = small.worst_decomposition;
        for (const auto* r : {&*run_one, &*run_two, &*run_three}) worst = std::max(worst, r->result.max_decomposition_error);
        for (const auto& r : sweep->runs) worst = std::max(worst, r.result.max_decomposition_error);
        // the emitted table must carry the identity exactly
        const auto dir = fs::temp_directory_path() / "dlmp_acceptance_c5";
        fs::remove_all(dir);
        emit_results(*run_one, dir);
        bool exact = true;
        try {
            decompose_run(dir, dir / "dec");
        } catch (const Error&) {
            exact = false;
        }
        return {worst <= 1e-12 && exact,
                fmt("max relative gap over all iterations = %.2e, emitted table exact: %s", worst, exact ? "yes" : "no")};
    });
    report(6, "feasibility at convergence", [&]() -> Outcome {
        if (!run_one || !run_two || !run_three) return {false, "runs unavailable"};
        bool ok = small.min_dual >= 0.0;
        std::string d;
        const char* names[] = {"I", "II", "III"};
        int i = 0;
        for (const auto* r : {&*run_one, &*run_two, &*run_three}) {
            const auto& m = r->result;
            const bool inactive = m.duals.budget == 0.0 && m.slacks.budget < 0.0;
            ok = ok && m.converged() && m.slacks.worst() <= 1e-4 && m.min_inequality_dual >= 0.0 && inactive;
            d += fmt("%s%s: slack %.1e, min dual %.1e, budget %s", i ? "; " : "", names[i], m.slacks.worst(),
                     m.min_inequality_dual, inactive ? "inactive" : "ACTIVE");
            ++i;
        }
        return {ok, d};
    });
    report(7, "fairness sweep", [&]() -> Outcome {
        if (!sweep) return {false, "sweep unavailable"};
        const auto& rows = sweep->rows;
        bool ok = rows.size() == 26;
        double j_drop = 0.0, w_rise = 0.0;
        for (std::size_t i = 1; i < rows.size(); ++i) {
            j_drop = std::max(j_drop, rows[i - 1].jain - rows[i].jain);
            w_rise = std::max(w_rise, rows[i].welfare - rows[i - 1].welfare);
        }
        bool converged = true;
        for (const auto& r : rows) converged = converged && r.converged;
        const double pof_end = rows.empty() ? 0.0 : rows.back().pof;
        ok = ok && converged && j_drop <= 1e-6 && w_rise <= 1e-6 && rows.front().pof == 0.0 && pof_end > 0.0 &&
             pof_end <= 0.10;
        return {ok, fmt("%zu rows, max J decrease %.1e, max welfare increase %.1e, PoF(0) = %g, PoF(0.5) = %.3e",
                        rows.size(), std::max(j_drop, 0.0), std::max(w_rise, 0.0), rows.empty() ? -1.0 : rows.front().pof,
                        pof_end)};
    });
    report(8, "spatial fairness", [&]() -> Outcome {
        const auto base = tight(generate_scenario(ScenarioKind::I, seed));
        auto fair = base;
        fair.fairness_weight = 0.4;
        const auto r0 = run_scenario(base), r4 = run_scenario(fair);
        const double s0 = price_spread(r0.result.price), s4 = price_spread(r4.result.price);
        // informational: how often the effect shows up on neighbouring seeds
        int narrower = 0;
        for (std::uint64_t other = 1; other <= 10; ++other) {
            auto b = tight(generate_scenario(ScenarioKind::I, other));
            auto f = b;
            f.fairness_weight = 0.4;
            if (price_spread(run_scenario(f).result.price) < price_spread(run_scenario(b).result.price)) ++narrower;
        }
        return {r0.result.converged() && r4.result.converged() && s4 < s0,
                fmt("seed %llu: spread %.9f at C = 0, %.9f at C = 0.4 (narrower on %d of seeds 1-10)",
                    static_cast<unsigned long long>(seed), s0, s4, narrower)};
    });
    report(9, "determinism", [&]() -> Outcome {
        const auto root = fs::temp_directory_path() / "dlmp_acceptance_c9";
        fs::remove_all(root);
        bool same = true;
        for (auto kind : {ScenarioKind::I, ScenarioKind::II, ScenarioKind::III}) {
            const auto s = generate_scenario(kind, seed);
            const auto a = root / (std::string(to_string(kind)) + "_a"), b = root / (std::string(to_string(kind)) + "_b");
            emit_results(run_scenario(s), a);
            emit_results(run_scenario(generate_scenario(kind, seed)), b);
            for (const char* f : {"aggregators.csv", "trace.csv"}) same = same && slurp(a / f) == slurp(b / f);
        }
        const auto s = generate_scenario(ScenarioKind::I, seed);
        const auto grid = fairness_grid(0.0, 0.1, 0.05);
        emit_sweep(s, run_sweep(s, grid), root / "sweep_a");
        emit_sweep(s, run_sweep(generate_scenario(ScenarioKind::I, seed), grid), root / "sweep_b");
        same = same && slurp(root / "sweep_a" / "sweep.csv") == slurp(root / "sweep_b" / "sweep.csv");
        same = same && slurp(root / "sweep_a" / "C_0.0500" / "aggregators.csv") ==
                           slurp(root / "sweep_b" / "C_0.0500" / "aggregators.csv");
        return {same, same ? "run and sweep CSVs byte-identical across repeats" : "CSV bytes differ"};
    });
    report(10, "scale and runtime", [&]() -> Outcome {
        if (!run_one) return {false, "Scenario I run unavailable"};
        const auto& m = run_one->result;
        std::size_t prosumers = 0;
        for (auto sz : run_one->sizes) prosumers += sz;
        const bool ok = m.converged() && m.iterations <= 500000 && run_one_seconds < 300.0 &&
                        run_one->sizes.size() == 17 && prosumers == 170;
        return {ok, fmt("%zu aggregators, %zu prosumers, %ld iterations, %.3f s (kernels: %s)", run_one->sizes.size(),
                        prosumers, m.iterations, run_one_seconds,
                        std::string(kernels::isa_name(kernels::active_isa())).c_str())};
    });

    std::printf("%d of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
