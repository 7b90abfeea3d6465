#include "dlmp/errors.hpp"
#include "dlmp/harness.hpp"
#include "dlmp/kernels.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace dlmp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_atomic(const fs::path& path, const std::string& content)
{
    fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << content;
        if (!out) throw Error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

std::vector<std::string> lines_of(const std::string& text)
{
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);)
        if (!l.empty()) out.push_back(l);
    return out;
}

std::string fixed_from_units(long long units, int decimals)
{
    const bool neg = units < 0;
    std::string digits = std::to_string(neg ? -units : units);
    if (decimals > 0) {
        if (static_cast<int>(digits.size()) <= decimals)
            digits.insert(0, static_cast<std::size_t>(decimals + 1) - digits.size(), '0');
        digits.insert(digits.size() - static_cast<std::size_t>(decimals), 1, '.');
        while (digits.back() == '0') digits.pop_back();
        if (digits.back() == '.') digits.pop_back();
    }
    if (neg && digits != "0") digits.insert(0, 1, '-');
    return digits;
}

// Exact decimal value as (integer, decimals).
struct Decimal {
    __int128 units = 0;
    int decimals = 0;
};

Decimal parse_decimal(const std::string& s)
{
    Decimal d;
    bool neg = false, frac = false;
    for (char ch : s) {
        if (ch == '-') neg = true;
        else if (ch == '.') frac = true;
        else if (ch >= '0' && ch <= '9') {
            d.units = d.units * 10 + (ch - '0');
            if (frac) ++d.decimals;
        } else {
            throw Error("not a fixed decimal: '" + s + "'");
        }
    }
    if (neg) d.units = -d.units;
    return d;
}

__int128 rescale(const Decimal& d, int decimals)
{
    __int128 u = d.units;
    for (int i = d.decimals; i < decimals; ++i) u *= 10;
    return u;
}

json slacks_json(const Slacks& s)
{
    return {{"voltage_lower", s.voltage_lower}, {"voltage_upper", s.voltage_upper}, {"flow", s.flow},
            {"balance", s.balance}, {"budget", s.budget}};
}

json kkt_json(const KktResiduals& k)
{
    return {{"stationarity", k.stationarity}, {"primal", k.primal}, {"dual", k.dual},
            {"complementarity", k.complementarity}};
}

} // namespace

std::string format_number(double v)
{
    if (v == 0.0) return "0";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

std::vector<std::string> format_components(const std::vector<double>& parts)
{
    double mx = 0.0, sum = 0.0;
    for (double p : parts) {
        mx = std::max(mx, std::abs(p));
        sum += p;
    }
    mx = std::max(mx, std::abs(sum));
    std::vector<std::string> out(parts.size() + 1, "0");
    if (!(mx > 0.0) || !std::isfinite(mx)) return out;
    int decimals = 11 - static_cast<int>(std::floor(std::log10(mx)));
    decimals = std::clamp(decimals, 0, 22);
    const double scale = std::pow(10.0, decimals);
    long long total = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const long long u = std::llround(parts[i] * scale);
        total += u;
        out[i + 1] = fixed_from_units(u, decimals);
    }
    out[0] = fixed_from_units(total, decimals);
    return out;
}

void emit_results(const RunRecord& rec, const fs::path& out_dir)
{
    const auto& r = rec.result;
    std::ostringstream agg;
    agg << "label,node,p_k,c_k,c_V,c_C,c_EL,c_F,G_k,welfare\n";
    for (std::size_t k = 0; k < rec.labels.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        const auto cols = format_components({r.breakdown.voltage(i), r.breakdown.congestion(i),
                                             r.breakdown.energy_loss(i), r.breakdown.fairness(i)});
        agg << rec.labels[k] << ',' << rec.buses[k] << ',' << format_number(r.demand(i));
        for (const auto& c : cols) agg << ',' << c;
        agg << ',' << rec.sizes[k] << ',' << format_number(r.welfare(i)) << '\n';
    }
    write_atomic(out_dir / "aggregators.csv", agg.str());

    std::ostringstream tr;
    tr << "iteration,step_l1,lagrangian,max_violation,jain\n";
    for (const auto& t : r.trace)
        tr << t.iteration << ',' << format_number(t.step) << ',' << format_number(t.lagrangian) << ','
           << format_number(t.max_violation) << ',' << format_number(t.jain) << '\n';
    write_atomic(out_dir / "trace.csv", tr.str());

    json s;
    s["scenario_digest"] = rec.digest;
    s["seed"] = rec.config.value("seed", std::uint64_t{0});
    s["kind"] = rec.config.value("kind", std::string());
    s["status"] = to_string(r.status);
    s["message"] = r.message;
    s["iterations"] = r.iterations;
    s["total_welfare"] = r.total_welfare;
    s["jain"] = r.jain;
    s["objective"] = r.objective;
    s["price_spread"] = price_spread(r.price);
    s["slacks"] = slacks_json(r.slacks);
    s["kkt"] = kkt_json(r.kkt);
    s["duals"] = {{"balance", r.duals.balance},
                  {"budget", r.duals.budget},
                  {"voltage_lower_max", r.duals.voltage_lower.maxCoeff()},
                  {"voltage_upper_max", r.duals.voltage_upper.maxCoeff()},
                  {"flow_max", r.duals.flow.maxCoeff()}};
    s["max_decomposition_error"] = r.max_decomposition_error;
    s["min_inequality_dual"] = r.min_inequality_dual;
    s["linearization_error"] = {{"max_voltage", rec.linearization.max_voltage},
                                {"max_p_flow", rec.linearization.max_p_flow},
                                {"max_q_flow", rec.linearization.max_q_flow},
                                {"max_p_loss", rec.linearization.max_p_loss},
                                {"ac_residual", rec.linearization.ac.max_residual}};
    s["reference_violations"] = rec.reference_violations;
    s["kernel_isa"] = std::string(kernels::isa_name(kernels::active_isa()));
    s["wall_seconds"] = rec.seconds;
    s["config"] = rec.config;
    write_atomic(out_dir / "summary.json", s.dump(2) + "\n");
}

std::string sweep_csv(const std::vector<SweepRow>& rows)
{
    std::ostringstream out;
    out << "fairness_weight,jain,welfare,pof,price_spread,iterations,converged\n";
    for (const auto& r : rows)
        out << format_number(r.fairness_weight) << ',' << format_number(r.jain) << ',' << format_number(r.welfare)
            << ',' << format_number(r.pof) << ',' << format_number(r.spread) << ',' << r.iterations << ','
            << (r.converged ? 1 : 0) << '\n';
    return out.str();
}

std::vector<SweepRow> parse_sweep_csv(const std::string& text)
{
    const auto lines = lines_of(text);
    if (lines.empty() || lines.front().rfind("fairness_weight,", 0) != 0) throw Error("not a sweep table");
    std::vector<SweepRow> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto f = split_csv(lines[i]);
        if (f.size() != 7) throw Error("sweep row " + std::to_string(i) + " has " + std::to_string(f.size()) + " fields");
        SweepRow r;
        r.fairness_weight = std::stod(f[0]);
        r.jain = std::stod(f[1]);
        r.welfare = std::stod(f[2]);
        r.pof = std::stod(f[3]);
        r.spread = std::stod(f[4]);
        r.iterations = std::stol(f[5]);
        r.converged = f[6] == "1";
        rows.push_back(r);
    }
    return rows;
}

void emit_sweep(const Scenario& s, const SweepResult& sweep, const fs::path& out_dir)
{
    write_atomic(out_dir / "sweep.csv", sweep_csv(sweep.rows));
    for (std::size_t i = 0; i < sweep.runs.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "C_%.4f", sweep.rows[i].fairness_weight);
        emit_results(sweep.runs[i], out_dir / name);
    }
    json j;
    j["scenario_digest"] = scenario_digest(s);
    j["rows"] = sweep.rows.size();
    j["all_converged"] = std::all_of(sweep.rows.begin(), sweep.rows.end(), [](const SweepRow& r) { return r.converged; });
    j["config"] = scenario_to_json(s);
    write_atomic(out_dir / "summary.json", j.dump(2) + "\n");
}

void emit_linearization_report(const RunRecord& rec, const fs::path& out_dir)
{
    std::ostringstream out;
    out << "quantity,bus,predicted,actual,abs_error\n";
    for (const auto& r : rec.linearization.rows)
        out << r.quantity << ',' << r.bus << ',' << format_number(r.predicted) << ',' << format_number(r.actual)
            << ',' << format_number(r.abs_error) << '\n';
    write_atomic(out_dir / "linearization_error.csv", out.str());
    const auto& l = rec.linearization;
    json j = {{"scenario_digest", rec.digest},
              {"status", to_string(rec.result.status)},
              {"max_voltage", l.max_voltage},
              {"max_p_flow", l.max_p_flow},
              {"max_q_flow", l.max_q_flow},
              {"max_p_loss", l.max_p_loss},
              {"ac_residual", l.ac.max_residual},
              {"ac_sweeps", l.ac.sweeps}};
    write_atomic(out_dir / "validation.json", j.dump(2) + "\n");
}

void decompose_run(const fs::path& run_dir, const fs::path& out_dir)
{
    const auto lines = lines_of(read_file(run_dir / "aggregators.csv"));
    if (lines.empty() || lines.front().rfind("label,node,p_k,c_k,c_V,c_C,c_EL,c_F", 0) != 0)
        throw Error("unexpected aggregator table header in " + run_dir.string());
    std::ostringstream out;
    out << "label,node,c_k,c_V,c_C,c_EL,c_F,share_V,share_C,share_EL,share_F\n";
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto f = split_csv(lines[i]);
        if (f.size() < 8) throw Error("short aggregator row " + std::to_string(i));
        std::vector<Decimal> d;
        int decimals = 0;
        for (std::size_t c = 3; c < 8; ++c) {
            d.push_back(parse_decimal(f[c]));
            decimals = std::max(decimals, d.back().decimals);
        }
        const __int128 total = rescale(d[0], decimals);
        const __int128 parts = rescale(d[1], decimals) + rescale(d[2], decimals) + rescale(d[3], decimals) +
                               rescale(d[4], decimals);
        if (total != parts) throw Error("price components of " + f[0] + " do not sum to c_k");
        out << f[0] << ',' << f[1];
        for (std::size_t c = 3; c < 8; ++c) out << ',' << f[c];
        const double ck = std::stod(f[3]);
        for (std::size_t c = 4; c < 8; ++c) out << ',' << format_number(ck != 0.0 ? std::stod(f[c]) / ck : 0.0);
        out << '\n';
    }
    write_atomic(out_dir / "dlmp_components.csv", out.str());
}

} // namespace dlmp
