#include "dlmp/errors.hpp"
#include "dlmp/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace dlmp {

namespace {

using nlohmann::json;

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// One mt19937_64 stream per (aggregator, prosumer) pair.
std::mt19937_64 prosumer_stream(std::uint64_t seed, std::size_t aggregator, std::size_t prosumer)
{
    const std::uint64_t key = (static_cast<std::uint64_t>(aggregator) << 32) | static_cast<std::uint64_t>(prosumer);
    return std::mt19937_64(splitmix64(splitmix64(seed) + key));
}

double unit_draw(std::mt19937_64& eng)
{
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

bool contains(const int* first, const int* last, int bus)
{
    return std::find(first, last, bus) != last;
}

void apply_network_overrides(RadialNetwork& net, const ScenarioOverrides& o)
{
    if (o.epsilon) {
        if (!(*o.epsilon > 0.0)) throw DomainError("epsilon must be positive");
        net.epsilon = *o.epsilon;
    }
    for (const auto& [bus, lim] : o.p_limits) {
        if (!(lim > 0.0)) throw DomainError("line limits must be positive");
        const int k = net.internal_node(bus);
        if (k == 0) throw DomainError("no line feeds the substation");
        net.p_limit[static_cast<std::size_t>(k - 1)] = lim;
    }
    for (const auto& [bus, lim] : o.q_limits) {
        if (!(lim > 0.0)) throw DomainError("line limits must be positive");
        const int k = net.internal_node(bus);
        if (k == 0) throw DomainError("no line feeds the substation");
        net.q_limit[static_cast<std::size_t>(k - 1)] = lim;
    }
}

void validate(const Scenario& s)
{
    const auto& r = s.ranges;
    if (!(r.a_min > 0.0 && r.a_max >= r.a_min)) throw DomainError("utility scale range must satisfy 0 < a_min <= a_max");
    if (!(r.b_min > 0.0 && r.b_max >= r.b_min)) throw DomainError("curvature range must satisfy 0 < b_min <= b_max");
    if (!(r.g_min >= 0.0 && r.g_max >= r.g_min)) throw DomainError("PV range must satisfy 0 <= g_min <= g_max");
    if (!(s.wholesale_cost > 0.0)) throw DomainError("wholesale cost must be positive");
    if (!(s.procurement >= 0.0)) throw DomainError("procurement must be nonnegative");
    if (!(s.power_factor > 0.0 && s.power_factor <= 1.0)) throw DomainError("power factor must lie in (0, 1]");
    if (!(s.fairness_weight >= 0.0)) throw DomainError("fairness weight must be nonnegative");
    if (!(s.solver.eta > 0.0)) throw DomainError("eta must be positive");
    if (!(s.solver.relaxation > 0.0 && s.solver.relaxation <= 1.0)) throw DomainError("relaxation must lie in (0, 1]");
    if (s.aggregators.size() != s.network.aggregator_count())
        throw DomainError("scenario aggregators do not match the feeder placements");
    for (std::size_t k = 0; k < s.aggregators.size(); ++k) {
        const auto& a = s.aggregators[k];
        if (a.bus != s.network.bus_id[static_cast<std::size_t>(s.network.aggregator_node[k])])
            throw DomainError("aggregator " + a.label + " is not at its feeder placement");
        if (a.prosumers.empty()) throw DomainError("aggregator " + a.label + " has no prosumers");
    }
}

double flat_price_demand(const Scenario& s)
{
    double total = 0.0;
    for (const auto& a : s.aggregators)
        for (const auto& p : a.prosumers) total += best_response(p, s.wholesale_cost);
    return total;
}

template <class T>
void read_opt(const json& j, const char* key, std::optional<T>& out)
{
    if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace

const char* to_string(ScenarioKind kind) noexcept
{
    switch (kind) {
    case ScenarioKind::I: return "I";
    case ScenarioKind::II: return "II";
    case ScenarioKind::III: return "III";
    case ScenarioKind::custom: return "custom";
    }
    return "custom";
}

ScenarioKind parse_scenario_kind(const std::string& text)
{
    if (text == "I") return ScenarioKind::I;
    if (text == "II") return ScenarioKind::II;
    if (text == "III") return ScenarioKind::III;
    if (text == "custom") return ScenarioKind::custom;
    throw DomainError("unknown scenario kind '" + text + "'");
}

ScenarioOverrides overrides_from_json(const json& j)
{
    ScenarioOverrides o;
    read_opt(j, "feeder", o.feeder_path);
    read_opt(j, "prosumers", o.prosumers);
    read_opt(j, "large_prosumers", o.large_prosumers);
    read_opt(j, "a_min", o.a_min);
    read_opt(j, "a_max", o.a_max);
    read_opt(j, "b_min", o.b_min);
    read_opt(j, "b_max", o.b_max);
    read_opt(j, "g_min", o.g_min);
    read_opt(j, "g_max", o.g_max);
    read_opt(j, "fairness_weight", o.fairness_weight);
    read_opt(j, "eta", o.eta);
    read_opt(j, "relaxation", o.relaxation);
    read_opt(j, "wholesale_cost", o.wholesale_cost);
    read_opt(j, "procurement_fraction", o.procurement_fraction);
    read_opt(j, "procurement", o.procurement);
    read_opt(j, "epsilon", o.epsilon);
    read_opt(j, "power_factor", o.power_factor);
    read_opt(j, "tol_p_per_aggregator", o.tol_p_per_aggregator);
    read_opt(j, "tol_feas", o.tol_feas);
    read_opt(j, "max_iter", o.max_iter);
    read_opt(j, "trace_stride", o.trace_stride);
    if (j.contains("p_limits"))
        for (const auto& [bus, v] : j.at("p_limits").items()) o.p_limits[std::stoi(bus)] = v.get<double>();
    if (j.contains("q_limits"))
        for (const auto& [bus, v] : j.at("q_limits").items()) o.q_limits[std::stoi(bus)] = v.get<double>();
    return o;
}

Scenario generate_scenario(ScenarioKind kind, std::uint64_t seed, const ScenarioOverrides& o)
{
    if (kind == ScenarioKind::custom) throw DomainError("custom scenarios are loaded from files");
    Scenario s;
    s.kind = kind;
    s.seed = seed;
    s.feeder_path = o.feeder_path.value_or(bundled_feeder_path());
    s.network = load_feeder(s.feeder_path);
    apply_network_overrides(s.network, o);

    s.ranges.a_min = o.a_min.value_or(s.ranges.a_min);
    s.ranges.a_max = o.a_max.value_or(s.ranges.a_max);
    s.ranges.b_min = o.b_min.value_or(s.ranges.b_min);
    s.ranges.b_max = o.b_max.value_or(s.ranges.b_max);
    s.ranges.g_min = o.g_min.value_or(s.ranges.g_min);
    s.ranges.g_max = o.g_max.value_or(s.ranges.g_max);
    s.fairness_weight = o.fairness_weight.value_or(s.fairness_weight);
    s.wholesale_cost = o.wholesale_cost.value_or(s.wholesale_cost);
    s.procurement_fraction = o.procurement_fraction.value_or(s.procurement_fraction);
    s.power_factor = o.power_factor.value_or(s.power_factor);
    s.solver.eta = o.eta.value_or(s.solver.eta);
    s.solver.relaxation = o.relaxation.value_or(s.solver.relaxation);
    s.solver.tol_p_per_aggregator = o.tol_p_per_aggregator.value_or(s.solver.tol_p_per_aggregator);
    s.solver.tol_feas = o.tol_feas.value_or(s.solver.tol_feas);
    s.solver.max_iter = o.max_iter.value_or(s.solver.max_iter);
    s.solver.trace_stride = o.trace_stride.value_or(s.solver.trace_stride);

    const int base = o.prosumers.value_or(10);
    const int large = o.large_prosumers.value_or(20);
    if (base < 1 || large < 1) throw DomainError("every aggregator needs at least one prosumer");
    if (!(s.procurement_fraction > 0.0)) throw DomainError("procurement fraction must be positive");

    const auto& net = s.network;
    std::vector<int> buses;
    for (int node : net.aggregator_node) buses.push_back(net.bus_id[static_cast<std::size_t>(node)]);
    auto require = [&](const int* first, const int* last) {
        for (const int* b = first; b != last; ++b)
            if (std::find(buses.begin(), buses.end(), *b) == buses.end())
                throw DomainError("scenario " + std::string(to_string(kind)) + " needs an aggregator at bus " +
                                  std::to_string(*b));
    };
    if (kind == ScenarioKind::II) require(std::begin(scenario_two_buses), std::end(scenario_two_buses));
    if (kind == ScenarioKind::III) require(std::begin(scenario_three_buses), std::end(scenario_three_buses));

    const auto& r = s.ranges;
    for (std::size_t k = 0; k < buses.size(); ++k) {
        AggregatorSetup a;
        a.label = net.aggregator_label[k];
        a.bus = buses[k];
        const bool is_large =
            kind == ScenarioKind::II && contains(std::begin(scenario_two_buses), std::end(scenario_two_buses), a.bus);
        const bool has_pv = kind == ScenarioKind::III &&
                            contains(std::begin(scenario_three_buses), std::end(scenario_three_buses), a.bus);
        const int count = is_large ? large : base;
        for (int i = 0; i < count; ++i) {
            auto eng = prosumer_stream(seed, k, static_cast<std::size_t>(i));
            Prosumer p;
            p.a = r.a_min + (r.a_max - r.a_min) * unit_draw(eng);
            p.b = r.b_min + (r.b_max - r.b_min) * unit_draw(eng);
            const double g = r.g_min + (r.g_max - r.g_min) * (1.0 - unit_draw(eng));
            p.g = has_pv ? g : 0.0;
            a.prosumers.push_back(p);
        }
        s.aggregators.push_back(std::move(a));
    }
    s.procurement = o.procurement.value_or(s.procurement_fraction * flat_price_demand(s));
    validate(s);
    return s;
}

json scenario_to_json(const Scenario& s)
{
    json j;
    j["kind"] = to_string(s.kind);
    j["seed"] = s.seed;
    j["feeder_path"] = s.feeder_path;
    j["feeder"] = serialize_feeder(s.network);
    j["ranges"] = {{"a_min", s.ranges.a_min}, {"a_max", s.ranges.a_max}, {"b_min", s.ranges.b_min},
                   {"b_max", s.ranges.b_max}, {"g_min", s.ranges.g_min}, {"g_max", s.ranges.g_max},
                   {"note", "default draw ranges, not published values"}};
    json aggs = json::array();
    for (const auto& a : s.aggregators) {
        json pros = json::array();
        for (const auto& p : a.prosumers) pros.push_back({p.a, p.b, p.g});
        aggs.push_back({{"label", a.label}, {"bus", a.bus}, {"prosumers", pros}});
    }
    j["aggregators"] = aggs;
    j["fairness_weight"] = s.fairness_weight;
    j["wholesale_cost"] = s.wholesale_cost;
    j["procurement_fraction"] = s.procurement_fraction;
    j["procurement"] = s.procurement;
    j["power_factor"] = s.power_factor;
    j["solver"] = {{"eta", s.solver.eta},
                   {"relaxation", s.solver.relaxation},
                   {"tol_p_per_aggregator", s.solver.tol_p_per_aggregator},
                   {"tol_feas", s.solver.tol_feas},
                   {"window", s.solver.window},
                   {"max_iter", s.solver.max_iter},
                   {"trace_stride", s.solver.trace_stride}};
    return j;
}

Scenario scenario_from_json(const json& j)
{
    if (!j.contains("aggregators")) {
        const auto kind = parse_scenario_kind(j.value("kind", std::string("I")));
        const auto seed = j.value("seed", std::uint64_t{0});
        return generate_scenario(kind, seed, overrides_from_json(j.value("overrides", json::object())));
    }
    Scenario s;
    s.kind = parse_scenario_kind(j.value("kind", std::string("custom")));
    s.seed = j.value("seed", std::uint64_t{0});
    s.feeder_path = j.value("feeder_path", std::string());
    if (j.contains("feeder"))
        s.network = parse_feeder(j.at("feeder").get<std::string>());
    else
        s.network = load_feeder(s.feeder_path.empty() ? bundled_feeder_path() : s.feeder_path);
    if (j.contains("ranges")) {
        const auto& r = j.at("ranges");
        s.ranges.a_min = r.value("a_min", s.ranges.a_min);
        s.ranges.a_max = r.value("a_max", s.ranges.a_max);
        s.ranges.b_min = r.value("b_min", s.ranges.b_min);
        s.ranges.b_max = r.value("b_max", s.ranges.b_max);
        s.ranges.g_min = r.value("g_min", s.ranges.g_min);
        s.ranges.g_max = r.value("g_max", s.ranges.g_max);
    }
    for (const auto& a : j.at("aggregators")) {
        AggregatorSetup setup;
        setup.label = a.at("label").get<std::string>();
        setup.bus = a.at("bus").get<int>();
        for (const auto& p : a.at("prosumers"))
            setup.prosumers.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
        s.aggregators.push_back(std::move(setup));
    }
    s.fairness_weight = j.value("fairness_weight", s.fairness_weight);
    s.wholesale_cost = j.value("wholesale_cost", s.wholesale_cost);
    s.procurement_fraction = j.value("procurement_fraction", s.procurement_fraction);
    s.power_factor = j.value("power_factor", s.power_factor);
    if (j.contains("solver")) {
        const auto& v = j.at("solver");
        s.solver.eta = v.value("eta", s.solver.eta);
        s.solver.relaxation = v.value("relaxation", s.solver.relaxation);
        s.solver.tol_p_per_aggregator = v.value("tol_p_per_aggregator", s.solver.tol_p_per_aggregator);
        s.solver.tol_feas = v.value("tol_feas", s.solver.tol_feas);
        s.solver.window = v.value("window", s.solver.window);
        s.solver.max_iter = v.value("max_iter", s.solver.max_iter);
        s.solver.trace_stride = v.value("trace_stride", s.solver.trace_stride);
    }
    s.procurement = j.contains("procurement") ? j.at("procurement").get<double>()
                                              : s.procurement_fraction * flat_price_demand(s);
    validate(s);
    return s;
}

Scenario load_scenario_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open scenario file " + path);
    return scenario_from_json(json::parse(in));
}

std::string scenario_digest(const Scenario& s)
{
    const std::string text = scenario_to_json(s).dump();
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

MarketSetup prepare_market(const Scenario& s)
{
    validate(s);
    MarketSetup m;
    const auto& net = s.network;
    m.topology = build_topology(net);
    for (std::size_t k = 0; k < s.aggregators.size(); ++k)
        m.aggregators.emplace_back(s.aggregators[k].label, net.aggregator_node[k], s.aggregators[k].prosumers);
    const auto na = static_cast<Eigen::Index>(m.aggregators.size());
    m.reference_demand.resize(na);
    for (Eigen::Index k = 0; k < na; ++k)
        m.reference_demand(k) = m.aggregators[static_cast<std::size_t>(k)].demand(s.wholesale_cost);
    const Eigen::VectorXd tan_phi =
        tan_phi_from_power_factor(Eigen::VectorXd::Constant(na, s.power_factor));
    m.sensitivity = linearize_at(net, m.topology, m.reference_demand, tan_phi);
    m.constraints = assemble_constraints(m.sensitivity, net, s.procurement, s.wholesale_cost);
    return m;
}

MarketConfig market_config(const Scenario& s)
{
    MarketConfig c;
    c.eta = s.solver.eta;
    c.fairness_weight = s.fairness_weight;
    c.relaxation = s.solver.relaxation;
    c.tol_p_per_aggregator = s.solver.tol_p_per_aggregator;
    c.tol_feas = s.solver.tol_feas;
    c.window = s.solver.window;
    c.max_iter = s.solver.max_iter;
    c.trace_stride = s.solver.trace_stride;
    c.initial_price = s.wholesale_cost;
    return c;
}

RunRecord run_scenario(const Scenario& s)
{
    const auto t0 = std::chrono::steady_clock::now();
    RunRecord rec;
    rec.digest = scenario_digest(s);
    rec.config = scenario_to_json(s);
    const MarketSetup m = prepare_market(s);
    for (const auto& a : s.aggregators) {
        rec.labels.push_back(a.label);
        rec.buses.push_back(a.bus);
        rec.sizes.push_back(a.prosumers.size());
    }
    rec.reference_violations = m.constraints.reference_violations;
    rec.result = run_market(m.constraints, m.aggregators, market_config(s));
    const Eigen::VectorXd q = m.sensitivity.tan_phi.cwiseProduct(rec.result.demand);
    rec.linearization = linearization_error(s.network, m.sensitivity, rec.result.demand, q);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

double price_of_fairness(double welfare_at_c, double welfare_at_0)
{
    if (!(welfare_at_0 > 0.0)) throw DomainError("baseline welfare must be positive");
    return 1.0 - welfare_at_c / welfare_at_0;
}

double price_spread(const Eigen::VectorXd& c)
{
    return c.size() ? c.maxCoeff() - c.minCoeff() : 0.0;
}

std::vector<double> fairness_grid(double from, double to, double step)
{
    if (!(step > 0.0) || !(to >= from)) throw DomainError("fairness grid needs step > 0 and to >= from");
    const auto n = static_cast<long>(std::llround((to - from) / step));
    std::vector<double> g;
    for (long i = 0; i <= n; ++i) g.push_back(std::round((from + static_cast<double>(i) * step) * 1e12) / 1e12);
    return g;
}

SweepResult run_sweep(const Scenario& s, const std::vector<double>& grid)
{
    std::vector<double> sorted = grid;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    if (sorted.empty()) throw DomainError("empty fairness grid");

    SweepResult out;
    for (double c : sorted) {
        Scenario run = s;
        run.fairness_weight = c;
        out.runs.push_back(run_scenario(run));
    }
    double w0 = 0.0;
    if (sorted.front() == 0.0) {
        w0 = out.runs.front().result.total_welfare;
    } else {
        Scenario base = s;
        base.fairness_weight = 0.0;
        w0 = run_scenario(base).result.total_welfare;
    }
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const auto& r = out.runs[i].result;
        SweepRow row;
        row.fairness_weight = sorted[i];
        row.jain = r.jain;
        row.welfare = r.total_welfare;
        row.pof = price_of_fairness(r.total_welfare, w0);
        row.spread = price_spread(r.price);
        row.iterations = r.iterations;
        row.converged = r.converged();
        out.rows.push_back(row);
    }
    return out;
}

} // namespace dlmp
