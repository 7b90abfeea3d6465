#pragma once

#include "dlmp/agents.hpp"
#include "dlmp/network.hpp"
#include "dlmp/powerflow.hpp"
#include "dlmp/solver.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dlmp {

enum class ScenarioKind { I, II, III, custom };

const char* to_string(ScenarioKind kind) noexcept;
ScenarioKind parse_scenario_kind(const std::string& text);

// Uniform draw ranges for prosumer parameters. These defaults are not taken
// from published data.
struct ProsumerRanges {
    double a_min = 1.0, a_max = 4.0;
    double b_min = 0.5, b_max = 2.0;
    double g_min = 0.0, g_max = 0.05;
};

struct SolverSettings {
    double eta = 1e-2;
    double relaxation = 0.1;
    double tol_p_per_aggregator = 1e-5;
    double tol_feas = 1e-4;
    int window = 100;
    long max_iter = 500000;
    long trace_stride = 100;
};

struct ScenarioOverrides {
    std::optional<std::string> feeder_path;
    std::optional<int> prosumers;       // default G_k
    std::optional<int> large_prosumers; // G_k at the Scenario-II nodes
    std::optional<double> a_min, a_max, b_min, b_max, g_min, g_max;
    std::optional<double> fairness_weight;
    std::optional<double> eta;
    std::optional<double> relaxation;
    std::optional<double> wholesale_cost;
    std::optional<double> procurement_fraction;
    std::optional<double> procurement;
    std::optional<double> epsilon;
    std::optional<double> power_factor;
    std::optional<double> tol_p_per_aggregator;
    std::optional<double> tol_feas;
    std::optional<long> max_iter;
    std::optional<long> trace_stride;
    std::map<int, double> p_limits; // by external bus id of the receiving node
    std::map<int, double> q_limits;
};

ScenarioOverrides overrides_from_json(const nlohmann::json& j);

struct AggregatorSetup {
    std::string label;
    int bus = 0; // external id
    std::vector<Prosumer> prosumers;
};

struct Scenario {
    ScenarioKind kind = ScenarioKind::I;
    std::uint64_t seed = 0;
    std::string feeder_path;
    RadialNetwork network;
    ProsumerRanges ranges;
    std::vector<AggregatorSetup> aggregators;
    double fairness_weight = 0.0;
    double wholesale_cost = 1.0;
    double procurement_fraction = 0.9;
    double procurement = 0.0; // P_0
    double power_factor = 0.95;
    SolverSettings solver;
};

inline constexpr int scenario_two_buses[] = {12, 25, 27, 36};
inline constexpr int scenario_three_buses[] = {23, 26, 31};

Scenario generate_scenario(ScenarioKind kind, std::uint64_t seed, const ScenarioOverrides& overrides = {});

nlohmann::json scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const nlohmann::json& j);
// Either a full scenario dump or {"kind", "seed", "overrides"}.
Scenario load_scenario_file(const std::string& path);
// FNV-1a over the canonical JSON form, as 16 hex digits.
std::string scenario_digest(const Scenario& s);

struct MarketSetup {
    TopologyOperators topology;
    Eigen::VectorXd reference_demand;
    SensitivityModel sensitivity;
    ConstraintSet constraints;
    std::vector<Aggregator> aggregators;
};

MarketSetup prepare_market(const Scenario& s);
MarketConfig market_config(const Scenario& s);

struct RunRecord {
    std::string digest;
    nlohmann::json config;
    std::vector<std::string> labels;
    std::vector<int> buses;
    std::vector<std::size_t> sizes;
    MarketResult result;
    LinearizationErrorReport linearization;
    std::vector<std::string> reference_violations;
    double seconds = 0.0;
};

RunRecord run_scenario(const Scenario& s);

double price_of_fairness(double welfare_at_c, double welfare_at_0);
double price_spread(const Eigen::VectorXd& c);

struct SweepRow {
    double fairness_weight = 0.0;
    double jain = 0.0;
    double welfare = 0.0;
    double pof = 0.0;
    double spread = 0.0;
    long iterations = 0;
    bool converged = false;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::vector<RunRecord> runs;
};

std::vector<double> fairness_grid(double from, double to, double step);
SweepResult run_sweep(const Scenario& s, const std::vector<double>& grid);

// Writes aggregators.csv, trace.csv and summary.json.
void emit_results(const RunRecord& record, const std::filesystem::path& out_dir);
void emit_sweep(const Scenario& s, const SweepResult& sweep, const std::filesystem::path& out_dir);
void emit_linearization_report(const RunRecord& record, const std::filesystem::path& out_dir);
// Re-reads a run directory and writes dlmp_components.csv with shares.
void decompose_run(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir);

std::string format_number(double v); // 12 significant digits
std::vector<std::string> format_components(const std::vector<double>& parts);
std::string sweep_csv(const std::vector<SweepRow>& rows);
std::vector<SweepRow> parse_sweep_csv(const std::string& text);

} // namespace dlmp
