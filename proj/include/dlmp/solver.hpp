#pragma once

#include "dlmp/agents.hpp"
#include "dlmp/fairness.hpp"
#include "dlmp/powerflow.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dlmp {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class RowScaling {
    none,     // rows used as assembled
    unit_max, // each row divided by its largest coefficient magnitude; budget by c0
};

// Constraint rows as iterated by the market loop. Inequality rows are stacked
// [voltage lower; voltage upper; flow] and stored pre-scaled.
struct ScaledConstraints {
    RowMatrix g;
    Eigen::VectorXd h;
    Eigen::VectorXd row_scale;
    Eigen::VectorXd balance_row; // scaled
    double balance_constant = 0.0; // scaled (c_0^{P0} - P_0)
    double balance_scale = 1.0;
    double budget_constant = 0.0; // scaled c_0 P_0
    double budget_scale = 1.0;
    std::size_t voltage_rows = 0;
    std::size_t flow_rows = 0;
};

ScaledConstraints scale_constraints(const ConstraintSet& cons, RowScaling scaling);

struct DualValues {
    Eigen::VectorXd voltage_lower;
    Eigen::VectorXd voltage_upper;
    Eigen::VectorXd flow;
    double balance = 0.0;
    double budget = 0.0;

    Eigen::VectorXd stacked() const;
};

struct SolverState {
    Eigen::VectorXd price;
    Eigen::VectorXd demand;
    // Duals in scaled-row units (physical = row scale * stored).
    Eigen::VectorXd inequality_dual;
    double balance_dual = 0.0;
    double budget_dual = 0.0;
    Eigen::VectorXd row_scale;
    double balance_scale = 1.0;
    double budget_scale = 1.0;
    double eta = 1e-2;
    double fairness_weight = 0.0;
    long iteration = 0;
    int small_steps = 0;

    DualValues physical_duals() const;
};

// Flat start at unit cost c0. Inequality duals start at zero; the balance dual
// starts where the balance row alone reproduces c0 on average.
SolverState initial_state(const ConstraintSet& cons, const ScaledConstraints& sc, double eta,
                          double fairness_weight, double initial_price);

struct DlmpBreakdown {
    Eigen::VectorXd voltage;     // c_V
    Eigen::VectorXd congestion;  // c_C
    Eigen::VectorXd energy_loss; // c_{E+L}, includes any budget term
    Eigen::VectorXd fairness;    // c_F

    Eigen::VectorXd total() const { return voltage + congestion + energy_loss + fairness; }
};

// Updates all duals from the residuals at p (budget row uses state.price).
void dual_update(SolverState& state, const ScaledConstraints& sc, const Eigen::VectorXd& p);

// New unit costs from the current duals, the residuals at p and the fairness
// gradient. Throws DivergenceError on a non-finite component.
DlmpBreakdown price_update(const SolverState& state, const ScaledConstraints& sc,
                           const Eigen::VectorXd& p, const Eigen::VectorXd& grad_j);

double augmented_lagrangian(const SolverState& state, const ScaledConstraints& sc,
                            const Eigen::VectorXd& p, double welfare, double jain);

struct KktResiduals {
    double stationarity = 0.0; // relative to max(1, max|c|)
    double primal = 0.0;
    double dual = 0.0;
    double complementarity = 0.0;

    double worst() const;
};

// c is the marginal welfare at p (the broadcast price for a market state).
KktResiduals kkt_report(const ConstraintSet& cons, const Eigen::VectorXd& p, const Eigen::VectorXd& c,
                        const DualValues& duals, double fairness_weight, const Eigen::VectorXd& grad_j);
KktResiduals kkt_report(const SolverState& state, const ConstraintSet& cons, const Eigen::VectorXd& p,
                        const Eigen::VectorXd& sizes, double deadband = default_mask_deadband);

struct MarketConfig {
    double eta = 1e-2;
    double fairness_weight = 0.0;
    double relaxation = 1.0;            // c <- (1 - w) c + w c_new
    double tol_p_per_aggregator = 1e-5; // tol_p = this * |A|
    int window = 100;
    long max_iter = 500000;
    double tol_feas = 1e-4;
    RowScaling scaling = RowScaling::unit_max;
    long trace_stride = 1000;
    double mask_deadband = default_mask_deadband;
    std::optional<double> initial_price; // defaults to c0
};

struct TraceRecord {
    long iteration = 0;
    double step = 0.0; // ||dp||_1
    double lagrangian = 0.0;
    double max_violation = 0.0;
    double jain = 0.0;
};

struct Slacks {
    double voltage_lower = 0.0; // max row value
    double voltage_upper = 0.0;
    double flow = 0.0;
    double balance = 0.0;       // |residual|
    double budget = 0.0;        // -c^T p + c0 P0

    double worst() const;
};

enum class MarketStatus { converged, max_iter, diverged };
const char* to_string(MarketStatus s) noexcept;

struct MarketResult {
    MarketStatus status = MarketStatus::max_iter;
    long iterations = 0;
    Eigen::VectorXd demand;
    Eigen::VectorXd price;
    DlmpBreakdown breakdown;
    double jain = 0.0;
    Eigen::VectorXd welfare; // per aggregator
    double total_welfare = 0.0;
    double objective = 0.0;  // total welfare + (C/2) J
    Slacks slacks;
    DualValues duals;
    KktResiduals kkt;
    std::vector<TraceRecord> trace;
    double max_decomposition_error = 0.0; // over all iterations, relative
    double min_inequality_dual = 0.0;     // over all iterations, incl. budget
    std::string message;

    bool converged() const { return status == MarketStatus::converged; }
};

MarketResult run_market(const ConstraintSet& cons, std::span<const Aggregator> aggregators,
                        const MarketConfig& config);

struct ReferenceOptions {
    long max_iter = 200000;
    double step_tol = 1e-13;
    double active_tol = 1e-7;
    double projection_tol = 1e-13;
};

struct ReferenceSolution {
    Eigen::VectorXd demand;
    Eigen::VectorXd price; // marginal welfare at demand
    Eigen::VectorXd welfare;
    double total_welfare = 0.0;
    double jain = 0.0;
    double objective = 0.0;
    DualValues duals;
    KktResiduals kkt;
    double budget_residual = 0.0;
    long iterations = 0;
};

// Full-information maximization of total welfare + (C/2) J over the linear
// constraint set. Small instances only (at most 6 aggregators).
ReferenceSolution solve_reference(const ConstraintSet& cons, std::span<const Aggregator> aggregators,
                                  double fairness_weight, const ReferenceOptions& opt = {});

} // namespace dlmp
