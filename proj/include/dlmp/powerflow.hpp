#pragma once

#include "dlmp/network.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace dlmp {

// Per-line vectors have length N; entry i is the line into node i + 1, and
// voltage/angle entry i belongs to node i + 1. Flows are receiving-end values.
struct PowerFlowSolution {
    Eigen::VectorXd voltage;
    Eigen::VectorXd angle;
    Eigen::VectorXd p_flow;
    Eigen::VectorXd q_flow;
    Eigen::VectorXd p_loss;
    Eigen::VectorXd q_loss;
    double p_import = 0.0;
    double q_import = 0.0;
    int sweeps = 0;
    // Largest sending-end mismatch between accumulated flows and the branch
    // equations evaluated from the node voltages.
    double max_residual = 0.0;
};

struct AcOptions {
    double tolerance = 1e-14; // on max |V_new - V_old|
    int max_sweeps = 10000;
    double damping = 1.0;
    double collapse_floor = 0.5;
};

// p, q: per-aggregator injections drawn from the grid (demand positive).
PowerFlowSolution solve_ac(const RadialNetwork& net, const Eigen::VectorXd& p,
                           const Eigen::VectorXd& q, const AcOptions& opt = {});

struct LossJacobians {
    // N x A blocks: d(loss of line l)/d(injection of aggregator k).
    Eigen::MatrixXd p_by_p; // J^L_P
    Eigen::MatrixXd q_by_q; // J^L_Q
    Eigen::MatrixXd p_by_q;
    Eigen::MatrixXd q_by_p;
};

LossJacobians loss_jacobians(const RadialNetwork& net, const Eigen::VectorXd& p0,
                             const Eigen::VectorXd& q0, double h = 1e-5,
                             const AcOptions& opt = {});

struct SensitivityModel {
    Eigen::VectorXd b_r;            // r/(r^2 + x^2)
    Eigen::VectorXd b_x;            // x/(r^2 + x^2)
    Eigen::MatrixXd m;              // 2N x 2N
    Eigen::VectorXd n;              // 2N substation offset
    Eigen::MatrixXd inverse;        // M^-1
    LossJacobians jacobians;
    Eigen::VectorXd tan_phi;        // per aggregator
    Eigen::VectorXd p_ref;          // expansion point
    PowerFlowSolution reference;

    // Affine maps of p (q = tan_phi o p eliminated): quantity = slope p + offset.
    Eigen::MatrixXd voltage;
    Eigen::VectorXd voltage_offset;
    Eigen::MatrixXd p_flow;
    Eigen::VectorXd p_flow_offset;
    Eigen::MatrixXd q_flow;
    Eigen::VectorXd q_flow_offset;
    Eigen::MatrixXd p_loss;
    Eigen::VectorXd p_loss_offset;
    Eigen::VectorXd import_row;     // c^{P0}
    double import_offset = 0.0;     // c_0^{P0}
};

Eigen::VectorXd tan_phi_from_power_factor(const Eigen::VectorXd& power_factor);

// reference must be solve_ac(net, p_ref, tan_phi o p_ref).
SensitivityModel linearize(const RadialNetwork& net, const TopologyOperators& tops,
                           const PowerFlowSolution& reference, const Eigen::VectorXd& p_ref,
                           const Eigen::VectorXd& tan_phi, const AcOptions& opt = {});

// Convenience: AC solve at p_ref followed by linearize.
SensitivityModel linearize_at(const RadialNetwork& net, const TopologyOperators& tops,
                              const Eigen::VectorXd& p_ref, const Eigen::VectorXd& tan_phi,
                              const AcOptions& opt = {});

// Rows in physical units, each of the form slope p + offset <= 0 (= 0 for the
// balance row). Flow rows are ordered [P upper; P lower; Q upper; Q lower].
struct ConstraintSet {
    Eigen::MatrixXd voltage;        // C^V
    Eigen::VectorXd voltage_lower;  // c^V_l: -C^V p + c^V_l <= 0
    Eigen::VectorXd voltage_upper;  // c^V_u:  C^V p + c^V_u <= 0
    Eigen::MatrixXd flow;           // C^S, 4N x A
    Eigen::VectorXd flow_offset;    // c^S_0
    Eigen::VectorXd balance_row;    // c^{P0}
    double balance_offset = 0.0;    // c_0^{P0}
    double procurement = 0.0;       // P_0
    double wholesale_cost = 1.0;    // c_0
    // Rows violated at the expansion point, as "<block>[<bus id>]" entries.
    std::vector<std::string> reference_violations;

    std::size_t aggregator_count() const { return static_cast<std::size_t>(voltage.cols()); }
    std::size_t node_count() const { return static_cast<std::size_t>(voltage.rows()); }
    std::size_t inequality_count() const { return 6 * node_count(); }

    // Stacked [lower; upper; flow] matrix and offsets.
    Eigen::MatrixXd inequality_matrix() const;
    Eigen::VectorXd inequality_offset() const;
    Eigen::VectorXd inequality_rows(const Eigen::VectorXd& p) const;
    double balance_residual(const Eigen::VectorXd& p) const;
    // -c^T p + c_0 P_0 (<= 0 when the budget is met)
    double budget_residual(const Eigen::VectorXd& c, const Eigen::VectorXd& p) const;
    // max(0, inequality rows, |balance|, budget)
    double max_violation(const Eigen::VectorXd& c, const Eigen::VectorXd& p) const;
};

struct ConstraintOptions {
    bool strict_reference = false; // throw InfeasibleError on reference violations
};

ConstraintSet assemble_constraints(const SensitivityModel& sens, const RadialNetwork& net,
                                   double procurement, double wholesale_cost,
                                   const ConstraintOptions& opt = {});

struct ErrorRow {
    std::string quantity; // "V", "P", "Q", "LP"
    int bus = 0;          // external id of the receiving node
    double predicted = 0.0;
    double actual = 0.0;
    double abs_error = 0.0;
};

struct LinearizationErrorReport {
    double max_voltage = 0.0;
    double max_p_flow = 0.0;
    double max_q_flow = 0.0;
    double max_p_loss = 0.0;
    PowerFlowSolution ac;
    std::vector<ErrorRow> rows;
};

LinearizationErrorReport linearization_error(const RadialNetwork& net, const SensitivityModel& sens,
                                             const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                                             const AcOptions& opt = {});

} // namespace dlmp
