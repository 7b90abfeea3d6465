#pragma once

#include <Eigen/Dense>

namespace dlmp {

inline constexpr double default_mask_deadband = 1e-9;

struct FairnessContext {
    Eigen::VectorXd mask;    // z
    Eigen::VectorXd weights; // n = z / (c o G)
    Eigen::VectorXd sizes;   // G_k
    Eigen::VectorXd prices;  // c
    double deadband = default_mask_deadband;

    double active_count() const { return mask.sum(); }
};

FairnessContext make_fairness_context(const Eigen::VectorXd& p, const Eigen::VectorXd& c,
                                      const Eigen::VectorXd& sizes,
                                      double deadband = default_mask_deadband);

double jain_scalar(const Eigen::VectorXd& x);
double jain_masked(const FairnessContext& ctx, const Eigen::VectorXd& p);

enum class BoundaryPolicy {
    reject,    // throw NonsmoothPointError if any |p_k| <= deadband
    one_sided, // masked entries get a zero derivative
};

Eigen::VectorXd jain_gradient(const FairnessContext& ctx, const Eigen::VectorXd& p,
                              BoundaryPolicy policy = BoundaryPolicy::reject);

} // namespace dlmp
