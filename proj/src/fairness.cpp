#include "dlmp/fairness.hpp"

#include "dlmp/errors.hpp"

#include <cmath>

namespace dlmp {

namespace {

// Sums over y / max|y|. Equal entries become exactly 1, so m equal shares out
// of n give m/n without rounding.
struct Moments {
    double scale = 0.0;
    double s1 = 0.0;
    double s2 = 0.0;
};

Moments moments(const Eigen::VectorXd& y)
{
    Moments r;
    r.scale = y.cwiseAbs().maxCoeff();
    if (!(r.scale > 0.0)) return r;
    for (Eigen::Index k = 0; k < y.size(); ++k) {
        const double z = y(k) / r.scale;
        r.s1 += z;
        r.s2 += z * z;
    }
    return r;
}

} // namespace

FairnessContext make_fairness_context(const Eigen::VectorXd& p, const Eigen::VectorXd& c,
                                      const Eigen::VectorXd& sizes, double deadband)
{
    if (p.size() != c.size() || p.size() != sizes.size())
        throw DomainError("fairness context dimensions differ");
    FairnessContext ctx;
    ctx.deadband = deadband;
    ctx.sizes = sizes;
    ctx.prices = c;
    ctx.mask = Eigen::VectorXd::Zero(p.size());
    ctx.weights = Eigen::VectorXd::Zero(p.size());
    for (Eigen::Index k = 0; k < p.size(); ++k) {
        if (!(p(k) > deadband)) continue;
        if (!(c(k) > 0.0) || !(sizes(k) > 0.0))
            throw DomainError("fairness weights need positive prices and sizes");
        ctx.mask(k) = 1.0;
        ctx.weights(k) = 1.0 / (c(k) * sizes(k));
    }
    return ctx;
}

double jain_scalar(const Eigen::VectorXd& x)
{
    if (x.size() == 0 || (x.array() < 0.0).any()) throw DomainError("Jain index needs a nonnegative vector");
    const Moments mo = moments(x);
    if (!(mo.s2 > 0.0)) throw DomainError("Jain index undefined for an all-zero vector");
    return mo.s1 * mo.s1 / (static_cast<double>(x.size()) * mo.s2);
}

double jain_masked(const FairnessContext& ctx, const Eigen::VectorXd& p)
{
    const double m = ctx.active_count();
    if (!(m > 0.0)) throw DomainError("fairness mask is empty");
    const Moments mo = moments(ctx.weights.cwiseProduct(p));
    if (!(mo.s2 > 0.0)) throw DomainError("Jain index undefined for an all-zero allocation");
    return mo.s1 * mo.s1 / (m * mo.s2);
}

Eigen::VectorXd jain_gradient(const FairnessContext& ctx, const Eigen::VectorXd& p,
                              BoundaryPolicy policy)
{
    const double m = ctx.active_count();
    if (!(m > 0.0)) throw DomainError("fairness mask is empty");
    if (policy == BoundaryPolicy::reject)
        for (Eigen::Index k = 0; k < p.size(); ++k)
            if (std::abs(p(k)) <= ctx.deadband)
                throw NonsmoothPointError("p[" + std::to_string(k) + "] lies in the mask deadband");
    const Eigen::VectorXd y = ctx.weights.cwiseProduct(p);
    const Moments mo = moments(y);
    if (!(mo.s2 > 0.0)) throw DomainError("Jain index undefined for an all-zero allocation");
    const double s1 = mo.s1, s2 = mo.s2;
    Eigen::VectorXd g(p.size());
    for (Eigen::Index k = 0; k < p.size(); ++k) {
        if (ctx.mask(k) == 0.0) {
            g(k) = 0.0;
            continue;
        }
        const double z = y(k) / mo.scale;
        const double dy = (2.0 * s1 / (m * s2) - 2.0 * s1 * s1 * z / (m * s2 * s2)) / mo.scale;
        g(k) = ctx.weights(k) * dy;
    }
    return g;
}

} // namespace dlmp
