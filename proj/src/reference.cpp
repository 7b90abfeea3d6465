#include "dlmp/errors.hpp"
#include "dlmp/solver.hpp"

#include <algorithm>
#include <cmath>

namespace dlmp {

namespace {

using Eigen::Index;

// Euclidean projection onto {x : A_i x <= b_i for inequality rows, = for
// equality rows} by Hildreth's dual coordinate ascent. Rows have unit norm.
class Projector {
public:
    Projector(Eigen::MatrixXd a, Eigen::VectorXd b, std::vector<bool> equality, double tol)
        : a_(std::move(a)), b_(std::move(b)), eq_(std::move(equality)), tol_(tol),
          nu_(Eigen::VectorXd::Zero(a_.rows()))
    {
    }

    Eigen::VectorXd operator()(const Eigen::VectorXd& y)
    {
        Eigen::VectorXd x = y - a_.transpose() * nu_;
        for (long sweep = 0; sweep < 2000000; ++sweep) {
            double moved = 0.0, worst = 0.0;
            for (Index i = 0; i < a_.rows(); ++i) {
                const double t = a_.row(i).dot(x) - b_(i);
                const double next = eq_[static_cast<std::size_t>(i)] ? nu_(i) + t : std::max(0.0, nu_(i) + t);
                const double d = next - nu_(i);
                if (d != 0.0) x -= d * a_.row(i).transpose();
                nu_(i) = next;
                moved = std::max(moved, std::abs(d));
                worst = std::max(worst, eq_[static_cast<std::size_t>(i)] ? std::abs(t) : t);
            }
            if (moved <= tol_ && worst <= tol_) return x;
        }
        throw InfeasibleError("projection onto the constraint set did not converge");
    }

private:
    Eigen::MatrixXd a_;
    Eigen::VectorXd b_;
    std::vector<bool> eq_;
    double tol_;
    Eigen::VectorXd nu_;
};

} // namespace

ReferenceSolution solve_reference(const ConstraintSet& cons, std::span<const Aggregator> aggs,
                                  double fairness_weight, const ReferenceOptions& opt)
{
    const auto na = static_cast<Index>(aggs.size());
    if (na == 0 || na > 6) throw DomainError("reference oracle handles 1 to 6 aggregators");
    if (static_cast<std::size_t>(na) != cons.aggregator_count())
        throw DomainError("aggregator list does not match the constraint set");

    const Eigen::MatrixXd g = cons.inequality_matrix();
    const Eigen::VectorXd h = cons.inequality_offset();
    Eigen::VectorXd floor(na), sizes(na);
    for (Index k = 0; k < na; ++k) {
        floor(k) = aggs[static_cast<std::size_t>(k)].min_demand();
        sizes(k) = static_cast<double>(aggs[static_cast<std::size_t>(k)].size());
    }

    // Rows: grid inequalities, demand floors p_k >= -sum g, balance equality.
    std::vector<Eigen::RowVectorXd> rows;
    std::vector<double> rhs;
    std::vector<bool> eq;
    auto add_row = [&](Eigen::RowVectorXd r, double b, bool is_eq) {
        const double norm = r.norm();
        if (norm == 0.0) {
            if (is_eq ? std::abs(b) > 1e-12 : b < -1e-12)
                throw InfeasibleError("constant constraint row is violated");
            return;
        }
        rows.push_back(r / norm);
        rhs.push_back(b / norm);
        eq.push_back(is_eq);
    };
    for (Index i = 0; i < g.rows(); ++i) add_row(g.row(i), -h(i), false);
    for (Index k = 0; k < na; ++k) add_row(-Eigen::RowVectorXd::Unit(na, k), -floor(k), false);
    add_row(cons.balance_row.transpose(), cons.procurement - cons.balance_offset, true);
    Eigen::MatrixXd a(static_cast<Index>(rows.size()), na);
    for (std::size_t i = 0; i < rows.size(); ++i) a.row(static_cast<Index>(i)) = rows[i];
    Projector project(a, Eigen::Map<const Eigen::VectorXd>(rhs.data(), static_cast<Index>(rhs.size())), eq,
                      opt.projection_tol);

    auto clamp = [&](Eigen::VectorXd p) {
        return p.cwiseMax(floor);
    };
    auto prices = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd c(na);
        for (Index k = 0; k < na; ++k) c(k) = aggs[static_cast<std::size_t>(k)].inverse_demand(p(k));
        return c;
    };
    struct Eval {
        double value;
        Eigen::VectorXd grad, price, grad_j;
        double jain;
    };
    auto evaluate = [&](const Eigen::VectorXd& p) {
        Eval e;
        e.price = prices(p);
        e.value = 0.0;
        for (Index k = 0; k < na; ++k) e.value += aggs[static_cast<std::size_t>(k)].welfare_at_demand(p(k));
        e.grad_j = Eigen::VectorXd::Zero(na);
        e.jain = 0.0;
        const auto ctx = make_fairness_context(p, e.price, sizes);
        if (ctx.active_count() > 0.0) {
            e.jain = jain_masked(ctx, p);
            e.grad_j = jain_gradient(ctx, p, BoundaryPolicy::one_sided);
        }
        e.value += 0.5 * fairness_weight * e.jain;
        e.grad = e.price + 0.5 * fairness_weight * e.grad_j;
        return e;
    };

    Eigen::VectorXd start(na);
    for (Index k = 0; k < na; ++k) start(k) = aggs[static_cast<std::size_t>(k)].demand(cons.wholesale_cost);
    Eigen::VectorXd p = clamp(project(start));
    Eval cur = evaluate(p);
    double s = 1.0;
    long it = 0;
    for (; it < opt.max_iter; ++it) {
        s *= 2.0;
        bool accepted = false;
        Eigen::VectorXd q;
        Eval next;
        for (int tries = 0; tries < 80; ++tries, s *= 0.5) {
            q = clamp(project(p + s * cur.grad));
            next = evaluate(q);
            const Eigen::VectorXd d = q - p;
            // Armijo, or for a concave objective the directional derivative at q
            // along the step still being nonnegative.
            if (next.value >= cur.value + 1e-4 * cur.grad.dot(d) || next.grad.dot(d) >= 0.0) {
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        const double moved = (q - p).cwiseAbs().maxCoeff();
        p = q;
        cur = next;
        if (moved <= opt.step_tol * std::max(1.0, p.cwiseAbs().maxCoeff())) break;
    }

    ReferenceSolution sol;
    sol.demand = p;
    sol.price = cur.price;
    sol.iterations = it;
    sol.welfare.resize(na);
    for (Index k = 0; k < na; ++k) sol.welfare(k) = aggs[static_cast<std::size_t>(k)].welfare_at_demand(p(k));
    sol.total_welfare = sol.welfare.sum();
    sol.jain = cur.jain;
    sol.objective = cur.value;
    sol.budget_residual = cons.budget_residual(cur.price, p);

    // Multipliers: best nonnegative fit of the objective gradient over subsets
    // of the near-active rows (balance multiplier free).
    const Eigen::VectorXd vals = g * p + h;
    std::vector<Index> active;
    for (Index i = 0; i < vals.size(); ++i)
        if (vals(i) >= -opt.active_tol) active.push_back(i);
    std::vector<Index> floor_active;
    for (Index k = 0; k < na; ++k)
        if (p(k) - floor(k) <= opt.active_tol) floor_active.push_back(k);
    const std::size_t nact = active.size() + floor_active.size();
    if (nact > 16) throw DomainError("too many active rows for the multiplier fit");

    Eigen::VectorXd best_mu;
    double best_lambda = 0.0, best_res = INFINITY;
    for (unsigned long mask = 0; mask < (1ul << nact); ++mask) {
        std::vector<Eigen::VectorXd> cols;
        std::vector<std::size_t> which;
        for (std::size_t j = 0; j < nact; ++j) {
            if (!(mask >> j & 1ul)) continue;
            which.push_back(j);
            if (j < active.size())
                cols.push_back(g.row(active[j]).transpose());
            else
                cols.push_back(-Eigen::VectorXd::Unit(na, floor_active[j - active.size()]));
        }
        Eigen::MatrixXd m(na, static_cast<Index>(cols.size()) + 1);
        for (std::size_t j = 0; j < cols.size(); ++j) m.col(static_cast<Index>(j)) = cols[j];
        m.col(m.cols() - 1) = cons.balance_row;
        const Eigen::VectorXd coef = m.colPivHouseholderQr().solve(cur.grad);
        if (coef.head(m.cols() - 1).size() && coef.head(m.cols() - 1).minCoeff() < 0.0) continue;
        const double r = (m * coef - cur.grad).norm();
        if (r < best_res) {
            best_res = r;
            best_mu = Eigen::VectorXd::Zero(static_cast<Index>(nact));
            for (std::size_t j = 0; j < which.size(); ++j) best_mu(static_cast<Index>(which[j])) = coef(static_cast<Index>(j));
            best_lambda = coef(m.cols() - 1);
        }
    }
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(g.rows());
    for (std::size_t j = 0; j < active.size(); ++j) mu(active[j]) = best_mu(static_cast<Index>(j));
    Eigen::VectorXd floor_mu = Eigen::VectorXd::Zero(na);
    for (std::size_t j = 0; j < floor_active.size(); ++j)
        floor_mu(floor_active[j]) = best_mu(static_cast<Index>(active.size() + j));

    const Index n = static_cast<Index>(cons.node_count());
    sol.duals.voltage_lower = mu.segment(0, n);
    sol.duals.voltage_upper = mu.segment(n, n);
    sol.duals.flow = mu.segment(2 * n, 4 * n);
    sol.duals.balance = best_lambda;
    sol.duals.budget = 0.0;
    // Demand floors are not part of the grid constraint set; their
    // multipliers absorb the marginal-welfare gap of fully priced-out nodes.
    sol.kkt = kkt_report(cons, p, cur.price + floor_mu, sol.duals, fairness_weight, cur.grad_j);
    return sol;
}

} // namespace dlmp
