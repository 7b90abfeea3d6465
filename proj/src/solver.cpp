#include "dlmp/solver.hpp"

#include "dlmp/errors.hpp"
#include "dlmp/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace dlmp {

namespace {

using Eigen::Index;

std::span<const double> view(const Eigen::VectorXd& v)
{
    return {v.data(), static_cast<std::size_t>(v.size())};
}

std::span<double> view(Eigen::VectorXd& v)
{
    return {v.data(), static_cast<std::size_t>(v.size())};
}

struct Residuals {
    Eigen::VectorXd rows; // scaled inequality rows
    double balance = 0.0; // scaled
    double budget = 0.0;  // scaled
};

Residuals residuals(const ScaledConstraints& sc, const Eigen::VectorXd& c, const Eigen::VectorXd& p)
{
    Residuals r;
    const auto m = static_cast<std::size_t>(sc.g.rows());
    const auto n = static_cast<std::size_t>(sc.g.cols());
    r.rows.resize(sc.g.rows());
    kernels::gemv({sc.g.data(), m * n}, m, n, view(p), view(r.rows));
    r.rows += sc.h;
    r.balance = kernels::dot(view(sc.balance_row), view(p)) + sc.balance_constant;
    r.budget = -sc.budget_scale * kernels::dot(view(c), view(p)) + sc.budget_constant;
    return r;
}

double max_physical_violation(const ScaledConstraints& sc, const Residuals& r)
{
    double v = 0.0;
    for (Index i = 0; i < r.rows.size(); ++i) v = std::max(v, r.rows(i) / sc.row_scale(i));
    v = std::max(v, std::abs(r.balance) / sc.balance_scale);
    return std::max(v, r.budget / sc.budget_scale);
}

double safe_inverse_max(const Eigen::Ref<const Eigen::RowVectorXd>& row)
{
    const double m = row.cwiseAbs().maxCoeff();
    return m > 0.0 ? 1.0 / m : 1.0;
}

} // namespace

ScaledConstraints scale_constraints(const ConstraintSet& cons, RowScaling scaling)
{
    ScaledConstraints sc;
    const Eigen::MatrixXd g = cons.inequality_matrix();
    const Eigen::VectorXd h = cons.inequality_offset();
    sc.row_scale = Eigen::VectorXd::Ones(g.rows());
    if (scaling == RowScaling::unit_max)
        for (Index i = 0; i < g.rows(); ++i) sc.row_scale(i) = safe_inverse_max(g.row(i));
    sc.g = sc.row_scale.asDiagonal() * g;
    sc.h = sc.row_scale.cwiseProduct(h);
    sc.balance_scale = scaling == RowScaling::unit_max ? safe_inverse_max(cons.balance_row.transpose()) : 1.0;
    sc.balance_row = sc.balance_scale * cons.balance_row;
    sc.balance_constant = sc.balance_scale * (cons.balance_offset - cons.procurement);
    sc.budget_scale = scaling == RowScaling::unit_max ? 1.0 / cons.wholesale_cost : 1.0;
    sc.budget_constant = sc.budget_scale * cons.wholesale_cost * cons.procurement;
    sc.voltage_rows = 2 * cons.node_count();
    sc.flow_rows = 4 * cons.node_count();
    return sc;
}

Eigen::VectorXd DualValues::stacked() const
{
    Eigen::VectorXd s(voltage_lower.size() + voltage_upper.size() + flow.size());
    s << voltage_lower, voltage_upper, flow;
    return s;
}

DualValues SolverState::physical_duals() const
{
    const Eigen::VectorXd mu = row_scale.cwiseProduct(inequality_dual);
    const Index n = mu.size() / 6;
    DualValues d;
    d.voltage_lower = mu.segment(0, n);
    d.voltage_upper = mu.segment(n, n);
    d.flow = mu.segment(2 * n, 4 * n);
    d.balance = balance_scale * balance_dual;
    d.budget = budget_scale * budget_dual;
    return d;
}

SolverState initial_state(const ConstraintSet& cons, const ScaledConstraints& sc, double eta,
                          double fairness_weight, double initial_price)
{
    if (!(eta > 0.0)) throw DomainError("eta must be positive");
    if (!(fairness_weight >= 0.0)) throw DomainError("fairness weight must be nonnegative");
    if (!(initial_price > 0.0)) throw DomainError("initial price must be positive");
    SolverState s;
    s.price = Eigen::VectorXd::Constant(static_cast<Index>(cons.aggregator_count()), initial_price);
    s.demand = Eigen::VectorXd::Zero(s.price.size());
    s.inequality_dual = Eigen::VectorXd::Zero(sc.g.rows());
    s.row_scale = sc.row_scale;
    s.balance_scale = sc.balance_scale;
    s.budget_scale = sc.budget_scale;
    const double mean_row = sc.balance_row.mean();
    s.balance_dual = mean_row > 0.0 ? initial_price / mean_row : 0.0;
    s.eta = eta;
    s.fairness_weight = fairness_weight;
    return s;
}

void dual_update(SolverState& state, const ScaledConstraints& sc, const Eigen::VectorXd& p)
{
    const Residuals r = residuals(sc, state.price, p);
    kernels::ascend_project(view(state.inequality_dual), view(r.rows), state.eta);
    state.balance_dual += state.eta * r.balance;
    state.budget_dual = std::max(state.budget_dual + state.eta * r.budget, 0.0);
}

DlmpBreakdown price_update(const SolverState& state, const ScaledConstraints& sc,
                           const Eigen::VectorXd& p, const Eigen::VectorXd& grad_j)
{
    const Residuals r = residuals(sc, state.price, p);
    const auto m = static_cast<std::size_t>(sc.g.rows());
    const auto n = static_cast<std::size_t>(sc.g.cols());
    Eigen::VectorXd w(r.rows.size());
    kernels::penalized_multiplier(view(state.inequality_dual), view(r.rows), state.eta, view(w));

    DlmpBreakdown b;
    b.voltage.resize(static_cast<Index>(n));
    b.congestion.resize(static_cast<Index>(n));
    const std::size_t nv = sc.voltage_rows;
    kernels::gemv_t({sc.g.data(), nv * n}, nv, n, {w.data(), nv}, view(b.voltage));
    kernels::gemv_t({sc.g.data() + nv * n, (m - nv) * n}, m - nv, n, {w.data() + nv, m - nv},
                    view(b.congestion));
    const double energy = state.balance_dual + state.eta * r.balance;
    const double budget = state.budget_dual + state.eta * std::max(r.budget, 0.0);
    b.energy_loss = energy * sc.balance_row - (budget * sc.budget_scale) * state.price;
    b.fairness = -0.5 * state.fairness_weight * grad_j;
    if (!b.voltage.allFinite() || !b.congestion.allFinite() || !b.energy_loss.allFinite() ||
        !b.fairness.allFinite())
        throw DivergenceError("non-finite price component at iteration " + std::to_string(state.iteration));
    return b;
}

double augmented_lagrangian(const SolverState& state, const ScaledConstraints& sc,
                            const Eigen::VectorXd& p, double welfare, double jain)
{
    const Residuals r = residuals(sc, state.price, p);
    const double eta = state.eta;
    double value = welfare + 0.5 * state.fairness_weight * jain;
    for (Index i = 0; i < r.rows.size(); ++i) {
        value -= state.inequality_dual(i) * r.rows(i);
        value -= 0.5 * eta * r.rows(i) * std::max(r.rows(i), 0.0);
    }
    value -= state.balance_dual * r.balance + 0.5 * eta * r.balance * r.balance;
    value -= state.budget_dual * r.budget + 0.5 * eta * r.budget * std::max(r.budget, 0.0);
    return value;
}

double KktResiduals::worst() const
{
    return std::max({stationarity, primal, dual, complementarity});
}

KktResiduals kkt_report(const ConstraintSet& cons, const Eigen::VectorXd& p, const Eigen::VectorXd& c,
                        const DualValues& duals, double fairness_weight, const Eigen::VectorXd& grad_j)
{
    const Eigen::MatrixXd g = cons.inequality_matrix();
    const Eigen::VectorXd rows = g * p + cons.inequality_offset();
    const Eigen::VectorXd mu = duals.stacked();
    const double bud = cons.budget_residual(c, p);

    KktResiduals k;
    const Eigen::VectorXd stat = c - (g.transpose() * mu + duals.balance * cons.balance_row -
                                      duals.budget * c - 0.5 * fairness_weight * grad_j);
    k.stationarity = stat.cwiseAbs().maxCoeff() / std::max(1.0, c.cwiseAbs().maxCoeff());
    k.primal = std::max({0.0, rows.size() ? rows.maxCoeff() : 0.0, std::abs(cons.balance_residual(p)), bud});
    k.dual = std::max({0.0, mu.size() ? -mu.minCoeff() : 0.0, -duals.budget});
    k.complementarity = std::abs(duals.budget * bud);
    for (Index i = 0; i < rows.size(); ++i) k.complementarity = std::max(k.complementarity, std::abs(mu(i) * rows(i)));
    return k;
}

KktResiduals kkt_report(const SolverState& state, const ConstraintSet& cons, const Eigen::VectorXd& p,
                        const Eigen::VectorXd& sizes, double deadband)
{
    const auto ctx = make_fairness_context(p, state.price, sizes, deadband);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(p.size());
    if (state.fairness_weight != 0.0 && ctx.active_count() > 0.0)
        grad = jain_gradient(ctx, p, BoundaryPolicy::one_sided);
    return kkt_report(cons, p, state.price, state.physical_duals(), state.fairness_weight, grad);
}

double Slacks::worst() const
{
    return std::max({voltage_lower, voltage_upper, flow, balance, budget});
}

const char* to_string(MarketStatus s) noexcept
{
    switch (s) {
    case MarketStatus::converged: return "converged";
    case MarketStatus::max_iter: return "max_iter";
    case MarketStatus::diverged: return "diverged";
    }
    return "unknown";
}

MarketResult run_market(const ConstraintSet& cons, std::span<const Aggregator> aggregators,
                        const MarketConfig& cfg)
{
    const auto na = static_cast<Index>(aggregators.size());
    if (static_cast<std::size_t>(na) != cons.aggregator_count() || na == 0)
        throw DomainError("aggregator list does not match the constraint set");
    if (!(cfg.relaxation > 0.0 && cfg.relaxation <= 1.0)) throw DomainError("relaxation must lie in (0, 1]");

    const ScaledConstraints sc = scale_constraints(cons, cfg.scaling);
    SolverState state = initial_state(cons, sc, cfg.eta, cfg.fairness_weight,
                                      cfg.initial_price.value_or(cons.wholesale_cost));
    Eigen::VectorXd sizes(na);
    for (Index k = 0; k < na; ++k) sizes(k) = static_cast<double>(aggregators[static_cast<std::size_t>(k)].size());

    auto respond = [&](const Eigen::VectorXd& c) {
        Eigen::VectorXd p(na);
        for (Index k = 0; k < na; ++k) p(k) = aggregators[static_cast<std::size_t>(k)].demand(c(k));
        return p;
    };
    auto welfare_at = [&](const Eigen::VectorXd& c) {
        Eigen::VectorXd w(na);
        for (Index k = 0; k < na; ++k) w(k) = aggregators[static_cast<std::size_t>(k)].respond(c(k)).welfare;
        return w;
    };
    auto jain_at = [&](const Eigen::VectorXd& p, const Eigen::VectorXd& c) {
        const auto ctx = make_fairness_context(p, c, sizes, cfg.mask_deadband);
        return ctx.active_count() > 0.0 ? jain_masked(ctx, p) : 0.0;
    };

    MarketResult res;
    DlmpBreakdown bd;
    bd.voltage = Eigen::VectorXd::Zero(na);
    bd.congestion = Eigen::VectorXd::Zero(na);
    bd.energy_loss = state.price;
    bd.fairness = Eigen::VectorXd::Zero(na);
    state.demand = respond(state.price);

    const double tol_p = cfg.tol_p_per_aggregator * static_cast<double>(na);
    const double w = cfg.relaxation;
    double step = 0.0;
    double violation = max_physical_violation(sc, residuals(sc, state.price, state.demand));
    auto record = [&](long it) {
        const double wel = welfare_at(state.price).sum();
        const double j = jain_at(state.demand, state.price);
        res.trace.push_back({it, step, augmented_lagrangian(state, sc, state.demand, wel, j), violation, j});
    };
    record(0);

    res.status = MarketStatus::max_iter;
    for (long it = 1; it <= cfg.max_iter; ++it) {
        state.iteration = it;
        dual_update(state, sc, state.demand);
        res.min_inequality_dual = std::min({res.min_inequality_dual, state.inequality_dual.minCoeff(), state.budget_dual});

        Eigen::VectorXd grad = Eigen::VectorXd::Zero(na);
        if (cfg.fairness_weight != 0.0) {
            const auto ctx = make_fairness_context(state.demand, state.price, sizes, cfg.mask_deadband);
            if (ctx.active_count() > 0.0) grad = jain_gradient(ctx, state.demand, BoundaryPolicy::one_sided);
        }
        DlmpBreakdown next;
        try {
            next = price_update(state, sc, state.demand, grad);
        } catch (const DivergenceError& e) {
            res.status = MarketStatus::diverged;
            res.message = e.what();
            break;
        }
        if (w != 1.0) {
            next.voltage = (1.0 - w) * bd.voltage + w * next.voltage;
            next.congestion = (1.0 - w) * bd.congestion + w * next.congestion;
            next.energy_loss = (1.0 - w) * bd.energy_loss + w * next.energy_loss;
            next.fairness = (1.0 - w) * bd.fairness + w * next.fairness;
        }
        const Eigen::VectorXd c = next.total();
        if (!c.allFinite() || (c.array() <= 0.0).any()) {
            res.status = MarketStatus::diverged;
            res.message = "nonpositive or non-finite price at iteration " + std::to_string(it);
            break;
        }
        res.max_decomposition_error = std::max(
            res.max_decomposition_error, (c - next.total()).cwiseAbs().maxCoeff() / c.cwiseAbs().maxCoeff());
        bd = std::move(next);
        state.price = c;

        const Eigen::VectorXd p = respond(c);
        step = (p - state.demand).lpNorm<1>();
        state.demand = p;
        violation = max_physical_violation(sc, residuals(sc, state.price, state.demand));
        state.small_steps = (step < tol_p && violation <= cfg.tol_feas) ? state.small_steps + 1 : 0;
        res.iterations = it;
        const bool done = state.small_steps >= cfg.window;
        if (cfg.trace_stride > 0 && (it % cfg.trace_stride == 0 || done)) record(it);
        if (done) {
            res.status = MarketStatus::converged;
            break;
        }
    }
    if (res.status == MarketStatus::max_iter && (res.trace.empty() || res.trace.back().iteration != res.iterations))
        record(res.iterations);

    res.demand = state.demand;
    res.price = state.price;
    res.breakdown = bd;
    res.welfare = welfare_at(state.price);
    res.total_welfare = res.welfare.sum();
    res.jain = jain_at(state.demand, state.price);
    res.objective = res.total_welfare + 0.5 * cfg.fairness_weight * res.jain;

    const Eigen::VectorXd rows = cons.inequality_rows(res.demand);
    const Index n = static_cast<Index>(cons.node_count());
    res.slacks.voltage_lower = rows.segment(0, n).maxCoeff();
    res.slacks.voltage_upper = rows.segment(n, n).maxCoeff();
    res.slacks.flow = rows.segment(2 * n, 4 * n).maxCoeff();
    res.slacks.balance = std::abs(cons.balance_residual(res.demand));
    res.slacks.budget = cons.budget_residual(res.price, res.demand);
    res.duals = state.physical_duals();
    res.kkt = kkt_report(state, cons, res.demand, sizes, cfg.mask_deadband);
    return res;
}

} // namespace dlmp
