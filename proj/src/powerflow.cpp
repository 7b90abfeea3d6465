#include "dlmp/powerflow.hpp"

#include "dlmp/errors.hpp"

#include <cmath>
#include <complex>

namespace dlmp {

namespace {

using cplx = std::complex<double>;
using Eigen::Index;

Index idx(std::size_t i) { return static_cast<Index>(i); }

void check_injections(const RadialNetwork& net, const Eigen::VectorXd& p, const Eigen::VectorXd& q)
{
    if (static_cast<std::size_t>(p.size()) != net.aggregator_count() ||
        static_cast<std::size_t>(q.size()) != net.aggregator_count())
        throw DomainError("injection vectors must have one entry per aggregator");
    if (!p.allFinite() || !q.allFinite()) throw DomainError("injections must be finite");
}

// Branch currents for fixed node voltages; index k is the line into node k.
void accumulate_currents(const RadialNetwork& net, const std::vector<cplx>& load,
                         const std::vector<cplx>& v, std::vector<cplx>& current)
{
    const std::size_t n = net.node_count();
    std::fill(current.begin(), current.end(), cplx{});
    for (std::size_t k = n; k >= 1; --k) {
        current[k] += std::conj(load[k] / v[k]);
        const int u = net.parent[k - 1];
        if (u != 0) current[static_cast<std::size_t>(u)] += current[k];
    }
}

} // namespace

PowerFlowSolution solve_ac(const RadialNetwork& net, const Eigen::VectorXd& p,
                           const Eigen::VectorXd& q, const AcOptions& opt)
{
    check_injections(net, p, q);
    const std::size_t n = net.node_count();
    std::vector<cplx> load(n + 1), v(n + 1), vn(n + 1), current(n + 1);
    for (std::size_t a = 0; a < net.aggregator_count(); ++a)
        load[static_cast<std::size_t>(net.aggregator_node[a])] += cplx(p(idx(a)), q(idx(a)));
    const cplx v_sub = std::polar(net.v0, net.delta0);
    std::fill(v.begin(), v.end(), v_sub);

    PowerFlowSolution s;
    bool converged = false;
    for (int sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
        accumulate_currents(net, load, v, current);
        vn[0] = v_sub;
        double change = 0.0;
        for (std::size_t k = 1; k <= n; ++k) {
            const cplx z(net.r[k - 1], net.x[k - 1]);
            vn[k] = vn[static_cast<std::size_t>(net.parent[k - 1])] - z * current[k];
        }
        for (std::size_t k = 1; k <= n; ++k) {
            const cplx next = v[k] + opt.damping * (vn[k] - v[k]);
            change = std::max(change, std::abs(next - v[k]));
            v[k] = next;
            if (!std::isfinite(std::abs(v[k])) || std::abs(v[k]) < opt.collapse_floor)
                throw VoltageCollapseError("voltage at bus " + std::to_string(net.bus_id[k]) +
                                           " fell below " + std::to_string(opt.collapse_floor) + " pu");
        }
        s.sweeps = sweep;
        if (change <= opt.tolerance) {
            converged = true;
            break;
        }
    }
    if (!converged)
        throw ConvergenceError("backward/forward sweep did not converge in " +
                               std::to_string(opt.max_sweeps) + " sweeps");

    accumulate_currents(net, load, v, current);
    s.voltage.resize(idx(n));
    s.angle.resize(idx(n));
    s.p_flow.resize(idx(n));
    s.q_flow.resize(idx(n));
    s.p_loss.resize(idx(n));
    s.q_loss.resize(idx(n));
    for (std::size_t k = 1; k <= n; ++k) {
        const auto i = idx(k - 1);
        const double vm = std::abs(v[k]);
        const cplx sr = v[k] * std::conj(current[k]);
        s.voltage(i) = vm;
        s.angle(i) = std::arg(v[k]);
        s.p_flow(i) = sr.real();
        s.q_flow(i) = sr.imag();
        const double s2 = sr.real() * sr.real() + sr.imag() * sr.imag();
        s.p_loss(i) = net.r[k - 1] * s2 / (vm * vm);
        s.q_loss(i) = net.x[k - 1] * s2 / (vm * vm);

        const cplx vu = v[static_cast<std::size_t>(net.parent[k - 1])];
        const cplx z(net.r[k - 1], net.x[k - 1]);
        const cplx sent = vu * std::conj((vu - v[k]) / z);
        s.max_residual = std::max({s.max_residual, std::abs(sent.real() - (s.p_flow(i) + s.p_loss(i))),
                                   std::abs(sent.imag() - (s.q_flow(i) + s.q_loss(i)))});
        if (net.parent[k - 1] == 0) {
            s.p_import += s.p_flow(i) + s.p_loss(i);
            s.q_import += s.q_flow(i) + s.q_loss(i);
        }
    }
    return s;
}

LossJacobians loss_jacobians(const RadialNetwork& net, const Eigen::VectorXd& p0,
                             const Eigen::VectorXd& q0, double h, const AcOptions& opt)
{
    check_injections(net, p0, q0);
    const Index n = idx(net.node_count());
    const Index na = idx(net.aggregator_count());
    LossJacobians j;
    j.p_by_p.resize(n, na);
    j.q_by_q.resize(n, na);
    j.p_by_q.resize(n, na);
    j.q_by_p.resize(n, na);
    for (Index k = 0; k < na; ++k) {
        Eigen::VectorXd lo = p0, hi = p0;
        lo(k) -= h;
        hi(k) += h;
        auto a = solve_ac(net, hi, q0, opt);
        auto b = solve_ac(net, lo, q0, opt);
        j.p_by_p.col(k) = (a.p_loss - b.p_loss) / (2.0 * h);
        j.q_by_p.col(k) = (a.q_loss - b.q_loss) / (2.0 * h);
        lo = q0;
        hi = q0;
        lo(k) -= h;
        hi(k) += h;
        a = solve_ac(net, p0, hi, opt);
        b = solve_ac(net, p0, lo, opt);
        j.p_by_q.col(k) = (a.p_loss - b.p_loss) / (2.0 * h);
        j.q_by_q.col(k) = (a.q_loss - b.q_loss) / (2.0 * h);
    }
    return j;
}

Eigen::VectorXd tan_phi_from_power_factor(const Eigen::VectorXd& power_factor)
{
    Eigen::VectorXd t(power_factor.size());
    for (Index i = 0; i < t.size(); ++i) {
        const double pf = power_factor(i);
        if (!(pf > 0.0 && pf <= 1.0)) throw DomainError("power factor must lie in (0, 1]");
        t(i) = std::tan(std::acos(pf));
    }
    return t;
}

SensitivityModel linearize(const RadialNetwork& net, const TopologyOperators& tops,
                           const PowerFlowSolution& reference, const Eigen::VectorXd& p_ref,
                           const Eigen::VectorXd& tan_phi, const AcOptions& opt)
{
    const Index n = idx(net.node_count());
    const Index na = idx(net.aggregator_count());
    if (tan_phi.size() != na || p_ref.size() != na)
        throw DomainError("tan_phi and p_ref need one entry per aggregator");

    SensitivityModel s;
    s.tan_phi = tan_phi;
    s.p_ref = p_ref;
    s.reference = reference;
    s.b_r.resize(n);
    s.b_x.resize(n);
    for (Index i = 0; i < n; ++i) {
        const double r = net.r[static_cast<std::size_t>(i)], x = net.x[static_cast<std::size_t>(i)];
        const double z2 = r * r + x * x;
        s.b_r(i) = r / z2;
        s.b_x(i) = x / z2;
    }

    const Eigen::MatrixXd& e = tops.parent_difference;
    s.m.resize(2 * n, 2 * n);
    s.m.topLeftCorner(n, n) = s.b_r.asDiagonal() * e;
    s.m.topRightCorner(n, n) = s.b_x.asDiagonal() * e;
    s.m.bottomLeftCorner(n, n) = s.b_x.asDiagonal() * e;
    s.m.bottomRightCorner(n, n) = -(s.b_r.asDiagonal() * e);
    s.n.resize(2 * n);
    const Eigen::VectorXd e0 = tops.substation_offset;
    s.n.head(n) = s.b_r.cwiseProduct(e0) * net.v0 + s.b_x.cwiseProduct(e0) * net.delta0;
    s.n.tail(n) = s.b_x.cwiseProduct(e0) * net.v0 - s.b_r.cwiseProduct(e0) * net.delta0;

    Eigen::FullPivLU<Eigen::MatrixXd> lu(s.m);
    if (!lu.isInvertible()) throw SingularModelError("linearized branch matrix is singular");
    s.inverse = lu.inverse();

    const Eigen::VectorXd q_ref = tan_phi.cwiseProduct(p_ref);
    s.jacobians = loss_jacobians(net, p_ref, q_ref, 1e-5, opt);
    if (!s.jacobians.p_by_p.allFinite() || !s.jacobians.q_by_q.allFinite())
        throw ConvergenceError("loss Jacobian finite differences are not finite");

    Eigen::MatrixXd sel = Eigen::MatrixXd::Zero(n, na);
    for (Index a = 0; a < na; ++a) sel(net.aggregator_node[static_cast<std::size_t>(a)] - 1, a) = 1.0;
    const Eigen::MatrixXd sel_q = sel * tan_phi.asDiagonal();
    const Eigen::MatrixXd dlp = s.jacobians.p_by_p + s.jacobians.p_by_q * tan_phi.asDiagonal();
    const Eigen::MatrixXd dlq = s.jacobians.q_by_p + s.jacobians.q_by_q * tan_phi.asDiagonal();
    const Eigen::MatrixXd& t = tops.tree;
    const Eigen::MatrixXd i_t = Eigen::MatrixXd::Identity(n, n) + t;

    Eigen::MatrixXd rhs(2 * n, na);
    rhs.topRows(n) = i_t * (sel + dlp);
    rhs.bottomRows(n) = i_t * (sel_q + dlq);
    s.voltage = (s.inverse * rhs).topRows(n);
    s.p_flow = i_t * sel + t * dlp;
    s.q_flow = i_t * sel_q + t * dlq;
    s.p_loss = dlp;

    s.import_row = Eigen::VectorXd::Zero(na);
    double import_ref = 0.0;
    for (Index i = 0; i < n; ++i) {
        if (net.parent[static_cast<std::size_t>(i)] != 0) continue;
        s.import_row += (s.p_flow.row(i) + s.p_loss.row(i)).transpose();
        import_ref += reference.p_flow(i) + reference.p_loss(i);
    }

    s.voltage_offset = reference.voltage - s.voltage * p_ref;
    s.p_flow_offset = reference.p_flow - s.p_flow * p_ref;
    s.q_flow_offset = reference.q_flow - s.q_flow * p_ref;
    s.p_loss_offset = reference.p_loss - s.p_loss * p_ref;
    s.import_offset = import_ref - s.import_row.dot(p_ref);
    return s;
}

SensitivityModel linearize_at(const RadialNetwork& net, const TopologyOperators& tops,
                              const Eigen::VectorXd& p_ref, const Eigen::VectorXd& tan_phi,
                              const AcOptions& opt)
{
    const auto ref = solve_ac(net, p_ref, tan_phi.cwiseProduct(p_ref), opt);
    return linearize(net, tops, ref, p_ref, tan_phi, opt);
}

Eigen::MatrixXd ConstraintSet::inequality_matrix() const
{
    const Index n = voltage.rows();
    Eigen::MatrixXd g(6 * n, voltage.cols());
    g << -voltage, voltage, flow;
    return g;
}

Eigen::VectorXd ConstraintSet::inequality_offset() const
{
    const Index n = voltage.rows();
    Eigen::VectorXd h(6 * n);
    h << voltage_lower, voltage_upper, flow_offset;
    return h;
}

Eigen::VectorXd ConstraintSet::inequality_rows(const Eigen::VectorXd& p) const
{
    return inequality_matrix() * p + inequality_offset();
}

double ConstraintSet::balance_residual(const Eigen::VectorXd& p) const
{
    return balance_row.dot(p) + balance_offset - procurement;
}

double ConstraintSet::budget_residual(const Eigen::VectorXd& c, const Eigen::VectorXd& p) const
{
    return -c.dot(p) + wholesale_cost * procurement;
}

double ConstraintSet::max_violation(const Eigen::VectorXd& c, const Eigen::VectorXd& p) const
{
    double v = std::max(0.0, inequality_rows(p).maxCoeff());
    v = std::max(v, std::abs(balance_residual(p)));
    return std::max(v, budget_residual(c, p));
}

ConstraintSet assemble_constraints(const SensitivityModel& sens, const RadialNetwork& net,
                                   double procurement, double wholesale_cost,
                                   const ConstraintOptions& opt)
{
    if (!(procurement >= 0.0)) throw DomainError("procurement P0 must be nonnegative");
    if (!(wholesale_cost > 0.0)) throw DomainError("wholesale cost c0 must be positive");
    const Index n = idx(net.node_count());
    Eigen::VectorXd p_lim(n), q_lim(n);
    for (Index i = 0; i < n; ++i) {
        p_lim(i) = net.p_limit[static_cast<std::size_t>(i)];
        q_lim(i) = net.q_limit[static_cast<std::size_t>(i)];
    }

    ConstraintSet c;
    c.voltage = sens.voltage;
    c.voltage_lower = Eigen::VectorXd::Constant(n, net.v0 - net.epsilon) - sens.voltage_offset;
    c.voltage_upper = sens.voltage_offset - Eigen::VectorXd::Constant(n, net.v0 + net.epsilon);
    c.flow.resize(4 * n, sens.voltage.cols());
    c.flow << sens.p_flow, -sens.p_flow, sens.q_flow, -sens.q_flow;
    c.flow_offset.resize(4 * n);
    c.flow_offset << sens.p_flow_offset - p_lim, -sens.p_flow_offset - p_lim,
        sens.q_flow_offset - q_lim, -sens.q_flow_offset - q_lim;
    c.balance_row = sens.import_row;
    c.balance_offset = sens.import_offset;
    c.procurement = procurement;
    c.wholesale_cost = wholesale_cost;

    static const char* blocks[] = {"V_lower", "V_upper", "P_upper", "P_lower", "Q_upper", "Q_lower"};
    const Eigen::VectorXd rows = c.inequality_rows(sens.p_ref);
    for (Index r = 0; r < rows.size(); ++r) {
        if (rows(r) <= 0.0) continue;
        c.reference_violations.push_back(std::string(blocks[r / n]) + "[" +
                                         std::to_string(net.bus_id[static_cast<std::size_t>(r % n + 1)]) + "]");
    }
    if (opt.strict_reference && !c.reference_violations.empty())
        throw InfeasibleError("limits are tighter than the reference operating point: " +
                              c.reference_violations.front());
    return c;
}

LinearizationErrorReport linearization_error(const RadialNetwork& net, const SensitivityModel& sens,
                                             const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                                             const AcOptions& opt)
{
    LinearizationErrorReport r;
    r.ac = solve_ac(net, p, q, opt);
    const Eigen::VectorXd v = sens.voltage * p + sens.voltage_offset;
    const Eigen::VectorXd pf = sens.p_flow * p + sens.p_flow_offset;
    const Eigen::VectorXd qf = sens.q_flow * p + sens.q_flow_offset;
    const Eigen::VectorXd lp = sens.p_loss * p + sens.p_loss_offset;
    auto add = [&](const char* name, const Eigen::VectorXd& pred, const Eigen::VectorXd& act, double& worst) {
        for (Index i = 0; i < pred.size(); ++i) {
            const double e = std::abs(pred(i) - act(i));
            worst = std::max(worst, e);
            r.rows.push_back({name, net.bus_id[static_cast<std::size_t>(i + 1)], pred(i), act(i), e});
        }
    };
    add("V", v, r.ac.voltage, r.max_voltage);
    add("P", pf, r.ac.p_flow, r.max_p_flow);
    add("Q", qf, r.ac.q_flow, r.max_q_flow);
    add("LP", lp, r.ac.p_loss, r.max_p_loss);
    return r;
}

} // namespace dlmp
