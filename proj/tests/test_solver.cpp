#include "dlmp/errors.hpp"
#include "dlmp/solver.hpp"

#include "instances.hpp"

#include "doctest.h"

#include <cmath>

using namespace dlmp;
using namespace dlmp::testing;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// One node, one aggregator. Voltage rows evaluate to the given constants,
// flow rows to -1, balance row p - P0.
ConstraintSet toy(double v_lower_row, double v_upper_row, double procurement, double slope = 0.0)
{
    ConstraintSet c;
    c.voltage = MatrixXd::Constant(1, 1, slope);
    c.voltage_lower = VectorXd::Constant(1, v_lower_row);
    c.voltage_upper = VectorXd::Constant(1, v_upper_row);
    c.flow = MatrixXd::Zero(4, 1);
    c.flow_offset = VectorXd::Constant(4, -1.0);
    c.balance_row = VectorXd::Ones(1);
    c.balance_offset = 0.0;
    c.procurement = procurement;
    c.wholesale_cost = 1.0;
    return c;
}

VectorXd scalar(double v)
{
    return VectorXd::Constant(1, v);
}

} // namespace

TEST_CASE("dual update examples")
{
    const auto cons = toy(-0.2, -0.2, 1.0);
    const auto sc = scale_constraints(cons, RowScaling::none);
    auto st = initial_state(cons, sc, 0.1, 0.0, 1.0);

    st.inequality_dual.setZero();
    st.inequality_dual(0) = 0.5;
    st.inequality_dual(1) = 0.01;
    st.balance_dual = 0.0;
    dual_update(st, sc, scalar(1.3));
    CHECK(st.inequality_dual(0) == doctest::Approx(0.48));
    CHECK(st.inequality_dual(1) == 0.0);
    CHECK(st.balance_dual == doctest::Approx(0.03));
    CHECK((st.inequality_dual.array() >= 0.0).all());

    // the balance dual is sign-free
    st.balance_dual = 0.0;
    dual_update(st, sc, scalar(0.7));
    CHECK(st.balance_dual == doctest::Approx(-0.03));
}

TEST_CASE("price update")
{
    SUBCASE("only the balance terms contribute when all rows are slack")
    {
        const auto cons = toy(-0.2, -0.2, 1.0);
        const auto sc = scale_constraints(cons, RowScaling::none);
        auto st = initial_state(cons, sc, 0.1, 0.0, 1.0);
        st.balance_dual = 0.8;
        const auto b = price_update(st, sc, scalar(1.5), VectorXd::Zero(1));
        CHECK(b.voltage(0) == 0.0);
        CHECK(b.congestion(0) == 0.0);
        CHECK(b.fairness(0) == 0.0);
        CHECK(b.energy_loss(0) == doctest::Approx(0.8 + 0.1 * 0.5));
        CHECK(b.total()(0) == doctest::Approx(0.85));
    }
    SUBCASE("C = 0 gives a zero fairness component for any gradient")
    {
        const auto cons = toy(-0.2, -0.2, 1.0);
        const auto sc = scale_constraints(cons, RowScaling::none);
        auto st = initial_state(cons, sc, 0.1, 0.0, 1.0);
        const auto b = price_update(st, sc, scalar(1.0), VectorXd::Constant(1, 123.0));
        CHECK(b.fairness(0) == 0.0);
        st.fairness_weight = 0.4;
        CHECK(price_update(st, sc, scalar(1.0), VectorXd::Constant(1, 2.0)).fairness(0) == doctest::Approx(-0.4));
    }
    SUBCASE("binding voltage rows on a two-node feeder")
    {
        FeederDescription d;
        d.epsilon_pu = 0.001;
        d.buses = {{0, ""}, {1, ""}};
        d.lines = {{0, 1, 0.01, 0.01, 5.0, 5.0}};
        d.aggregators = {{"A1", 1}};
        const auto net = build_network(d);
        const auto tops = build_topology(net);
        const VectorXd tp = tan_phi_from_power_factor(VectorXd::Constant(1, 0.95));
        const auto m = linearize_at(net, tops, scalar(0.1), tp);
        const auto cons = assemble_constraints(m, net, 0.1, 1.0);
        const auto sc = scale_constraints(cons, RowScaling::none);
        auto st = initial_state(cons, sc, 0.1, 0.0, 1.0);
        st.balance_dual = 0.0;
        const double cv = cons.voltage(0, 0);
        REQUIRE(cv < 0.0);

        // lower row violated by heavy demand
        const double p = 0.3;
        const double lower = -cv * p + cons.voltage_lower(0);
        REQUIRE(lower > 0.0);
        st.inequality_dual(0) = 0.7;
        auto b = price_update(st, sc, scalar(p), VectorXd::Zero(1));
        CHECK(b.voltage(0) > 0.0);
        CHECK(b.voltage(0) == doctest::Approx(-cv * (0.7 + 0.1 * lower)));

        // upper row violated by export
        const double q = -0.3;
        const double upper = cv * q + cons.voltage_upper(0);
        REQUIRE(upper > 0.0);
        st.inequality_dual.setZero();
        st.inequality_dual(1) = 0.7;
        b = price_update(st, sc, scalar(q), VectorXd::Zero(1));
        CHECK(b.voltage(0) == doctest::Approx(cv * (0.7 + 0.1 * upper)));
    }
    SUBCASE("non-finite input is divergence")
    {
        const auto cons = toy(-0.2, -0.2, 1.0);
        const auto sc = scale_constraints(cons, RowScaling::none);
        auto st = initial_state(cons, sc, 0.1, 0.0, 1.0);
        CHECK_THROWS_AS(price_update(st, sc, scalar(NAN), VectorXd::Zero(1)), DivergenceError);
    }
}

TEST_CASE("augmented Lagrangian")
{
    const auto cons = toy(-0.2, -0.2, 1.0);
    const auto sc = scale_constraints(cons, RowScaling::none);
    auto st = initial_state(cons, sc, 0.1, 0.0, 1.0);
    st.balance_dual = 0.0;
    CHECK(augmented_lagrangian(st, sc, scalar(1.0), 3.25, 1.0) == 3.25);
    CHECK(augmented_lagrangian(st, sc, scalar(1.4), 3.25, 1.0) == doctest::Approx(3.25 - 0.05 * 0.16));
    st.inequality_dual(0) = 1e300;
    CHECK(std::isfinite(augmented_lagrangian(st, sc, scalar(1.0), 3.25, 1.0)));
}

TEST_CASE("KKT primal residual is the largest violation")
{
    const auto cons = toy(0.3, -0.2, 1.0);
    DualValues d;
    d.voltage_lower = d.voltage_upper = VectorXd::Zero(1);
    d.flow = VectorXd::Zero(4);
    const auto k = kkt_report(cons, scalar(1.0), scalar(1.0), d, 0.0, VectorXd::Zero(1));
    CHECK(k.primal == doctest::Approx(0.3));
    CHECK(cons.max_violation(scalar(1.0), scalar(1.0)) == doctest::Approx(0.3));
}

TEST_CASE("single prosumer market clears at p = 1, c = 1")
{
    const auto cons = toy(-1.0, -1.0, 1.0);
    const std::vector<Aggregator> aggs = {Aggregator("A1", 1, {{2, 1, 0}})};
    MarketConfig cfg;
    cfg.tol_p_per_aggregator = 1e-12;
    cfg.tol_feas = 1e-12;
    const auto r = run_market(cons, aggs, cfg);
    REQUIRE(r.converged());
    CHECK(r.demand(0) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(r.price(0) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(r.max_decomposition_error <= 1e-12);
    CHECK(r.min_inequality_dual >= 0.0);
}

TEST_CASE("iteration cap is reported with the trace kept")
{
    const auto s = small_instance(SmallCase::voltage);
    MarketConfig cfg;
    cfg.max_iter = 25;
    cfg.trace_stride = 10;
    const auto r = run_market(s.constraints, s.aggregators, cfg);
    CHECK(r.status == MarketStatus::max_iter);
    CHECK(r.iterations == 25);
    REQUIRE(r.trace.size() >= 3);
    CHECK(r.trace.front().iteration == 0);
    CHECK(r.trace.back().iteration == 25);
}

TEST_CASE("invalid configuration")
{
    const auto s = small_instance(SmallCase::unconstrained);
    MarketConfig cfg;
    cfg.eta = 0.0;
    CHECK_THROWS_AS(run_market(s.constraints, s.aggregators, cfg), DomainError);
    cfg.eta = 1e-2;
    cfg.fairness_weight = -1.0;
    CHECK_THROWS_AS(run_market(s.constraints, s.aggregators, cfg), DomainError);
}

TEST_CASE("reference oracle")
{
    SUBCASE("no binding rows: prices proportional to the balance row")
    {
        const auto s = small_instance(SmallCase::unconstrained);
        const auto ref = solve_reference(s.constraints, s.aggregators, 0.0);
        const VectorXd ratio = ref.price.cwiseQuotient(s.constraints.balance_row);
        CHECK(ratio.maxCoeff() - ratio.minCoeff() <= 1e-7);
        CHECK(ref.duals.balance == doctest::Approx(ratio(0)).epsilon(1e-6));
        CHECK(ref.kkt.worst() <= 1e-4);
    }
    SUBCASE("binding voltage row: complementary slackness")
    {
        const auto s = small_instance(SmallCase::voltage);
        const auto ref = solve_reference(s.constraints, s.aggregators, 0.0);
        CHECK(ref.duals.voltage_lower.maxCoeff() > 0.0);
        CHECK(ref.kkt.complementarity <= 1e-6);
        CHECK(ref.kkt.worst() <= 1e-4);
    }
    SUBCASE("fairness raises Jain's index")
    {
        const auto s = small_instance(SmallCase::unconstrained);
        const auto r0 = solve_reference(s.constraints, s.aggregators, 0.0);
        const auto r4 = solve_reference(s.constraints, s.aggregators, 0.4);
        CHECK(r4.jain > r0.jain);
        CHECK(r4.total_welfare <= r0.total_welfare + 1e-12);
    }
}

TEST_CASE("market agrees with the reference oracle on small instances")
{
    for (auto kind : {SmallCase::unconstrained, SmallCase::voltage, SmallCase::congestion}) {
        CAPTURE(to_string(kind));
        const auto s = small_instance(kind);
        const auto ref = solve_reference(s.constraints, s.aggregators, 0.0);
        for (double eta : {1e-3, 1e-2}) {
            MarketConfig cfg;
            cfg.eta = eta;
            cfg.tol_p_per_aggregator = 1e-9;
            cfg.tol_feas = 1e-9;
            const auto r = run_market(s.constraints, s.aggregators, cfg);
            REQUIRE(r.converged());
            CHECK((r.demand - ref.demand).cwiseAbs().maxCoeff() <= 1e-3);
            CHECK(std::abs(r.total_welfare - ref.total_welfare) <= 1e-3 * ref.total_welfare);
            CHECK(r.kkt.worst() <= 1e-4);
            CHECK(r.kkt.stationarity <= 1e-3);
            CHECK(r.max_decomposition_error <= 1e-12);
            CHECK(r.min_inequality_dual >= 0.0);
        }
        CHECK(ref.kkt.worst() <= 1e-4);
    }
}

TEST_CASE("market with fairness agrees with the oracle")
{
    const auto s = small_instance(SmallCase::unconstrained);
    const auto ref = solve_reference(s.constraints, s.aggregators, 0.4);
    MarketConfig cfg;
    cfg.fairness_weight = 0.4;
    cfg.tol_p_per_aggregator = 1e-10;
    cfg.tol_feas = 1e-10;
    const auto r = run_market(s.constraints, s.aggregators, cfg);
    REQUIRE(r.converged());
    CHECK((r.demand - ref.demand).cwiseAbs().maxCoeff() <= 1e-3);
    CHECK(r.jain == doctest::Approx(ref.jain).epsilon(1e-6));
}
