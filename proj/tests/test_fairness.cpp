#include "dlmp/errors.hpp"
#include "dlmp/fairness.hpp"

#include "doctest.h"

#include <random>

using namespace dlmp;
using Eigen::VectorXd;

namespace {

VectorXd vec(std::initializer_list<double> v)
{
    VectorXd x(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double d : v) x(i++) = d;
    return x;
}

} // namespace

TEST_CASE("Jain's index values")
{
    CHECK(jain_scalar(vec({1, 1, 1})) == doctest::Approx(1.0));
    CHECK(jain_scalar(vec({1, 2, 3})) == doctest::Approx(6.0 / 7.0));
    for (int n = 1; n <= 10; ++n)
        for (int m = 1; m <= n; ++m) {
            VectorXd x = VectorXd::Zero(n);
            x.head(m).setConstant(2.5);
            CHECK(jain_scalar(x) == static_cast<double>(m) / n);
        }
    CHECK_THROWS_AS(jain_scalar(VectorXd::Zero(3)), DomainError);
    CHECK_THROWS_AS(jain_scalar(VectorXd()), DomainError);
}

TEST_CASE("masked index")
{
    SUBCASE("equal weighted allocation")
    {
        const auto ctx = make_fairness_context(vec({2, 2, 2}), vec({1.1, 1.1, 1.1}), vec({10, 10, 10}));
        CHECK(jain_masked(ctx, vec({2, 2, 2})) == doctest::Approx(1.0));
    }
    SUBCASE("suppliers are set aside")
    {
        const VectorXd p = vec({3, -1, 3, 3});
        const auto ctx = make_fairness_context(p, vec({1, 1, 1, 1}), vec({5, 5, 5, 5}));
        CHECK(ctx.active_count() == 3.0);
        CHECK(ctx.weights(1) == 0.0);
        CHECK(jain_masked(ctx, p) == doctest::Approx(1.0));
    }
    SUBCASE("reduces to the plain index")
    {
        const VectorXd p = vec({1, 2, 3});
        const auto ctx = make_fairness_context(p, vec({1, 1, 1}), vec({1, 1, 1}));
        CHECK(jain_masked(ctx, p) == doctest::Approx(6.0 / 7.0));
    }
    SUBCASE("empty mask")
    {
        const VectorXd p = vec({-1, 0});
        const auto ctx = make_fairness_context(p, vec({1, 1}), vec({1, 1}));
        CHECK_THROWS_AS(jain_masked(ctx, p), DomainError);
    }
}

TEST_CASE("gradient special cases")
{
    SUBCASE("equal allocation: zero along uniform scaling")
    {
        const VectorXd p = vec({2, 4, 6});
        const VectorXd c = vec({1, 1, 1});
        const VectorXd g = vec({1, 2, 3}); // n o p is constant
        const auto ctx = make_fairness_context(p, c, g);
        const VectorXd grad = jain_gradient(ctx, p);
        CHECK(grad.cwiseQuotient(ctx.weights).sum() == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(grad.cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("single consumer")
    {
        const VectorXd p = vec({-1, 4, -0.5});
        const auto ctx = make_fairness_context(p, vec({1, 1, 1}), vec({1, 1, 1}));
        CHECK(jain_gradient(ctx, p).isZero());
    }
    SUBCASE("boundary handling")
    {
        const VectorXd p = vec({1, 1e-12, 2});
        const auto ctx = make_fairness_context(p, vec({1, 1, 1}), vec({1, 1, 1}));
        CHECK_THROWS_AS(jain_gradient(ctx, p), NonsmoothPointError);
        const VectorXd g = jain_gradient(ctx, p, BoundaryPolicy::one_sided);
        CHECK(g(1) == 0.0);
    }
}

TEST_CASE("gradient matches finite differences")
{
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> up(0.1, 5.0), uc(0.5, 2.0), ug(5, 20);
    for (int t = 0; t < 50; ++t) {
        const int n = 2 + t % 7;
        VectorXd p(n), c(n), g(n);
        for (int k = 0; k < n; ++k) {
            p(k) = up(rng) * (k % 4 == 3 ? -1.0 : 1.0);
            c(k) = uc(rng);
            g(k) = std::round(ug(rng));
        }
        const auto ctx = make_fairness_context(p, c, g);
        if (ctx.active_count() == 0.0) continue;
        const VectorXd grad = jain_gradient(ctx, p);
        const double h = 1e-6;
        for (int k = 0; k < n; ++k) {
            VectorXd a = p, b = p;
            a(k) += h;
            b(k) -= h;
            const double fd = (jain_masked(ctx, a) - jain_masked(ctx, b)) / (2 * h);
            if (ctx.mask(k) == 0.0) {
                CHECK(grad(k) == 0.0);
            } else {
                CHECK(std::abs(grad(k) - fd) <= 1e-5 * std::max(std::abs(fd), 1e-3));
            }
        }
    }
}

TEST_CASE("index is scale invariant")
{
    const VectorXd p = vec({1.5, 0.3, 2.2, 4.0});
    const auto ctx = make_fairness_context(p, vec({1, 1.2, 0.9, 1.05}), vec({10, 20, 10, 15}));
    CHECK(jain_masked(ctx, 3.7 * p) == doctest::Approx(jain_masked(ctx, p)).epsilon(1e-14));
    CHECK(jain_gradient(ctx, p).dot(p) == doctest::Approx(0.0).epsilon(1e-12));
}
