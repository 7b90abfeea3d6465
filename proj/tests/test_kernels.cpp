#include "dlmp/kernels.hpp"

#include "doctest.h"

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

using namespace dlmp::kernels;

namespace {

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n, double lo, double hi)
{
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

bool close(double a, double b, double scale)
{
    return std::abs(a - b) <= 1e-12 * std::max(1.0, scale);
}

struct IsaGuard {
    Isa saved = active_isa();
    ~IsaGuard() { set_isa(saved); }
};

template <class F>
auto with_isa(Isa isa, F f)
{
    set_isa(isa);
    return f();
}

} // namespace

TEST_CASE("dispatch reports a usable ISA")
{
    CHECK(isa_supported(Isa::scalar));
    CHECK(isa_supported(best_isa()));
    CHECK(isa_name(Isa::scalar) == "scalar");
    CHECK(isa_name(Isa::avx2) == "avx2");
    IsaGuard g;
    set_isa(Isa::scalar);
    CHECK(active_isa() == Isa::scalar);
    if (!isa_supported(Isa::avx2)) CHECK_THROWS_AS(set_isa(Isa::avx2), std::invalid_argument);
}

TEST_CASE("scalar kernels against direct loops")
{
    IsaGuard g;
    set_isa(Isa::scalar);
    const std::vector<double> a = {1, 2, 3, 4, 5, 6}; // 2 x 3
    std::vector<double> y(2), yt(3);
    gemv(a, 2, 3, std::vector<double>{1, 0, -1}, y);
    CHECK(y == std::vector<double>{-2, -2});
    gemv_t(a, 2, 3, std::vector<double>{1, 1}, yt);
    CHECK(yt == std::vector<double>{5, 7, 9});
    CHECK(dot(std::vector<double>{1, 2, 3}, std::vector<double>{4, 5, 6}) == 32.0);

    std::vector<double> mu = {0.5, 0.01};
    ascend_project(mu, std::vector<double>{-0.2, -0.2}, 0.1);
    CHECK(mu[0] == doctest::Approx(0.48));
    CHECK(mu[1] == 0.0);

    std::vector<double> out(2);
    penalized_multiplier(std::vector<double>{1, 1}, std::vector<double>{-1, 2}, 0.5, out);
    CHECK(out == std::vector<double>{1, 2});

    // a = 2, b = 1 at c = 1 gives 1; a = 1, b = 1 at c = 1 gives 0; minus g
    const double d = log_demand_sum(std::vector<double>{2, 1}, std::vector<double>{1, 1},
                                    std::vector<double>{0.25, 0.5}, 1.0);
    CHECK(d == doctest::Approx(0.25));
}

TEST_CASE("AVX2 kernels agree with the scalar reference")
{
    if (!isa_supported(Isa::avx2)) {
        MESSAGE("AVX2 not available; equivalence not exercised");
        return;
    }
    IsaGuard guard;
    std::mt19937_64 rng(7);
    for (std::size_t n : {1u, 2u, 3u, 4u, 5u, 7u, 8u, 9u, 15u, 16u, 17u, 33u, 102u, 216u}) {
        for (std::size_t rows : {1u, 3u, 6u, 17u}) {
            const auto a = random_vec(rng, rows * n, -2, 2);
            const auto x = random_vec(rng, n, -1, 1);
            const auto w = random_vec(rng, rows, -1, 1);
            std::vector<double> ys(rows), yv(rows), ts(n), tv(n);
            with_isa(Isa::scalar, [&] { gemv(a, rows, n, x, ys); return 0; });
            with_isa(Isa::avx2, [&] { gemv(a, rows, n, x, yv); return 0; });
            for (std::size_t i = 0; i < rows; ++i) CHECK(close(ys[i], yv[i], static_cast<double>(n)));
            with_isa(Isa::scalar, [&] { gemv_t(a, rows, n, w, ts); return 0; });
            with_isa(Isa::avx2, [&] { gemv_t(a, rows, n, w, tv); return 0; });
            for (std::size_t i = 0; i < n; ++i) CHECK(close(ts[i], tv[i], static_cast<double>(rows)));
        }
        const auto x = random_vec(rng, n, -1, 1);
        const auto y = random_vec(rng, n, -1, 1);
        const double ds = with_isa(Isa::scalar, [&] { return dot(x, y); });
        const double dv = with_isa(Isa::avx2, [&] { return dot(x, y); });
        CHECK(close(ds, dv, static_cast<double>(n)));

        const auto g = random_vec(rng, n, -1, 1);
        auto mu_s = random_vec(rng, n, 0, 0.5);
        auto mu_v = mu_s;
        with_isa(Isa::scalar, [&] { ascend_project(mu_s, g, 0.3); return 0; });
        with_isa(Isa::avx2, [&] { ascend_project(mu_v, g, 0.3); return 0; });
        for (std::size_t i = 0; i < n; ++i) CHECK(close(mu_s[i], mu_v[i], 1.0));

        std::vector<double> os(n), ov(n);
        with_isa(Isa::scalar, [&] { penalized_multiplier(mu_s, g, 0.7, os); return 0; });
        with_isa(Isa::avx2, [&] { penalized_multiplier(mu_s, g, 0.7, ov); return 0; });
        for (std::size_t i = 0; i < n; ++i) CHECK(close(os[i], ov[i], 1.0));

        const auto av = random_vec(rng, n, 1, 4);
        const auto bv = random_vec(rng, n, 0.5, 2);
        std::vector<double> ab(n);
        for (std::size_t i = 0; i < n; ++i) ab[i] = av[i] * bv[i];
        const auto gv = random_vec(rng, n, 0, 0.05);
        for (double c : {0.3, 1.0, 2.5, 9.0}) {
            const double ls = with_isa(Isa::scalar, [&] { return log_demand_sum(ab, bv, gv, c); });
            const double lv = with_isa(Isa::avx2, [&] { return log_demand_sum(ab, bv, gv, c); });
            CHECK(close(ls, lv, static_cast<double>(n) * 10.0));
        }
    }
}
