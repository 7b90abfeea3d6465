#include "dlmp/kernels.hpp"

#include <atomic>
#include <cassert>
#include <stdexcept>
#include <string>

namespace dlmp::kernels {

namespace {

struct Table {
    decltype(&scalar::gemv) gemv;
    decltype(&scalar::gemv_t) gemv_t;
    decltype(&scalar::dot) dot;
    decltype(&scalar::ascend_project) ascend_project;
    decltype(&scalar::penalized_multiplier) penalized_multiplier;
    decltype(&scalar::log_demand_sum) log_demand_sum;
};

constexpr Table scalar_table{scalar::gemv, scalar::gemv_t, scalar::dot, scalar::ascend_project,
                             scalar::penalized_multiplier, scalar::log_demand_sum};
#if defined(DLMP_HAVE_AVX2)
constexpr Table avx2_table{avx2::gemv, avx2::gemv_t, avx2::dot, avx2::ascend_project,
                           avx2::penalized_multiplier, avx2::log_demand_sum};
#endif

std::atomic<Isa>& current()
{
    static std::atomic<Isa> isa{best_isa()};
    return isa;
}

const Table& table()
{
#if defined(DLMP_HAVE_AVX2)
    if (current().load(std::memory_order_relaxed) == Isa::avx2) return avx2_table;
#endif
    return scalar_table;
}

} // namespace

std::string_view isa_name(Isa isa) noexcept
{
    return isa == Isa::avx2 ? "avx2" : "scalar";
}

bool isa_supported(Isa isa) noexcept
{
    if (isa == Isa::scalar) return true;
#if defined(DLMP_HAVE_AVX2)
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Isa best_isa() noexcept
{
    return isa_supported(Isa::avx2) ? Isa::avx2 : Isa::scalar;
}

Isa active_isa() noexcept { return current().load(); }

void set_isa(Isa isa)
{
    if (!isa_supported(isa))
        throw std::invalid_argument("kernel ISA not supported: " + std::string(isa_name(isa)));
    current().store(isa);
}

void gemv(std::span<const double> a, std::size_t rows, std::size_t cols,
          std::span<const double> x, std::span<double> y)
{
    assert(a.size() >= rows * cols && x.size() >= cols && y.size() >= rows);
    table().gemv(a.data(), rows, cols, x.data(), y.data());
}

void gemv_t(std::span<const double> a, std::size_t rows, std::size_t cols,
            std::span<const double> w, std::span<double> y)
{
    assert(a.size() >= rows * cols && w.size() >= rows && y.size() >= cols);
    table().gemv_t(a.data(), rows, cols, w.data(), y.data());
}

double dot(std::span<const double> x, std::span<const double> y)
{
    assert(x.size() == y.size());
    return table().dot(x.data(), y.data(), x.size());
}

void ascend_project(std::span<double> mu, std::span<const double> g, double eta)
{
    assert(mu.size() == g.size());
    table().ascend_project(mu.data(), g.data(), eta, mu.size());
}

void penalized_multiplier(std::span<const double> mu, std::span<const double> g, double eta,
                          std::span<double> out)
{
    assert(mu.size() == g.size() && out.size() == mu.size());
    table().penalized_multiplier(mu.data(), g.data(), eta, out.data(), mu.size());
}

double log_demand_sum(std::span<const double> ab, std::span<const double> b,
                      std::span<const double> g, double c)
{
    assert(ab.size() == b.size() && g.size() == b.size());
    return table().log_demand_sum(ab.data(), b.data(), g.data(), c, b.size());
}

} // namespace dlmp::kernels
