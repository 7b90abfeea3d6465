#pragma once

#include <cstddef>
#include <span>
#include <string_view>

// Dense kernels used inside the market loop. Each has a scalar reference
// implementation and, where the CPU supports it, an AVX2/FMA variant picked at
// runtime. Results of the two paths agree to rounding, not bit-for-bit.
namespace dlmp::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa) noexcept;
bool isa_supported(Isa isa) noexcept;
Isa best_isa() noexcept;
Isa active_isa() noexcept;
// Throws std::invalid_argument if the ISA is not available on this CPU/build.
void set_isa(Isa isa);

// y = A x, A row-major rows x cols.
void gemv(std::span<const double> a, std::size_t rows, std::size_t cols,
          std::span<const double> x, std::span<double> y);
// y = A^T w, A row-major rows x cols.
void gemv_t(std::span<const double> a, std::size_t rows, std::size_t cols,
            std::span<const double> w, std::span<double> y);
double dot(std::span<const double> x, std::span<const double> y);
// mu <- max(mu + eta g, 0)
void ascend_project(std::span<double> mu, std::span<const double> g, double eta);
// out = mu + eta max(g, 0)
void penalized_multiplier(std::span<const double> mu, std::span<const double> g,
                          double eta, std::span<double> out);
// sum_i max((ab_i - c)/(c b_i), 0) - g_i
double log_demand_sum(std::span<const double> ab, std::span<const double> b,
                      std::span<const double> g, double c);

#define DLMP_KERNEL_DECLS                                                              \
    void gemv(const double* a, std::size_t rows, std::size_t cols, const double* x,    \
              double* y);                                                              \
    void gemv_t(const double* a, std::size_t rows, std::size_t cols, const double* w,  \
                double* y);                                                            \
    double dot(const double* x, const double* y, std::size_t n);                       \
    void ascend_project(double* mu, const double* g, double eta, std::size_t n);       \
    void penalized_multiplier(const double* mu, const double* g, double eta,           \
                              double* out, std::size_t n);                             \
    double log_demand_sum(const double* ab, const double* b, const double* g,          \
                          double c, std::size_t n);

namespace scalar {
DLMP_KERNEL_DECLS
}
namespace avx2 {
DLMP_KERNEL_DECLS
}

#undef DLMP_KERNEL_DECLS

} // namespace dlmp::kernels
