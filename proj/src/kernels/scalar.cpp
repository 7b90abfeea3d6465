#include "dlmp/kernels.hpp"

#include <algorithm>

namespace dlmp::kernels::scalar {

void gemv(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y)
{
    for (std::size_t i = 0; i < rows; ++i) {
        const double* row = a + i * cols;
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) s += row[j] * x[j];
        y[i] = s;
    }
}

void gemv_t(const double* a, std::size_t rows, std::size_t cols, const double* w, double* y)
{
    std::fill(y, y + cols, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
        const double wi = w[i];
        if (wi == 0.0) continue;
        const double* row = a + i * cols;
        for (std::size_t j = 0; j < cols; ++j) y[j] += wi * row[j];
    }
}

double dot(const double* x, const double* y, std::size_t n)
{
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

void ascend_project(double* mu, const double* g, double eta, std::size_t n)
{
    for (std::size_t i = 0; i < n; ++i) mu[i] = std::max(mu[i] + eta * g[i], 0.0);
}

void penalized_multiplier(const double* mu, const double* g, double eta, double* out,
                          std::size_t n)
{
    for (std::size_t i = 0; i < n; ++i) out[i] = mu[i] + eta * std::max(g[i], 0.0);
}

double log_demand_sum(const double* ab, const double* b, const double* g, double c,
                      std::size_t n)
{
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        s += std::max((ab[i] - c) / (c * b[i]), 0.0) - g[i];
    return s;
}

} // namespace dlmp::kernels::scalar
