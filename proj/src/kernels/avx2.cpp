#include "dlmp/kernels.hpp"

#include <immintrin.h>

#include <algorithm>

namespace dlmp::kernels::avx2 {

namespace {

inline double hsum(__m256d v)
{
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

} // namespace

double dot(const double* x, const double* y, std::size_t n)
{
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4)
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += x[i] * y[i];
    return s;
}

void gemv(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y)
{
    for (std::size_t i = 0; i < rows; ++i) y[i] = dot(a + i * cols, x, cols);
}

void gemv_t(const double* a, std::size_t rows, std::size_t cols, const double* w, double* y)
{
    std::fill(y, y + cols, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
        const double wi = w[i];
        if (wi == 0.0) continue;
        const double* row = a + i * cols;
        const __m256d vw = _mm256_set1_pd(wi);
        std::size_t j = 0;
        for (; j + 4 <= cols; j += 4) {
            __m256d acc = _mm256_loadu_pd(y + j);
            _mm256_storeu_pd(y + j, _mm256_fmadd_pd(vw, _mm256_loadu_pd(row + j), acc));
        }
        for (; j < cols; ++j) y[j] += wi * row[j];
    }
}

void ascend_project(double* mu, const double* g, double eta, std::size_t n)
{
    const __m256d ve = _mm256_set1_pd(eta);
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_fmadd_pd(ve, _mm256_loadu_pd(g + i), _mm256_loadu_pd(mu + i));
        _mm256_storeu_pd(mu + i, _mm256_max_pd(v, zero));
    }
    for (; i < n; ++i) mu[i] = std::max(mu[i] + eta * g[i], 0.0);
}

void penalized_multiplier(const double* mu, const double* g, double eta, double* out,
                          std::size_t n)
{
    const __m256d ve = _mm256_set1_pd(eta);
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d gp = _mm256_max_pd(_mm256_loadu_pd(g + i), zero);
        _mm256_storeu_pd(out + i, _mm256_fmadd_pd(ve, gp, _mm256_loadu_pd(mu + i)));
    }
    for (; i < n; ++i) out[i] = mu[i] + eta * std::max(g[i], 0.0);
}

double log_demand_sum(const double* ab, const double* b, const double* g, double c,
                      std::size_t n)
{
    const __m256d vc = _mm256_set1_pd(c);
    const __m256d zero = _mm256_setzero_pd();
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d num = _mm256_sub_pd(_mm256_loadu_pd(ab + i), vc);
        __m256d den = _mm256_mul_pd(vc, _mm256_loadu_pd(b + i));
        __m256d x = _mm256_max_pd(_mm256_div_pd(num, den), zero);
        acc = _mm256_add_pd(acc, _mm256_sub_pd(x, _mm256_loadu_pd(g + i)));
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += std::max((ab[i] - c) / (c * b[i]), 0.0) - g[i];
    return s;
}

} // namespace dlmp::kernels::avx2
