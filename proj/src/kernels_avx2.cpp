// AVX2/FMA variants of the dense kernels. Tail elements are handled with
// plain loops; loads are unaligned so callers need no special allocators.

#include "rfmpc/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace rfmpc::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scal_avx2(double alpha, double* x, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) x[i] *= alpha;
}

void vadd_avx2(const double* a, const double* b, double* r, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(r + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) r[i] = a[i] + b[i];
}

void vsub_avx2(const double* a, const double* b, double* r, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(r + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) r[i] = a[i] - b[i];
}

void clamp_avx2(const double* x, const double* lo, const double* hi, double* r,
                std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d v = _mm256_loadu_pd(x + i);
    v = _mm256_max_pd(v, _mm256_loadu_pd(lo + i));
    v = _mm256_min_pd(v, _mm256_loadu_pd(hi + i));
    _mm256_storeu_pd(r + i, v);
  }
  for (; i < n; ++i) r[i] = std::min(std::max(x[i], lo[i]), hi[i]);
}

double max_abs_avx2(const double* x, std::size_t n) {
  const __m256d sign = _mm256_set1_pd(-0.0);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_max_pd(acc, _mm256_andnot_pd(sign, _mm256_loadu_pd(x + i)));
  double lanes[4];
  _mm256_storeu_pd(lanes, acc);
  double m = std::max(std::max(lanes[0], lanes[1]), std::max(lanes[2], lanes[3]));
  for (; i < n; ++i) m = std::max(m, std::fabs(x[i]));
  return m;
}

double max_abs_diff_avx2(const double* a, const double* b, std::size_t n) {
  const __m256d sign = _mm256_set1_pd(-0.0);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_max_pd(acc, _mm256_andnot_pd(sign, d));
  }
  double lanes[4];
  _mm256_storeu_pd(lanes, acc);
  double m = std::max(std::max(lanes[0], lanes[1]), std::max(lanes[2], lanes[3]));
  for (; i < n; ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

void gemv_avx2(const double* a, std::size_t m, std::size_t n, const double* x,
               double* y) {
  for (std::size_t i = 0; i < m; ++i) y[i] = dot_avx2(a + i * n, x, n);
}

void gemv_t_avx2(const double* a, std::size_t m, std::size_t n, const double* x,
                 double* y) {
  std::memset(y, 0, n * sizeof(double));
  for (std::size_t i = 0; i < m; ++i) axpy_avx2(x[i], a + i * n, y, n);
}

void gemm_avx2(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n) {
  std::memset(c, 0, m * n * sizeof(double));
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) axpy_avx2(arow[p], b + p * n, crow, n);
  }
}

void gram_weighted_avx2(const double* w, const double* d, std::size_t r,
                        std::size_t c, double* h) {
  std::memset(h, 0, c * c * sizeof(double));
  for (std::size_t s = 0; s < r; ++s) {
    const double* row = w + s * c;
    const double ds = d ? d[s] : 1.0;
    for (std::size_t i = 0; i < c; ++i) {
      const double wi = ds * row[i];
      if (wi == 0.0) continue;
      axpy_avx2(wi, row + i, h + i * c + i, c - i);
    }
  }
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < i; ++j) h[i * c + j] = h[j * c + i];
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable t = {
      dot_avx2,     axpy_avx2,   scal_avx2,         vadd_avx2,
      vsub_avx2,    clamp_avx2,  max_abs_avx2,      max_abs_diff_avx2,
      gemv_avx2,    gemv_t_avx2, gemm_avx2,         gram_weighted_avx2,
  };
  return &t;
}

}  // namespace rfmpc::kernels

#endif  // x86-64
