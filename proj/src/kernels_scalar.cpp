// Reference implementations. Plain loops, no fused contractions (see the
// -ffp-contract=off build flag); the SIMD backends are tested against these.

#include "rfmpc/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace rfmpc::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scal_scalar(double alpha, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void vadd_scalar(const double* a, const double* b, double* r, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) r[i] = a[i] + b[i];
}

void vsub_scalar(const double* a, const double* b, double* r, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) r[i] = a[i] - b[i];
}

void clamp_scalar(const double* x, const double* lo, const double* hi, double* r,
                  std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) r[i] = std::min(std::max(x[i], lo[i]), hi[i]);
}

double max_abs_scalar(const double* x, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::fabs(x[i]));
  return m;
}

double max_abs_diff_scalar(const double* a, const double* b, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

void gemv_scalar(const double* a, std::size_t m, std::size_t n, const double* x,
                 double* y) {
  for (std::size_t i = 0; i < m; ++i) y[i] = dot_scalar(a + i * n, x, n);
}

void gemv_t_scalar(const double* a, std::size_t m, std::size_t n, const double* x,
                   double* y) {
  std::memset(y, 0, n * sizeof(double));
  for (std::size_t i = 0; i < m; ++i) axpy_scalar(x[i], a + i * n, y, n);
}

void gemm_scalar(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n) {
  std::memset(c, 0, m * n * sizeof(double));
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) axpy_scalar(arow[p], b + p * n, crow, n);
  }
}

void gram_weighted_scalar(const double* w, const double* d, std::size_t r,
                          std::size_t c, double* h) {
  std::memset(h, 0, c * c * sizeof(double));
  for (std::size_t s = 0; s < r; ++s) {
    const double* row = w + s * c;
    const double ds = d ? d[s] : 1.0;
    for (std::size_t i = 0; i < c; ++i) {
      const double wi = ds * row[i];
      if (wi == 0.0) continue;
      axpy_scalar(wi, row + i, h + i * c + i, c - i);  // upper triangle only
    }
  }
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < i; ++j) h[i * c + j] = h[j * c + i];
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable t = {
      dot_scalar,     axpy_scalar,   scal_scalar,         vadd_scalar,
      vsub_scalar,    clamp_scalar,  max_abs_scalar,      max_abs_diff_scalar,
      gemv_scalar,    gemv_t_scalar, gemm_scalar,         gram_weighted_scalar,
  };
  return t;
}

}  // namespace rfmpc::kernels
