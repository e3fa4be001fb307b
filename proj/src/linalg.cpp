#include "rfmpc/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rfmpc {

bool Cholesky::factor(const Mat& a) {
  ok_ = false;
  if (a.rows() != a.cols()) return false;
  const std::size_t n = a.rows();
  l_ = Mat(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l_(j, k) * l_(j, k);
    if (!(diag > 0.0) || !std::isfinite(diag)) return false;
    const double ljj = std::sqrt(diag);
    l_(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l_(i, k) * l_(j, k);
      l_(i, j) = s / ljj;
    }
  }
  ok_ = true;
  return true;
}

void Cholesky::solve_in_place(Vec& b) const {
  const std::size_t n = l_.rows();
  // forward: L y = b
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l_(i, k) * b[k];
    b[i] = s / l_(i, i);
  }
  // backward: L^T x = y
  for (std::size_t ii = n; ii-- > 0;) {
    double s = b[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l_(k, ii) * b[k];
    b[ii] = s / l_(ii, ii);
  }
}

Vec solve_spd(const Mat& a, const Vec& b) {
  Cholesky ch;
  if (!ch.factor(a)) throw std::runtime_error("solve_spd: matrix not positive definite");
  return ch.solve(b);
}

Vec eigenvalues_sym(Mat a, int max_sweeps) {
  const std::size_t n = a.rows();
  if (n != a.cols()) throw std::invalid_argument("eigenvalues_sym: square matrix required");
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  Vec ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a(i, i);
  std::sort(ev.begin(), ev.end());
  return ev;
}

}  // namespace rfmpc
