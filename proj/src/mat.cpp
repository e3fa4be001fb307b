#include "rfmpc/mat.hpp"

#include <cassert>

#include "rfmpc/kernels.hpp"

namespace rfmpc {

namespace kn = kernels;

Mat Mat::identity(std::size_t n) {
  Mat m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Mat matmul(const Mat& a, const Mat& b) {
  assert(a.cols() == b.rows());
  Mat c(a.rows(), b.cols());
  kn::gemm(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
  return c;
}

Mat matmul_tn(const Mat& a, const Mat& b) {
  assert(a.rows() == b.rows());
  Mat at = transpose(a);
  Mat c(a.cols(), b.cols());
  kn::gemm(at.data(), b.data(), c.data(), at.rows(), at.cols(), b.cols());
  return c;
}

Mat transpose(const Mat& a) {
  Mat t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Vec matvec(const Mat& a, const Vec& x) {
  assert(x.size() == a.cols());
  Vec y(a.rows());
  kn::gemv(a.data(), a.rows(), a.cols(), x.data(), y.data());
  return y;
}

Vec matvec_t(const Mat& a, const Vec& x) {
  assert(x.size() == a.rows());
  Vec y(a.cols());
  kn::gemv_t(a.data(), a.rows(), a.cols(), x.data(), y.data());
  return y;
}

Mat gram(const Mat& w, const Vec& d) {
  assert(d.empty() || d.size() == w.rows());
  Mat h(w.cols(), w.cols());
  kn::gram_weighted(w.data(), d.empty() ? nullptr : d.data(), w.rows(), w.cols(), h.data());
  return h;
}

void add_in_place(Mat& a, const Mat& b) {
  assert(a.rows() == b.rows() && a.cols() == b.cols());
  kn::vadd(a.data(), b.data(), a.data(), a.rows() * a.cols());
}

void add_in_place(Vec& a, const Vec& b) {
  assert(a.size() == b.size());
  kn::vadd(a.data(), b.data(), a.data(), a.size());
}

void sub_in_place(Vec& a, const Vec& b) {
  assert(a.size() == b.size());
  kn::vsub(a.data(), b.data(), a.data(), a.size());
}

void axpy(double alpha, const Vec& x, Vec& y) {
  assert(x.size() == y.size());
  kn::axpy(alpha, x.data(), y.data(), x.size());
}

double dot(const Vec& a, const Vec& b) {
  assert(a.size() == b.size());
  return kn::dot(a.data(), b.data(), a.size());
}

double max_abs(const Vec& v) { return kn::max_abs(v.data(), v.size()); }

double max_abs_diff(const Vec& a, const Vec& b) {
  assert(a.size() == b.size());
  return kn::max_abs_diff(a.data(), b.data(), a.size());
}

double max_abs_diff(const Mat& a, const Mat& b) {
  assert(a.rows() == b.rows() && a.cols() == b.cols());
  return kn::max_abs_diff(a.data(), b.data(), a.rows() * a.cols());
}

}  // namespace rfmpc
