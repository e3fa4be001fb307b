#ifndef RFMPC_MAT_HPP
#define RFMPC_MAT_HPP

#include <cassert>
#include <cstddef>
#include <vector>

namespace rfmpc {

using Vec = std::vector<double>;

/// Dense row-major matrix of doubles.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), d_(rows * cols, 0.0) {}

  static Mat identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return d_.empty(); }

  double& operator()(std::size_t i, std::size_t j) {
    assert(i < rows_ && j < cols_);
    return d_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    assert(i < rows_ && j < cols_);
    return d_[i * cols_ + j];
  }

  double* row(std::size_t i) { return d_.data() + i * cols_; }
  const double* row(std::size_t i) const { return d_.data() + i * cols_; }
  double* data() { return d_.data(); }
  const double* data() const { return d_.data(); }

  bool operator==(const Mat& o) const = default;

 private:
  std::size_t rows_ = 0, cols_ = 0;
  Vec d_;
};

Mat matmul(const Mat& a, const Mat& b);       // A B
Mat matmul_tn(const Mat& a, const Mat& b);    // A^T B
Mat transpose(const Mat& a);
Vec matvec(const Mat& a, const Vec& x);       // A x
Vec matvec_t(const Mat& a, const Vec& x);     // A^T x

// H = W^T diag(d) W; pass empty d for unweighted. Exactly symmetric output.
Mat gram(const Mat& w, const Vec& d);

void add_in_place(Mat& a, const Mat& b);
void add_in_place(Vec& a, const Vec& b);
void sub_in_place(Vec& a, const Vec& b);
void axpy(double alpha, const Vec& x, Vec& y);
double dot(const Vec& a, const Vec& b);
double max_abs(const Vec& v);
double max_abs_diff(const Vec& a, const Vec& b);
double max_abs_diff(const Mat& a, const Mat& b);

}  // namespace rfmpc

#endif  // RFMPC_MAT_HPP
