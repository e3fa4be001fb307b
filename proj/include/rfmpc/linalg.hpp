#ifndef RFMPC_LINALG_HPP
#define RFMPC_LINALG_HPP

#include "rfmpc/mat.hpp"

namespace rfmpc {

/// Cholesky factorization A = L L^T of a symmetric positive definite matrix.
class Cholesky {
 public:
  /// Factors a; returns false (and leaves the object unusable) if a is not
  /// numerically positive definite.
  bool factor(const Mat& a);

  /// Solves L L^T x = b in place.
  void solve_in_place(Vec& b) const;
  Vec solve(Vec b) const { solve_in_place(b); return b; }

  bool ok() const { return ok_; }
  const Mat& l() const { return l_; }

 private:
  Mat l_;
  bool ok_ = false;
};

/// Solves A x = b for symmetric positive definite A. Throws on failure.
Vec solve_spd(const Mat& a, const Vec& b);

/// Eigenvalues of a symmetric matrix via cyclic Jacobi rotations, ascending.
Vec eigenvalues_sym(Mat a, int max_sweeps = 64);

}  // namespace rfmpc

#endif  // RFMPC_LINALG_HPP
