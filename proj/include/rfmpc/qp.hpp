#ifndef RFMPC_QP_HPP
#define RFMPC_QP_HPP

#include <optional>

#include "rfmpc/mat.hpp"

namespace rfmpc {

/// Convex QP: minimize 1/2 z^T H z + f^T z subject to lb <= G z <= ub.
/// Equality rows are expressed as lb == ub. lb/ub entries may be +-inf;
/// H, f, G must be finite and H symmetric.
struct QpProblem {
  Mat h;
  Vec f;
  Mat g;   // m x n; m == 0 means unconstrained
  Vec lb;  // m
  Vec ub;  // m

  std::size_t num_vars() const { return f.size(); }
  std::size_t num_constraints() const { return lb.size(); }

  /// Throws std::invalid_argument on dimension mismatch, non-finite
  /// H/f/G data, NaN bounds or asymmetric H (tolerance 1e-12).
  void validate() const;
};

enum class QpStatus { Solved, MaxIter, PrimalInfeasible };

struct QpSolution {
  Vec z;
  Vec duals;  // one multiplier per constraint row; >= 0 at upper, <= 0 at lower
  QpStatus status = QpStatus::MaxIter;
  int iterations = 0;
  double r_prim = 0.0;
  double r_dual = 0.0;
};

struct QpSettings {
  double eps_abs = 1e-6;
  double eps_rel = 1e-6;
  int max_iter = 4000;
  std::optional<Vec> warm_z;
  std::optional<Vec> warm_duals;

  // Operator-splitting internals.
  double rho = 0.1;          // penalty on inequality rows
  double rho_eq_scale = 1e3; // extra penalty factor on equality rows
  double sigma = 1e-6;       // proximal regularization
  double alpha = 1.6;        // over-relaxation
  int check_interval = 25;   // residual / infeasibility test period
  bool polish = true;        // active-set KKT refinement after convergence
};

struct KktResiduals {
  double r_prim = 0.0;  // max violation of lb <= Gz <= ub
  double r_dual = 0.0;  // ||Hz + f + G^T duals||_inf
  double r_comp = 0.0;  // max complementarity violation
};

/// KKT residuals of a candidate primal/dual pair.
KktResiduals kkt_residuals(const QpProblem& p, const Vec& z, const Vec& duals);

/// Deterministic dense QP solve: fixed-penalty ADMM with over-relaxation and
/// Ruiz equilibration, followed by an active-set polish that solves the KKT
/// equality system on the identified active set. The polished iterate is kept
/// only when it does not increase the objective and improves the residuals.
QpSolution solve(const QpProblem& p, const QpSettings& settings = {});

}  // namespace rfmpc

#endif  // RFMPC_QP_HPP
