#ifndef RFMPC_PREDICTION_HPP
#define RFMPC_PREDICTION_HPP

#include <array>
#include <vector>

#include "rfmpc/dynamics.hpp"
#include "rfmpc/mat.hpp"
#include "rfmpc/qp.hpp"

namespace rfmpc {

struct HorizonConfig {
  int n = 16;       // prediction horizon (steps)
  int nc = 16;      // control horizon (steps)
  double ts = 0.02; // sampling time (s)

  /// Throws unless 1 <= nc <= n and ts > 0.
  void validate() const;
};

/// Stacked N-step evolution of the increment-augmented system:
///   X = Psi xi + Phi dU + gamma,  eta = C X
/// with X the 5N stacked states and eta the 4N stacked error outputs.
struct EvolutionMatrices {
  Mat psi;    // 5N x 5, row block j is Ad^j
  Mat phi;    // 5N x Nc, block (j,i) = Ad^(j-i) Bd, zero increments past Nc
  Vec gamma;  // 5N
  Mat c;      // 4N x 5N output selector
};

/// Residual-corrected evolution (psi_hat stays equal to the nominal psi).
struct AugmentedEvolution {
  Mat psi_hat;
  Mat phi_hat;     // phi + future-increment residual coefficients
  Vec gamma_hat;   // gamma + intercepts and past-increment residual terms
};

struct QpWeights {
  std::array<double, 4> q1 = {100.0, 20.0, 20.0, 3.0};  // per-output, every step
  double q2 = 500.0;      // increment weight
  double lambda = 1000.0; // slack weight

  /// Throws unless q1 >= 0 and q2, lambda > 0 (strict convexity).
  void validate() const;
};

struct Bounds {
  double du_lo = -0.012, du_hi = 0.012;  // rad per step
  double u_lo = -0.55, u_hi = 0.55;      // rad
  std::array<double, 4> eta_lo = {-2.5, -5.0, -0.8, -3.0};
  std::array<double, 4> eta_hi = {2.5, 5.0, 0.8, 3.0};

  void validate() const;  // lo <= hi elementwise
};

/// Stacks the N-step evolution for time-invariant matrices.
EvolutionMatrices build_nominal(const LtvMatrices& ltv, const HorizonConfig& hcfg);

/// Same, but with a per-row disturbance vector (curvature preview): dd_rows[j]
/// acts on the transition into prediction row j+1. dd_rows must have N entries.
EvolutionMatrices build_nominal(const LtvMatrices& ltv, const HorizonConfig& hcfg,
                                const std::vector<Vec>& dd_rows);

/// Injects per-row leaf-linear residual models into the evolution. thetas[j]
/// is the (N+1) x 4 coefficient matrix of prediction row j+1: intercept row 0,
/// then one row per window increment (oldest first, window ending at the
/// predicted transition). past_increments are the last N-1 applied increments,
/// oldest first. Residues enter the four error-state rows of their own
/// prediction row only.
AugmentedEvolution build_augmented(const EvolutionMatrices& nom,
                                   const std::vector<Mat>& thetas,
                                   const Vec& past_increments,
                                   const HorizonConfig& hcfg);

/// Condenses tracking objective and constraints into a QP over z = [dU; sigma]:
///   H = Phi_hat^T C^T Q1 C Phi_hat + Q2 I (+ lambda on sigma),
///   f = Phi_hat^T C^T Q1 (C (Psi xi + gamma_hat) - eta_ref).
/// Constraints: box on each increment, cumulative bounds keeping the absolute
/// steering inside [u_lo, u_hi], soft two-sided state bounds relaxed by the
/// shared slack, and sigma >= 0.
QpProblem condense_qp(const AugmentedEvolution& aug, const Mat& c,
                      const AugmentedState& xi, const QpWeights& w, const Bounds& b,
                      const Vec& eta_ref, const HorizonConfig& hcfg);

}  // namespace rfmpc

#endif  // RFMPC_PREDICTION_HPP
