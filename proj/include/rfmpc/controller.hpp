#ifndef RFMPC_CONTROLLER_HPP
#define RFMPC_CONTROLLER_HPP

#include <array>
#include <vector>

#include "rfmpc/dynamics.hpp"
#include "rfmpc/forest.hpp"
#include "rfmpc/prediction.hpp"
#include "rfmpc/qp.hpp"

namespace rfmpc {

struct ControllerConfig {
  VehicleParams veh;
  HorizonConfig horizon;
  QpWeights weights;
  Bounds bounds;
  QpSettings qp;
  // Re-solves every QP cold and reports the iteration count next to the
  // warm-started one (ControlDiagnostics::cold_iterations). Benchmarks only.
  bool benchmark_cold_start = false;
};

/// Curvature preview: psi_dot_des for each prediction row, row j taken at the
/// arc length the vehicle reaches after j-1 steps at constant speed.
struct PathContext {
  Vec psi_dot_des_rows;  // N entries
};

struct ControlDiagnostics {
  QpStatus status = QpStatus::Solved;
  int iterations = 0;
  int cold_iterations = -1;  // only with ControllerConfig::benchmark_cold_start
  double solve_ms = 0.0;
  double sigma = 0.0;
  bool forest_active = false;
  bool fallback = false;  // held or zeroed increment after a solver failure
  double r_prim = 0.0, r_dual = 0.0, r_comp = 0.0;
  std::vector<std::array<double, 4>> residue_rows;  // predicted residues per row
  std::vector<std::vector<int>> leaves;             // per row, per tree leaf ids
};

/// Rolling record of the last N error states and the last N applied
/// increments (oldest first).
struct ControllerHistory {
  std::vector<ErrorState> states;
  std::vector<double> increments;
};

/// Shifted warm start: drop the first element, repeat the last; all zeros
/// when no previous solution exists.
Vec warm_start_shift(const Vec& prev, std::size_t nc);

/// Rolls the nominal model forward under the initial control plan and builds
/// the N routing windows: window j holds the N states/increments ending at
/// predicted step k+j-1, mixing recorded history (steps before k) with
/// nominal predictions and planned increments (steps k onward). Throws when
/// the history is shorter than N.
std::vector<FeatureWindow> estimate_future_windows(const AugmentedState& xi,
                                                   const LtvMatrices& ltv,
                                                   const std::vector<Vec>& dd_rows,
                                                   const Vec& init_controls,
                                                   const ControllerHistory& hist,
                                                   const HorizonConfig& hcfg);

/// Receding-horizon steering controller. Each step: shift the previous plan,
/// rebuild the evolution matrices with curvature preview, query the residual
/// forest for per-row leaf coefficients (once warmed up), condense and solve
/// the QP, apply the first increment. The forest pointer may be null (pure
/// nominal MPC) and is not owned.
class Controller {
 public:
  Controller(const ControllerConfig& cfg, const ResidualForest* forest);

  /// Computes the steering command for the current state. The caller must
  /// report what was actually applied via record_applied before the next
  /// step (the applied value may differ from the command, e.g. dither).
  double control_step(const AugmentedState& xi, const PathContext& ctx,
                      ControlDiagnostics* diag = nullptr);

  void record_applied(double u_applied);

  double u_prev() const { return u_prev_; }
  bool warmed_up() const;
  const ControllerHistory& history() const { return hist_; }
  const Vec& previous_plan() const { return prev_plan_; }
  void reset();

 private:
  ControllerConfig cfg_;
  const ResidualForest* forest_;
  ContinuousMatrices cm_;
  ControllerHistory hist_;
  Vec prev_plan_;    // empty until the first solve
  Vec prev_duals_;
  double sigma_prev_ = 0.0;
  double u_prev_ = 0.0;
  bool pending_apply_ = false;
};

}  // namespace rfmpc

#endif  // RFMPC_CONTROLLER_HPP
