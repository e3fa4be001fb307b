#ifndef RFMPC_SIM_HPP
#define RFMPC_SIM_HPP

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "rfmpc/config.hpp"
#include "rfmpc/controller.hpp"
#include "rfmpc/dynamics.hpp"
#include "rfmpc/forest.hpp"
#include "rfmpc/path.hpp"

namespace rfmpc {

enum class SimEndStatus { Finished, CorridorExit, StepLimit };

struct SimStep {
  double t = 0.0;
  PlantState plant;   // state at the start of the step
  ErrorState err;
  double du = 0.0;    // applied increment
  double u = 0.0;     // absolute steering after applying du
  double sigma = 0.0;
  int qp_status = 0;  // 0 solved, 1 max-iter, 2 primal-infeasible
  int qp_iters = 0;
  double step_ms = 0.0;
  std::array<double, 4> eps_pred{};  // predicted first-row residue
  // telemetry kept in memory only (not part of the CSV schema)
  double r_prim = 0.0, r_dual = 0.0, r_comp = 0.0;
  bool fallback = false;
};

struct SimLog {
  std::vector<SimStep> steps;
  SimEndStatus end_status = SimEndStatus::Finished;
  double ts = 0.02;
};

/// Runs the closed loop on one path: project, control, apply mismatch
/// (actuator lag), integrate the truth plant. With excitation set, seeded
/// steering dither of amplitude sim.dither is added to the applied command
/// (data-collection runs). Deterministic for a fixed config and seed up to
/// the wall-clock telemetry fields.
SimLog run_closed_loop(const ExperimentConfig& cfg, const ReferencePath& path,
                       const ResidualForest* forest, bool excitation = false);

std::vector<MeasuredStep> to_measured_steps(const SimLog& log);

struct ChannelMetrics {
  double mae = 0.0, rmse = 0.0, me = 0.0;
};

struct EvalReport {
  ChannelMetrics e1, e2;
  double timing_mean_ms = 0.0, timing_max_ms = 0.0;
  std::optional<double> pe_percent;  // lateral-MAE reduction vs a baseline
};

EvalReport evaluate(const SimLog& log);
EvalReport evaluate_with_baseline(const SimLog& log, const SimLog& baseline);
std::string eval_report_json(const EvalReport& report);

/// SimLog CSV: columns t, X, Y, psi, vy, r, e1, e1d, e2, e2d, du, u, sigma,
/// qp_status, qp_iters, step_ms, eps_pred_0..3. step_ms is written as 0
/// unless include_timing is set, keeping seeded runs byte-identical.
void write_simlog_csv(const std::string& path, const SimLog& log, bool include_timing);
SimLog read_simlog_csv(const std::string& path);

}  // namespace rfmpc

#endif  // RFMPC_SIM_HPP
