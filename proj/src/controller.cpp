#include "rfmpc/controller.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace rfmpc {

Vec warm_start_shift(const Vec& prev, std::size_t nc) {
  if (prev.empty()) return Vec(nc, 0.0);
  if (prev.size() != nc)
    throw std::invalid_argument("warm_start_shift: plan length mismatch");
  Vec out(nc);
  for (std::size_t i = 0; i + 1 < nc; ++i) out[i] = prev[i + 1];
  out[nc - 1] = prev[nc - 1];
  return out;
}

std::vector<FeatureWindow> estimate_future_windows(const AugmentedState& xi,
                                                   const LtvMatrices& ltv,
                                                   const std::vector<Vec>& dd_rows,
                                                   const Vec& init_controls,
                                                   const ControllerHistory& hist,
                                                   const HorizonConfig& hcfg) {
  hcfg.validate();
  const std::size_t n = static_cast<std::size_t>(hcfg.n);
  const std::size_t nc = static_cast<std::size_t>(hcfg.nc);
  if (hist.states.size() < n || hist.increments.size() < n)
    throw std::runtime_error("estimate_future_windows: insufficient history");
  if (init_controls.size() != nc)
    throw std::invalid_argument("estimate_future_windows: init control length mismatch");
  if (dd_rows.size() != n)
    throw std::invalid_argument("estimate_future_windows: need N disturbance rows");

  auto du_plan = [&](std::size_t i) { return i < nc ? init_controls[i] : 0.0; };

  // Nominal rollout: pred[i] is the estimated state at step k+i (pred[0] is
  // the measurement itself).
  std::vector<Vec> pred(n);
  pred[0] = xi.as_vec();
  for (std::size_t i = 1; i < n; ++i) {
    Vec x = matvec(ltv.ad, pred[i - 1]);
    for (std::size_t r = 0; r < 5; ++r)
      x[r] += ltv.bd[r] * du_plan(i - 1) + dd_rows[i - 1][r];
    pred[i] = std::move(x);
  }

  const std::size_t hs = hist.states.size();
  const std::size_t hi = hist.increments.size();

  std::vector<FeatureWindow> windows(n);
  for (std::size_t j = 1; j <= n; ++j) {
    FeatureWindow& w = windows[j - 1];
    w.zn.reserve(4 * n);
    w.zc.reserve(n);
    // window covers steps k+j-n .. k+j-1
    for (std::size_t p = 0; p < n; ++p) {
      const long off = static_cast<long>(j) - static_cast<long>(n) + static_cast<long>(p);
      if (off <= 0) {
        const ErrorState& e = hist.states[hs - 1 + off];
        w.zn.insert(w.zn.end(), {e.e1, e.e1_dot, e.e2, e.e2_dot});
      } else {
        const Vec& x = pred[static_cast<std::size_t>(off)];
        w.zn.insert(w.zn.end(), {x[0], x[1], x[2], x[3]});
      }
      // increment applied during the transition starting at that step
      if (off < 0) {
        w.zc.push_back(hist.increments[hi + off]);
      } else {
        w.zc.push_back(du_plan(static_cast<std::size_t>(off)));
      }
    }
  }
  return windows;
}

Controller::Controller(const ControllerConfig& cfg, const ResidualForest* forest)
    : cfg_(cfg), forest_(forest), cm_(continuous_matrices(cfg.veh)) {
  cfg_.horizon.validate();
  cfg_.weights.validate();
  cfg_.bounds.validate();
  if (forest_ && forest_->config().horizon != cfg_.horizon.n)
    throw std::invalid_argument("Controller: forest horizon does not match");
}

bool Controller::warmed_up() const {
  const std::size_t n = static_cast<std::size_t>(cfg_.horizon.n);
  return hist_.states.size() >= n && hist_.increments.size() >= n;
}

void Controller::reset() {
  hist_ = {};
  prev_plan_.clear();
  prev_duals_.clear();
  sigma_prev_ = 0.0;
  u_prev_ = 0.0;
  pending_apply_ = false;
}

void Controller::record_applied(double u_applied) {
  if (!pending_apply_)
    throw std::logic_error("Controller: record_applied without a preceding control_step");
  const std::size_t n = static_cast<std::size_t>(cfg_.horizon.n);
  hist_.increments.push_back(u_applied - u_prev_);
  if (hist_.increments.size() > n)
    hist_.increments.erase(hist_.increments.begin());
  u_prev_ = u_applied;
  pending_apply_ = false;
}

double Controller::control_step(const AugmentedState& xi, const PathContext& ctx,
                                ControlDiagnostics* diag) {
  if (pending_apply_)
    throw std::logic_error("Controller: control_step called before record_applied");
  const int n = cfg_.horizon.n;
  const int nc = cfg_.horizon.nc;
  const double ts = cfg_.horizon.ts;
  if (static_cast<int>(ctx.psi_dot_des_rows.size()) != n)
    throw std::invalid_argument("Controller: preview must have N rows");

  // history push first: the window convention includes the current state
  hist_.states.push_back(xi.err);
  if (hist_.states.size() > static_cast<std::size_t>(n))
    hist_.states.erase(hist_.states.begin());

  const Vec init = warm_start_shift(prev_plan_, static_cast<std::size_t>(nc));

  const LtvMatrices ltv = discretize_and_augment(cm_, ts, ctx.psi_dot_des_rows[0]);
  std::vector<Vec> dd_rows(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    dd_rows[static_cast<std::size_t>(j)] = Vec(5, 0.0);
    for (int r = 0; r < 4; ++r)
      dd_rows[static_cast<std::size_t>(j)][static_cast<std::size_t>(r)] =
          ts * cm_.d[static_cast<std::size_t>(r)] *
          ctx.psi_dot_des_rows[static_cast<std::size_t>(j)];
  }
  const EvolutionMatrices nom = build_nominal(ltv, cfg_.horizon, dd_rows);

  const bool use_forest = forest_ != nullptr && warmed_up();
  AugmentedEvolution aug;
  ControlDiagnostics local;
  ControlDiagnostics& d = diag ? *diag : local;
  d = {};
  d.forest_active = use_forest;

  if (use_forest) {
    const std::vector<FeatureWindow> windows =
        estimate_future_windows(xi, ltv, dd_rows, init, hist_, cfg_.horizon);
    std::vector<Mat> thetas;
    thetas.reserve(windows.size());
    d.residue_rows.resize(windows.size());
    d.leaves.resize(windows.size());
    for (std::size_t j = 0; j < windows.size(); ++j) {
      Mat theta = forest_->predict_leaf(windows[j].zn);
      d.leaves[j] = forest_->leaf_ids(windows[j].zn);
      std::array<double, 4>& row = d.residue_rows[j];
      for (int q = 0; q < 4; ++q) {
        double v = theta(0, static_cast<std::size_t>(q));
        for (int p = 0; p < n; ++p)
          v += theta(static_cast<std::size_t>(p) + 1, static_cast<std::size_t>(q)) *
               windows[j].zc[static_cast<std::size_t>(p)];
        row[static_cast<std::size_t>(q)] = v;
      }
      thetas.push_back(std::move(theta));
    }
    Vec past(hist_.increments.begin() + 1, hist_.increments.end());
    aug = build_augmented(nom, thetas, past, cfg_.horizon);
  } else {
    aug.psi_hat = nom.psi;
    aug.phi_hat = nom.phi;
    aug.gamma_hat = nom.gamma;
  }

  const Vec eta_ref(static_cast<std::size_t>(4 * n), 0.0);
  const QpProblem qp =
      condense_qp(aug, nom.c, xi, cfg_.weights, cfg_.bounds, eta_ref, cfg_.horizon);

  QpSettings settings = cfg_.qp;
  Vec warm_z(init);
  warm_z.push_back(sigma_prev_);
  settings.warm_z = warm_z;
  if (prev_duals_.size() == qp.num_constraints()) settings.warm_duals = prev_duals_;

  const auto t0 = std::chrono::steady_clock::now();
  const QpSolution sol = solve(qp, settings);
  d.solve_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
          .count();
  d.status = sol.status;
  d.iterations = sol.iterations;
  if (cfg_.benchmark_cold_start) {
    QpSettings cold = cfg_.qp;
    cold.warm_z.reset();
    cold.warm_duals.reset();
    d.cold_iterations = solve(qp, cold).iterations;
  }

  double du = 0.0;
  switch (sol.status) {
    case QpStatus::Solved: {
      prev_plan_.assign(sol.z.begin(), sol.z.begin() + nc);
      sigma_prev_ = sol.z[static_cast<std::size_t>(nc)];
      prev_duals_ = sol.duals;
      du = prev_plan_[0];
      d.sigma = sigma_prev_;
      const KktResiduals kr = kkt_residuals(qp, sol.z, sol.duals);
      d.r_prim = kr.r_prim;
      d.r_dual = kr.r_dual;
      d.r_comp = kr.r_comp;
      break;
    }
    case QpStatus::MaxIter:
      // hold the shifted previous plan
      prev_plan_ = init;
      du = init[0];
      d.fallback = true;
      break;
    case QpStatus::PrimalInfeasible:
      prev_plan_ = init;
      du = 0.0;
      d.fallback = true;
      break;
  }

  // Command saturation: the increment box and the absolute limits both hold
  // regardless of which branch produced du.
  const double du_lo = std::max(cfg_.bounds.du_lo, cfg_.bounds.u_lo - u_prev_);
  const double du_hi = std::min(cfg_.bounds.du_hi, cfg_.bounds.u_hi - u_prev_);
  du = std::clamp(du, std::min(du_lo, du_hi), std::max(du_lo, du_hi));
  const double command = u_prev_ + du;

  pending_apply_ = true;
  return command;
}

}  // namespace rfmpc
