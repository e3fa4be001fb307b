#include "rfmpc/sim.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "rfmpc/rng.hpp"

namespace rfmpc {

namespace {

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw std::runtime_error("log csv: bad number '" + s + "'");
  return v;
}

int status_code(QpStatus s) {
  switch (s) {
    case QpStatus::Solved: return 0;
    case QpStatus::MaxIter: return 1;
    case QpStatus::PrimalInfeasible: return 2;
  }
  return 1;
}

}  // namespace

SimLog run_closed_loop(const ExperimentConfig& cfg, const ReferencePath& path,
                       const ResidualForest* forest, bool excitation) {
  cfg.validate();
  if (path.size() < 2) throw std::invalid_argument("run_closed_loop: empty path");

  ControllerConfig ccfg;
  ccfg.veh = cfg.veh;
  ccfg.horizon = cfg.horizon;
  ccfg.weights = cfg.weights;
  ccfg.bounds = cfg.bounds;
  Controller ctrl(ccfg, forest);

  PlantParams pp;
  pp.veh = cfg.veh;
  pp.veh.caf *= cfg.plant.stiffness_scale;
  pp.veh.car *= cfg.plant.stiffness_scale;
  pp.mu = cfg.plant.mu;
  pp.crosswind_moment = cfg.plant.crosswind_moment;
  pp.delta_max = cfg.plant.delta_max;

  const ReferencePoint& start = path[0];
  PlantState plant;
  plant.x = start.x - cfg.sim.init_offset_e1 * std::sin(start.psi);
  plant.y = start.y + cfg.sim.init_offset_e1 * std::cos(start.psi);
  plant.psi = start.psi + cfg.sim.init_offset_e2;
  plant.vx = cfg.veh.vx;

  const double ts = cfg.horizon.ts;
  const int n = cfg.horizon.n;
  const double s_stop = path.total_length() - cfg.sim.end_margin;
  const long max_steps =
      3 * static_cast<long>(path.total_length() / (cfg.veh.vx * ts)) + 500;

  Rng dither_rng = Rng::stream(cfg.seed, 0xD17);
  const double lag_alpha =
      cfg.plant.steer_lag_tau > 0.0 ? 1.0 - std::exp(-ts / cfg.plant.steer_lag_tau) : 1.0;
  double delta_act = 0.0;

  SimLog log;
  log.ts = ts;
  log.end_status = SimEndStatus::StepLimit;
  std::size_t hint = 0;

  for (long k = 0; k < max_steps; ++k) {
    const auto [err, idx] = error_state(plant, path, hint);
    hint = idx;
    if (std::fabs(err.e1) >= cfg.sim.corridor) {
      log.end_status = SimEndStatus::CorridorExit;
      break;
    }
    const double s_here = path[idx].s;
    if (s_here >= s_stop) {
      log.end_status = SimEndStatus::Finished;
      break;
    }

    PathContext ctx;
    ctx.psi_dot_des_rows.resize(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j)
      ctx.psi_dot_des_rows[static_cast<std::size_t>(j)] =
          cfg.veh.vx * path.kappa_at(s_here + cfg.veh.vx * ts * static_cast<double>(j));

    AugmentedState xi;
    xi.err = err;
    xi.u_prev = ctrl.u_prev();

    ControlDiagnostics diag;
    const double u_prev_before = ctrl.u_prev();
    const auto t0 = std::chrono::steady_clock::now();
    double command = ctrl.control_step(xi, ctx, &diag);
    const double control_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    if (excitation && cfg.sim.dither > 0.0) {
      command += cfg.sim.dither * (2.0 * dither_rng.uniform() - 1.0);
      command = std::clamp(command, cfg.bounds.u_lo, cfg.bounds.u_hi);
    }
    ctrl.record_applied(command);

    delta_act += lag_alpha * (command - delta_act);
    const double delta_plant =
        std::clamp(cfg.plant.steer_gain * delta_act, -pp.delta_max, pp.delta_max);

    SimStep step;
    step.t = static_cast<double>(k) * ts;
    step.plant = plant;
    step.err = err;
    step.du = command - u_prev_before;
    step.u = command;
    step.sigma = diag.sigma;
    step.qp_status = status_code(diag.status);
    step.qp_iters = diag.iterations;
    step.eps_pred = diag.residue_rows.empty() ? std::array<double, 4>{}
                                              : diag.residue_rows.front();
    step.r_prim = diag.r_prim;
    step.r_dual = diag.r_dual;
    step.r_comp = diag.r_comp;
    step.fallback = diag.fallback;

    step.step_ms = control_ms;  // controller compute time for this step
    plant = plant_step(plant, pp, delta_plant, ts);
    log.steps.push_back(step);
  }
  return log;
}

std::vector<MeasuredStep> to_measured_steps(const SimLog& log) {
  std::vector<MeasuredStep> out;
  out.reserve(log.steps.size());
  for (const SimStep& s : log.steps) {
    MeasuredStep m;
    m.err = s.err;
    m.du = s.du;
    m.u = s.u;
    m.psi_dot_des = s.plant.r - s.err.e2_dot;  // e2_dot = r - psi_dot_des
    out.push_back(m);
  }
  return out;
}

namespace {

ChannelMetrics channel_metrics(const SimLog& log, double ErrorState::* field) {
  ChannelMetrics m;
  double sq = 0.0;
  for (const SimStep& s : log.steps) {
    const double v = std::fabs(s.err.*field);
    m.mae += v;
    sq += v * v;
    m.me = std::max(m.me, v);
  }
  const double n = static_cast<double>(log.steps.size());
  m.mae /= n;
  m.rmse = std::sqrt(sq / n);
  return m;
}

}  // namespace

EvalReport evaluate(const SimLog& log) {
  if (log.steps.empty()) throw std::invalid_argument("evaluate: empty log");
  EvalReport r;
  r.e1 = channel_metrics(log, &ErrorState::e1);
  r.e2 = channel_metrics(log, &ErrorState::e2);
  double sum = 0.0;
  for (const SimStep& s : log.steps) {
    sum += s.step_ms;
    r.timing_max_ms = std::max(r.timing_max_ms, s.step_ms);
  }
  r.timing_mean_ms = sum / static_cast<double>(log.steps.size());
  return r;
}

EvalReport evaluate_with_baseline(const SimLog& log, const SimLog& baseline) {
  EvalReport r = evaluate(log);
  const EvalReport base = evaluate(baseline);
  if (base.e1.mae > 0.0)
    r.pe_percent = 100.0 * (base.e1.mae - r.e1.mae) / base.e1.mae;
  else
    r.pe_percent = 0.0;
  return r;
}

std::string eval_report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["e1"] = {{"mae", report.e1.mae}, {"rmse", report.e1.rmse}, {"me", report.e1.me}};
  j["e2"] = {{"mae", report.e2.mae}, {"rmse", report.e2.rmse}, {"me", report.e2.me}};
  if (report.pe_percent) j["pe_percent"] = *report.pe_percent;
  j["timing"] = {{"mean_ms", report.timing_mean_ms}, {"max_ms", report.timing_max_ms}};
  return j.dump(2);
}

void write_simlog_csv(const std::string& path, const SimLog& log, bool include_timing) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open log file for writing: " + path);
  out << "t,X,Y,psi,vy,r,e1,e1d,e2,e2d,du,u,sigma,qp_status,qp_iters,step_ms,"
         "eps_pred_0,eps_pred_1,eps_pred_2,eps_pred_3\n";
  for (const SimStep& s : log.steps) {
    out << format_double(s.t) << ',' << format_double(s.plant.x) << ','
        << format_double(s.plant.y) << ',' << format_double(s.plant.psi) << ','
        << format_double(s.plant.vy) << ',' << format_double(s.plant.r) << ','
        << format_double(s.err.e1) << ',' << format_double(s.err.e1_dot) << ','
        << format_double(s.err.e2) << ',' << format_double(s.err.e2_dot) << ','
        << format_double(s.du) << ',' << format_double(s.u) << ','
        << format_double(s.sigma) << ',' << s.qp_status << ',' << s.qp_iters << ','
        << format_double(include_timing ? s.step_ms : 0.0);
    for (double v : s.eps_pred) out << ',' << format_double(v);
    out << "\n";
  }
  if (!out) throw std::runtime_error("failed writing log file: " + path);
}

SimLog read_simlog_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open log file: " + path);
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("log csv is empty: " + path);
  const std::string expected =
      "t,X,Y,psi,vy,r,e1,e1d,e2,e2d,du,u,sigma,qp_status,qp_iters,step_ms,"
      "eps_pred_0,eps_pred_1,eps_pred_2,eps_pred_3";
  if (!header.empty() && header.back() == '\r') header.pop_back();
  if (header != expected) throw std::runtime_error("log csv: unexpected header");

  SimLog log;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 20) throw std::runtime_error("log csv: wrong column count");
    SimStep s;
    s.t = parse_double(cells[0]);
    s.plant.x = parse_double(cells[1]);
    s.plant.y = parse_double(cells[2]);
    s.plant.psi = parse_double(cells[3]);
    s.plant.vy = parse_double(cells[4]);
    s.plant.r = parse_double(cells[5]);
    s.err.e1 = parse_double(cells[6]);
    s.err.e1_dot = parse_double(cells[7]);
    s.err.e2 = parse_double(cells[8]);
    s.err.e2_dot = parse_double(cells[9]);
    s.du = parse_double(cells[10]);
    s.u = parse_double(cells[11]);
    s.sigma = parse_double(cells[12]);
    s.qp_status = static_cast<int>(parse_double(cells[13]));
    s.qp_iters = static_cast<int>(parse_double(cells[14]));
    s.step_ms = parse_double(cells[15]);
    for (int q = 0; q < 4; ++q) s.eps_pred[static_cast<std::size_t>(q)] = parse_double(cells[16 + q]);
    log.steps.push_back(s);
  }
  if (log.steps.empty()) throw std::runtime_error("log csv has no data rows: " + path);
  if (log.steps.size() >= 2) log.ts = log.steps[1].t - log.steps[0].t;
  return log;
}

}  // namespace rfmpc
