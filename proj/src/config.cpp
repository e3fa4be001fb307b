#include "rfmpc/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace rfmpc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (...) {
    throw std::invalid_argument("config: bad number for " + key + ": '" + v + "'");
  }
}

int to_int(const std::string& key, const std::string& v) {
  const double x = to_double(key, v);
  if (x != std::floor(x)) throw std::invalid_argument("config: " + key + " must be integral");
  return static_cast<int>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: " + key + " must be true/false");
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace

void ExperimentConfig::validate() const {
  veh.validate();
  horizon.validate();
  weights.validate();
  bounds.validate();
  forest.validate();
  if (weights.q1[0] <= 0.0 && weights.q1[1] <= 0.0 && weights.q1[2] <= 0.0 &&
      weights.q1[3] <= 0.0)
    throw std::invalid_argument("config: at least one q1 weight must be positive");
  if (forest.horizon != horizon.n)
    throw std::invalid_argument("config: forest.horizon must equal horizon.n");
  if (!(plant.stiffness_scale > 0.0))
    throw std::invalid_argument("config: plant.stiffness_scale must be > 0");
  if (!(plant.mu > 0.0)) throw std::invalid_argument("config: plant.mu must be > 0");
  if (plant.steer_lag_tau < 0.0)
    throw std::invalid_argument("config: plant.steer_lag_tau must be >= 0");
  if (!(plant.steer_gain > 0.0))
    throw std::invalid_argument("config: plant.steer_gain must be > 0");
  if (!(plant.delta_max > 0.0))
    throw std::invalid_argument("config: plant.delta_max must be > 0");
  if (!(sim.ds > 0.0) || sim.ds > 0.1)
    throw std::invalid_argument("config: sim.ds must be in (0, 0.1]");
  if (!(sim.corridor > 0.0)) throw std::invalid_argument("config: sim.corridor must be > 0");
  if (sim.dither < 0.0) throw std::invalid_argument("config: sim.dither must be >= 0");
  if (std::fabs(sim.init_offset_e1) >= sim.corridor)
    throw std::invalid_argument("config: initial offset outside the corridor");
  if (paths.count("train") == 0)
    throw std::invalid_argument("config: a path.train spec is required");
  for (const auto& [name, spec] : paths) PathSpec::parse(spec);
}

PathSpec ExperimentConfig::path_spec(const std::string& name) const {
  const auto it = paths.find(name);
  if (it == paths.end())
    throw std::invalid_argument("config: no path named '" + name + "'");
  return PathSpec::parse(it->second);
}

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig cfg;
  // Two laps of a mixed loop; the lap tail repeats mid-range curvature so the
  // chronological train/test split evaluates on represented regimes.
  const std::string loop =
      "S 30 | L 40 170 | S 20 | R 30 160 | S 20 | L 45 90 | S 20 | R 40 150 | S 20 | "
      "L 25 170 | S 20 | R 36 120 | S 20 | L 32 160 | S 20 | R 26 160 | S 20";
  cfg.paths["train"] = loop + " | " + loop;
  cfg.paths["eval1"] = "S 80 | R 26 90 | S 60";
  cfg.paths["eval2"] = "S 40 | L 25 180 | S 40";
  cfg.paths["eval3"] = "S 50 | L 30 60 | S 30 | R 26 120 | S 30 | L 40 45 | S 40";
  cfg.forest.min_leaf = 800;
  return cfg;
}

namespace {

struct KeyBinding {
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

const std::map<std::string, KeyBinding>& bindings() {
  static const std::map<std::string, KeyBinding> map = [] {
    std::map<std::string, KeyBinding> b;
    auto num = [&b](const std::string& key, auto getter) {
      b[key] = KeyBinding{
          [getter](ExperimentConfig& c, const std::string& k, const std::string& v) {
            *getter(c) = to_double(k, v);
          },
          [getter](const ExperimentConfig& c) {
            return format_double(*getter(const_cast<ExperimentConfig&>(c)));
          }};
    };
    auto integer = [&b](const std::string& key, auto getter) {
      b[key] = KeyBinding{
          [getter](ExperimentConfig& c, const std::string& k, const std::string& v) {
            *getter(c) = to_int(k, v);
          },
          [getter](const ExperimentConfig& c) {
            return std::to_string(*getter(const_cast<ExperimentConfig&>(c)));
          }};
    };
    num("vehicle.mass", [](ExperimentConfig& c) { return &c.veh.mass; });
    num("vehicle.iz", [](ExperimentConfig& c) { return &c.veh.iz; });
    num("vehicle.lf", [](ExperimentConfig& c) { return &c.veh.lf; });
    num("vehicle.lr", [](ExperimentConfig& c) { return &c.veh.lr; });
    num("vehicle.caf", [](ExperimentConfig& c) { return &c.veh.caf; });
    num("vehicle.car", [](ExperimentConfig& c) { return &c.veh.car; });
    num("vehicle.vx", [](ExperimentConfig& c) { return &c.veh.vx; });
    integer("horizon.n", [](ExperimentConfig& c) { return &c.horizon.n; });
    integer("horizon.nc", [](ExperimentConfig& c) { return &c.horizon.nc; });
    num("horizon.ts", [](ExperimentConfig& c) { return &c.horizon.ts; });
    num("weights.q1_e1", [](ExperimentConfig& c) { return &c.weights.q1[0]; });
    num("weights.q1_e1d", [](ExperimentConfig& c) { return &c.weights.q1[1]; });
    num("weights.q1_e2", [](ExperimentConfig& c) { return &c.weights.q1[2]; });
    num("weights.q1_e2d", [](ExperimentConfig& c) { return &c.weights.q1[3]; });
    num("weights.q2", [](ExperimentConfig& c) { return &c.weights.q2; });
    num("weights.lambda", [](ExperimentConfig& c) { return &c.weights.lambda; });
    num("bounds.du_lo", [](ExperimentConfig& c) { return &c.bounds.du_lo; });
    num("bounds.du_hi", [](ExperimentConfig& c) { return &c.bounds.du_hi; });
    num("bounds.u_lo", [](ExperimentConfig& c) { return &c.bounds.u_lo; });
    num("bounds.u_hi", [](ExperimentConfig& c) { return &c.bounds.u_hi; });
    num("bounds.e1_lo", [](ExperimentConfig& c) { return &c.bounds.eta_lo[0]; });
    num("bounds.e1_hi", [](ExperimentConfig& c) { return &c.bounds.eta_hi[0]; });
    num("bounds.e1d_lo", [](ExperimentConfig& c) { return &c.bounds.eta_lo[1]; });
    num("bounds.e1d_hi", [](ExperimentConfig& c) { return &c.bounds.eta_hi[1]; });
    num("bounds.e2_lo", [](ExperimentConfig& c) { return &c.bounds.eta_lo[2]; });
    num("bounds.e2_hi", [](ExperimentConfig& c) { return &c.bounds.eta_hi[2]; });
    num("bounds.e2d_lo", [](ExperimentConfig& c) { return &c.bounds.eta_lo[3]; });
    num("bounds.e2d_hi", [](ExperimentConfig& c) { return &c.bounds.eta_hi[3]; });
    integer("forest.trees", [](ExperimentConfig& c) { return &c.forest.n_trees; });
    integer("forest.depth", [](ExperimentConfig& c) { return &c.forest.max_depth; });
    integer("forest.min_leaf", [](ExperimentConfig& c) { return &c.forest.min_leaf; });
    num("forest.feature_fraction",
        [](ExperimentConfig& c) { return &c.forest.feature_fraction; });
    num("forest.ridge", [](ExperimentConfig& c) { return &c.forest.ridge; });
    num("plant.stiffness_scale",
        [](ExperimentConfig& c) { return &c.plant.stiffness_scale; });
    num("plant.mu", [](ExperimentConfig& c) { return &c.plant.mu; });
    num("plant.steer_lag_tau", [](ExperimentConfig& c) { return &c.plant.steer_lag_tau; });
    num("plant.steer_gain", [](ExperimentConfig& c) { return &c.plant.steer_gain; });
    num("plant.crosswind_moment",
        [](ExperimentConfig& c) { return &c.plant.crosswind_moment; });
    num("plant.delta_max", [](ExperimentConfig& c) { return &c.plant.delta_max; });
    num("sim.ds", [](ExperimentConfig& c) { return &c.sim.ds; });
    num("sim.corridor", [](ExperimentConfig& c) { return &c.sim.corridor; });
    num("sim.init_offset_e1", [](ExperimentConfig& c) { return &c.sim.init_offset_e1; });
    num("sim.init_offset_e2", [](ExperimentConfig& c) { return &c.sim.init_offset_e2; });
    num("sim.dither", [](ExperimentConfig& c) { return &c.sim.dither; });
    num("sim.kappa_max", [](ExperimentConfig& c) { return &c.sim.kappa_max; });
    num("sim.end_margin", [](ExperimentConfig& c) { return &c.sim.end_margin; });

    b["forest.bootstrap"] = KeyBinding{
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          c.forest.bootstrap = to_bool(k, v);
        },
        [](const ExperimentConfig& c) {
          return std::string(c.forest.bootstrap ? "true" : "false");
        }};
    b["seed"] = KeyBinding{
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          try {
            c.seed = std::stoull(v);
          } catch (...) {
            throw std::invalid_argument("config: bad integer for " + k);
          }
        },
        [](const ExperimentConfig& c) { return std::to_string(c.seed); }};
    return b;
  }();
  return map;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg = ExperimentConfig::defaults();
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.rfind("path.", 0) == 0) {
      const std::string name = key.substr(5);
      if (name.empty()) throw std::invalid_argument("config: empty path name");
      PathSpec::parse(value);  // reject malformed specs at parse time
      cfg.paths[name] = value;
      continue;
    }
    const auto it = bindings().find(key);
    if (it == bindings().end())
      throw std::invalid_argument("config: unknown key '" + key + "'");
    it->second.set(cfg, key, value);
  }
  // the forest window is always the QP horizon
  cfg.forest.horizon = cfg.horizon.n;
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string config_to_text(const ExperimentConfig& cfg) {
  std::ostringstream out;
  for (const auto& [key, binding] : bindings()) out << key << " = " << binding.get(cfg) << "\n";
  for (const auto& [name, spec] : cfg.paths) out << "path." << name << " = " << spec << "\n";
  return out.str();
}

}  // namespace rfmpc
