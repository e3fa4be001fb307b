#ifndef RFMPC_CONFIG_HPP
#define RFMPC_CONFIG_HPP

#include <cstdint>
#include <map>
#include <string>

#include "rfmpc/controller.hpp"
#include "rfmpc/dynamics.hpp"
#include "rfmpc/forest.hpp"
#include "rfmpc/path.hpp"
#include "rfmpc/prediction.hpp"

namespace rfmpc {

/// Plant-truth deviations from the nominal model.
struct MismatchConfig {
  double stiffness_scale = 1.0;   // true cornering stiffness / nominal
  double mu = 0.9;                // tire friction ceiling
  double steer_lag_tau = 0.065;   // actuator first-order lag (s), 0 disables
  double steer_gain = 0.85;       // true road-wheel angle / commanded angle
  double crosswind_moment = 0.0;  // constant yaw moment (N m)
  double delta_max = 0.6;         // physical steering limit (rad)
};

struct SimOptions {
  double ds = 0.05;          // path sampling (m)
  double corridor = 3.0;     // |e1| termination bound (m)
  double init_offset_e1 = 0.0;
  double init_offset_e2 = 0.0;
  double dither = 0.0;       // uniform steering dither amplitude during collect (rad)
  double kappa_max = 0.1;    // curvature limit for path generation (1/m)
  double end_margin = 1.0;   // stop this far before the path end (m)
};

/// Everything one experiment needs; what the config file deserializes into.
struct ExperimentConfig {
  VehicleParams veh;
  HorizonConfig horizon;
  QpWeights weights;
  Bounds bounds;
  ForestConfig forest;
  MismatchConfig plant;
  SimOptions sim;
  std::map<std::string, std::string> paths;  // name -> segment spec string
  std::uint64_t seed = 1;

  void validate() const;
  PathSpec path_spec(const std::string& name) const;

  /// Built-in defaults, including train/eval1/eval2/eval3 paths.
  static ExperimentConfig defaults();
};

/// Flat key-value config text: `section.key = value`, '#' comments, path
/// specs as segment strings under path.<name>. Unknown keys are rejected.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);
std::string config_to_text(const ExperimentConfig& cfg);

}  // namespace rfmpc

#endif  // RFMPC_CONFIG_HPP
