#ifndef RFMPC_DYNAMICS_HPP
#define RFMPC_DYNAMICS_HPP

#include <cstddef>
#include <utility>

#include "rfmpc/mat.hpp"
#include "rfmpc/path.hpp"

namespace rfmpc {

struct VehicleParams {
  double mass = 1723.0;    // kg
  double iz = 4175.0;      // yaw inertia (kg m^2)
  double lf = 1.232;       // CoG to front axle (m)
  double lr = 1.468;       // CoG to rear axle (m)
  double caf = 66900.0;    // front cornering stiffness, per tire (N/rad)
  double car = 66900.0;    // rear cornering stiffness, per tire (N/rad)
  double vx = 10.0;        // longitudinal speed (m/s)

  /// Throws std::invalid_argument unless all fields are positive and
  /// vx >= 0.5 m/s (the model matrices contain 1/vx).
  void validate() const;
};

struct ErrorState {
  double e1 = 0.0;      // lateral error, left of path positive (m)
  double e1_dot = 0.0;  // lateral error rate (m/s)
  double e2 = 0.0;      // heading error, wrapped to (-pi, pi] (rad)
  double e2_dot = 0.0;  // heading error rate (rad/s)
};

/// Error state plus the previously applied front steering angle; the per-step
/// state block of the increment model.
struct AugmentedState {
  ErrorState err;
  double u_prev = 0.0;  // rad

  Vec as_vec() const { return {err.e1, err.e1_dot, err.e2, err.e2_dot, u_prev}; }
};

/// Global state of the nonlinear truth plant.
struct PlantState {
  double x = 0.0;    // m
  double y = 0.0;    // m
  double psi = 0.0;  // yaw (rad)
  double vy = 0.0;   // lateral velocity (m/s)
  double r = 0.0;    // yaw rate (rad/s)
  double vx = 10.0;  // m/s, constant
};

struct ContinuousMatrices {
  Mat a;  // 4x4
  Vec b;  // 4, steering column
  Vec d;  // 4, desired-yaw-rate column
};

/// Discrete-time increment-augmented system at one step:
/// x_{k+1} = Ad x_k + Bd du_k + Dd with x = [e1, e1_dot, e2, e2_dot, u_prev].
struct LtvMatrices {
  Mat ad;  // 5x5, last row [0 0 0 0 1]
  Vec bd;  // 5, last entry 1
  Vec dd;  // 5, last entry 0
};

/// Continuous error-state bicycle model with linear tire forces
/// Fyf = 2 caf alpha_f, Fyr = 2 car alpha_r:
///   xdot = a x + b delta + d psi_dot_des.
ContinuousMatrices continuous_matrices(const VehicleParams& p);

/// Forward-Euler discretization followed by increment augmentation.
LtvMatrices discretize_and_augment(const ContinuousMatrices& cm, double ts,
                                   double psi_dot_des);

struct PlantParams {
  VehicleParams veh;              // true physical values
  double mu = 0.9;                // tire friction ceiling
  double crosswind_moment = 0.0;  // constant yaw moment (N m)
  double delta_max = 0.6;         // physical steering limit (rad)

  double fy_max_front() const;
  double fy_max_rear() const;
};

/// Saturating tire law: fy_max * tanh(two_c * alpha / fy_max). two_c is the
/// axle stiffness (2 * per-tire value); slope at alpha = 0 is exactly two_c.
double tire_force(double two_c, double fy_max, double alpha);

/// One RK4 step of the nonlinear dynamic bicycle model under constant
/// steering delta. Deterministic; throws on non-finite state or |delta|
/// beyond the physical limit.
PlantState plant_step(const PlantState& s, const PlantParams& p, double delta, double ts);

/// Error state of a plant pose relative to a reference path, using
/// e1_dot = vy + vx e2 and e2_dot = r - psi_dot_des with psi_dot_des = vx kappa.
/// Returns the nearest path sample index alongside the errors.
std::pair<ErrorState, std::size_t> error_state(
    const PlantState& plant, const ReferencePath& path,
    std::size_t hint = static_cast<std::size_t>(-1));

}  // namespace rfmpc

#endif  // RFMPC_DYNAMICS_HPP
