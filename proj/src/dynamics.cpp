#include "rfmpc/dynamics.hpp"

#include <cmath>
#include <stdexcept>

namespace rfmpc {

namespace {
constexpr double kGravity = 9.81;

bool finite(const PlantState& s) {
  return std::isfinite(s.x) && std::isfinite(s.y) && std::isfinite(s.psi) &&
         std::isfinite(s.vy) && std::isfinite(s.r) && std::isfinite(s.vx);
}
}  // namespace

void VehicleParams::validate() const {
  if (!(mass > 0.0 && iz > 0.0 && lf > 0.0 && lr > 0.0 && caf > 0.0 && car > 0.0))
    throw std::invalid_argument("VehicleParams: all fields must be positive");
  if (!(vx >= 0.5))
    throw std::invalid_argument("VehicleParams: vx must be >= 0.5 m/s");
}

ContinuousMatrices continuous_matrices(const VehicleParams& p) {
  p.validate();
  const double cf = 2.0 * p.caf;  // axle stiffness
  const double cr = 2.0 * p.car;
  const double m = p.mass, iz = p.iz, lf = p.lf, lr = p.lr, vx = p.vx;

  ContinuousMatrices cm;
  cm.a = Mat(4, 4);
  cm.a(0, 1) = 1.0;
  cm.a(1, 1) = -(cf + cr) / (m * vx);
  cm.a(1, 2) = (cf + cr) / m;
  cm.a(1, 3) = (-cf * lf + cr * lr) / (m * vx);
  cm.a(2, 3) = 1.0;
  cm.a(3, 1) = -(cf * lf - cr * lr) / (iz * vx);
  cm.a(3, 2) = (cf * lf - cr * lr) / iz;
  cm.a(3, 3) = -(cf * lf * lf + cr * lr * lr) / (iz * vx);

  cm.b = {0.0, cf / m, 0.0, cf * lf / iz};
  cm.d = {0.0, -(cf * lf - cr * lr) / (m * vx) - vx, 0.0,
          -(cf * lf * lf + cr * lr * lr) / (iz * vx)};
  return cm;
}

LtvMatrices discretize_and_augment(const ContinuousMatrices& cm, double ts,
                                   double psi_dot_des) {
  if (!(ts >= 0.0)) throw std::invalid_argument("discretize_and_augment: ts must be >= 0");

  LtvMatrices ltv;
  ltv.ad = Mat(5, 5);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j)
      ltv.ad(i, j) = (i == j ? 1.0 : 0.0) + ts * cm.a(i, j);
    ltv.ad(i, 4) = ts * cm.b[i];
  }
  ltv.ad(4, 4) = 1.0;

  ltv.bd = Vec(5, 0.0);
  for (std::size_t i = 0; i < 4; ++i) ltv.bd[i] = ts * cm.b[i];
  ltv.bd[4] = 1.0;

  ltv.dd = Vec(5, 0.0);
  for (std::size_t i = 0; i < 4; ++i) ltv.dd[i] = ts * cm.d[i] * psi_dot_des;
  return ltv;
}

double PlantParams::fy_max_front() const {
  return mu * veh.mass * kGravity * veh.lr / (veh.lf + veh.lr);
}

double PlantParams::fy_max_rear() const {
  return mu * veh.mass * kGravity * veh.lf / (veh.lf + veh.lr);
}

double tire_force(double two_c, double fy_max, double alpha) {
  return fy_max * std::tanh(two_c * alpha / fy_max);
}

namespace {

struct PlantDeriv {
  double dx, dy, dpsi, dvy, dr;
};

PlantDeriv plant_deriv(const PlantState& s, const PlantParams& p, double delta) {
  const double cf = 2.0 * p.veh.caf;
  const double cr = 2.0 * p.veh.car;
  const double alpha_f = delta - std::atan2(s.vy + p.veh.lf * s.r, s.vx);
  const double alpha_r = -std::atan2(s.vy - p.veh.lr * s.r, s.vx);
  const double fyf = tire_force(cf, p.fy_max_front(), alpha_f);
  const double fyr = tire_force(cr, p.fy_max_rear(), alpha_r);

  PlantDeriv d;
  d.dx = s.vx * std::cos(s.psi) - s.vy * std::sin(s.psi);
  d.dy = s.vx * std::sin(s.psi) + s.vy * std::cos(s.psi);
  d.dpsi = s.r;
  d.dvy = (fyf * std::cos(delta) + fyr) / p.veh.mass - s.vx * s.r;
  d.dr = (p.veh.lf * fyf * std::cos(delta) - p.veh.lr * fyr + p.crosswind_moment) / p.veh.iz;
  return d;
}

PlantState advance(const PlantState& s, const PlantDeriv& d, double h) {
  PlantState n = s;
  n.x += h * d.dx;
  n.y += h * d.dy;
  n.psi += h * d.dpsi;
  n.vy += h * d.dvy;
  n.r += h * d.dr;
  return n;
}

}  // namespace

PlantState plant_step(const PlantState& s, const PlantParams& p, double delta, double ts) {
  if (!finite(s) || !std::isfinite(delta))
    throw std::invalid_argument("plant_step: non-finite state or input");
  if (std::fabs(delta) > p.delta_max + 1e-12)
    throw std::invalid_argument("plant_step: steering beyond physical limit");

  const PlantDeriv k1 = plant_deriv(s, p, delta);
  const PlantDeriv k2 = plant_deriv(advance(s, k1, 0.5 * ts), p, delta);
  const PlantDeriv k3 = plant_deriv(advance(s, k2, 0.5 * ts), p, delta);
  const PlantDeriv k4 = plant_deriv(advance(s, k3, ts), p, delta);

  PlantState n = s;
  const double w = ts / 6.0;
  n.x += w * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx);
  n.y += w * (k1.dy + 2.0 * k2.dy + 2.0 * k3.dy + k4.dy);
  n.psi += w * (k1.dpsi + 2.0 * k2.dpsi + 2.0 * k3.dpsi + k4.dpsi);
  n.vy += w * (k1.dvy + 2.0 * k2.dvy + 2.0 * k3.dvy + k4.dvy);
  n.r += w * (k1.dr + 2.0 * k2.dr + 2.0 * k3.dr + k4.dr);
  return n;
}

std::pair<ErrorState, std::size_t> error_state(const PlantState& plant,
                                               const ReferencePath& path,
                                               std::size_t hint) {
  const PathProjection pr = path.project(plant.x, plant.y, hint);
  const double psi_dot_des = plant.vx * pr.kappa;

  ErrorState e;
  e.e1 = pr.lateral;
  e.e2 = wrap_angle(plant.psi - pr.psi_des);
  e.e1_dot = plant.vy + plant.vx * e.e2;
  e.e2_dot = plant.r - psi_dot_des;
  return {e, pr.index};
}

}  // namespace rfmpc
