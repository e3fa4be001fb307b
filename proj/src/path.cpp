#include "rfmpc/path.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace rfmpc {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a > kPi) a -= 2.0 * kPi;
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

PathSegment PathSegment::straight(double length) {
  PathSegment s;
  s.kind = Kind::Straight;
  s.length = length;
  return s;
}

PathSegment PathSegment::arc(double radius, double angle, Turn turn) {
  PathSegment s;
  s.kind = Kind::Arc;
  s.radius = radius;
  s.angle = angle;
  s.turn = turn;
  return s;
}

PathSpec PathSpec::parse(const std::string& text) {
  PathSpec spec;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, '|')) {
    std::stringstream ps(part);
    std::string tag;
    if (!(ps >> tag)) continue;
    if (tag == "S" || tag == "s") {
      double len;
      if (!(ps >> len)) throw std::invalid_argument("path spec: S needs a length");
      spec.segments.push_back(PathSegment::straight(len));
    } else if (tag == "L" || tag == "l" || tag == "R" || tag == "r") {
      double radius, deg;
      if (!(ps >> radius >> deg))
        throw std::invalid_argument("path spec: turns need radius and sweep degrees");
      const Turn t = (tag == "L" || tag == "l") ? Turn::Left : Turn::Right;
      spec.segments.push_back(PathSegment::arc(radius, deg * kPi / 180.0, t));
    } else {
      throw std::invalid_argument("path spec: unknown segment tag '" + tag + "'");
    }
  }
  if (spec.segments.empty()) throw std::invalid_argument("path spec: no segments");
  return spec;
}

std::string PathSpec::to_string() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const PathSegment& g = segments[i];
    if (i) out << " | ";
    if (g.kind == PathSegment::Kind::Straight) {
      out << "S " << g.length;
    } else {
      out << (g.turn == Turn::Left ? "L " : "R ") << g.radius << ' '
          << g.angle * 180.0 / kPi;
    }
  }
  return out.str();
}

double PathSpec::total_length() const {
  double total = 0.0;
  for (const PathSegment& g : segments)
    total += g.kind == PathSegment::Kind::Straight ? g.length : g.radius * g.angle;
  return total;
}

double ReferencePath::kappa_at(double s) const {
  if (pts_.empty()) return 0.0;
  if (s <= pts_.front().s) return pts_.front().kappa;
  if (s >= pts_.back().s) return pts_.back().kappa;
  auto it = std::lower_bound(pts_.begin(), pts_.end(), s,
                             [](const ReferencePoint& p, double v) { return p.s < v; });
  return it->kappa;
}

PathProjection ReferencePath::project(double x, double y, std::size_t hint) const {
  if (pts_.size() < 2) throw std::runtime_error("project: path has fewer than 2 points");
  const std::size_t n = pts_.size();

  std::size_t lo = 0, hi = n - 1;
  if (hint != static_cast<std::size_t>(-1)) {
    // Window of +-50 m around the hinted sample.
    const double window = 50.0;
    const double s0 = pts_[std::min(hint, n - 1)].s;
    while (lo + 1 < n && pts_[lo + 1].s < s0 - window) ++lo;
    while (hi > 0 && pts_[hi - 1].s > s0 + window) --hi;
  }

  // Project onto every chord in the window; keep the global best and track
  // near-equal candidates far away in arc length.
  double best_d2 = std::numeric_limits<double>::infinity();
  std::size_t best_i = lo;
  double best_t = 0.0;
  for (std::size_t i = lo; i < hi; ++i) {
    const ReferencePoint& p0 = pts_[i];
    const ReferencePoint& p1 = pts_[i + 1];
    const double dx = p1.x - p0.x, dy = p1.y - p0.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((x - p0.x) * dx + (y - p0.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double px = p0.x + t * dx, py = p0.y + t * dy;
    const double d2 = (x - px) * (x - px) + (y - py) * (y - py);
    if (d2 < best_d2) {
      best_d2 = d2;
      best_i = i;
      best_t = t;
    }
  }

  const double best_d = std::sqrt(best_d2);
  const double best_s =
      pts_[best_i].s + best_t * (pts_[best_i + 1].s - pts_[best_i].s);

  // Ambiguity: another chord essentially as close but far away along the path.
  const double d_tol = 1e-9 + 1e-3 * std::max(best_d, 1e-6);
  const double s_sep = 5.0;
  for (std::size_t i = lo; i < hi; ++i) {
    if (std::fabs(pts_[i].s - best_s) < s_sep) continue;
    const ReferencePoint& p0 = pts_[i];
    const ReferencePoint& p1 = pts_[i + 1];
    const double dx = p1.x - p0.x, dy = p1.y - p0.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((x - p0.x) * dx + (y - p0.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double px = p0.x + t * dx, py = p0.y + t * dy;
    const double d = std::hypot(x - px, y - py);
    if (d <= best_d + d_tol)
      throw std::runtime_error("project: ambiguous projection (path self-intersects)");
  }

  const ReferencePoint& p0 = pts_[best_i];
  const ReferencePoint& p1 = pts_[best_i + 1];
  PathProjection pr;
  pr.index = best_t < 0.5 ? best_i : best_i + 1;
  pr.s = best_s;
  pr.psi_des = p0.psi + best_t * wrap_angle(p1.psi - p0.psi);
  pr.kappa = pts_[pr.index].kappa;
  // Signed distance: positive when left of the tangent direction.
  const double px = p0.x + best_t * (p1.x - p0.x);
  const double py = p0.y + best_t * (p1.y - p0.y);
  const double cross = std::cos(pr.psi_des) * (y - py) - std::sin(pr.psi_des) * (x - px);
  pr.lateral = (cross >= 0.0 ? 1.0 : -1.0) * best_d;
  return pr;
}

ReferencePath generate_path(const PathSpec& spec, double ds, double kappa_max) {
  if (!(ds > 0.0) || ds > 0.1)
    throw std::invalid_argument("generate_path: ds must be in (0, 0.1]");
  if (spec.segments.empty()) throw std::invalid_argument("generate_path: empty spec");

  std::vector<ReferencePoint> pts;
  double s = 0.0, x = 0.0, y = 0.0, psi = 0.0;

  const double kappa0 =
      spec.segments.front().kind == PathSegment::Kind::Straight
          ? 0.0
          : (spec.segments.front().turn == Turn::Left ? 1.0 : -1.0) /
                spec.segments.front().radius;
  pts.push_back({0.0, 0.0, 0.0, 0.0, kappa0});

  for (const PathSegment& g : spec.segments) {
    if (g.kind == PathSegment::Kind::Straight) {
      if (!(g.length > 0.0)) throw std::invalid_argument("generate_path: straight length <= 0");
      const std::size_t steps = static_cast<std::size_t>(std::ceil(g.length / ds));
      const double h = g.length / static_cast<double>(steps);
      for (std::size_t i = 1; i <= steps; ++i) {
        const double a = h * static_cast<double>(i);
        pts.push_back({s + a, x + a * std::cos(psi), y + a * std::sin(psi), psi, 0.0});
      }
      s += g.length;
      x += g.length * std::cos(psi);
      y += g.length * std::sin(psi);
    } else {
      if (!(g.radius > 0.0) || !(g.angle > 0.0))
        throw std::invalid_argument("generate_path: arc needs positive radius and sweep");
      if (1.0 / g.radius > kappa_max)
        throw std::invalid_argument("generate_path: arc curvature exceeds kappa_max");
      const double dir = g.turn == Turn::Left ? 1.0 : -1.0;
      const double arc_len = g.radius * g.angle;
      const double cx = x - dir * g.radius * std::sin(psi);
      const double cy = y + dir * g.radius * std::cos(psi);
      const std::size_t steps = static_cast<std::size_t>(std::ceil(arc_len / ds));
      const double h = arc_len / static_cast<double>(steps);
      for (std::size_t i = 1; i <= steps; ++i) {
        const double phi = dir * h * static_cast<double>(i) / g.radius;
        const double heading = psi + phi;
        pts.push_back({s + h * static_cast<double>(i),
                       cx + dir * g.radius * std::sin(heading),
                       cy - dir * g.radius * std::cos(heading), heading, dir / g.radius});
      }
      s += arc_len;
      psi += dir * g.angle;
      x = cx + dir * g.radius * std::sin(psi);
      y = cy - dir * g.radius * std::cos(psi);
    }
  }
  return ReferencePath(std::move(pts));
}

}  // namespace rfmpc
