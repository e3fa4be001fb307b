#ifndef RFMPC_PATH_HPP
#define RFMPC_PATH_HPP

#include <cstddef>
#include <string>
#include <vector>

namespace rfmpc {

/// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

struct ReferencePoint {
  double s = 0.0;      // arc length from path start (m)
  double x = 0.0;      // global position (m)
  double y = 0.0;
  double psi = 0.0;    // tangent heading (rad)
  double kappa = 0.0;  // signed curvature, left turn positive (1/m)
};

enum class Turn { Left, Right };

struct PathSegment {
  enum class Kind { Straight, Arc };
  Kind kind = Kind::Straight;
  double length = 0.0;  // straight only (m)
  double radius = 0.0;  // arc only (m)
  double angle = 0.0;   // arc sweep (rad, > 0)
  Turn turn = Turn::Left;

  static PathSegment straight(double length);
  static PathSegment arc(double radius, double angle, Turn turn);
};

struct PathSpec {
  std::vector<PathSegment> segments;

  /// Parses a compact segment list, e.g. "S 100 | L 30 90 | R 20 180":
  /// S <length_m>, L <radius_m> <sweep_deg>, R <radius_m> <sweep_deg>.
  static PathSpec parse(const std::string& text);
  std::string to_string() const;
  double total_length() const;
};

struct PathProjection {
  std::size_t index = 0;   // nearest sample index
  double s = 0.0;          // arc length of the projected point
  double lateral = 0.0;    // signed distance, left of path positive (m)
  double psi_des = 0.0;    // desired heading at the projection
  double kappa = 0.0;      // curvature at the projection
};

/// Arc-length sampled reference with analytic heading and curvature.
class ReferencePath {
 public:
  ReferencePath() = default;
  explicit ReferencePath(std::vector<ReferencePoint> pts) : pts_(std::move(pts)) {}

  const std::vector<ReferencePoint>& points() const { return pts_; }
  std::size_t size() const { return pts_.size(); }
  const ReferencePoint& operator[](std::size_t i) const { return pts_[i]; }
  double total_length() const { return pts_.empty() ? 0.0 : pts_.back().s; }

  /// Curvature at arc length s (clamped to the path range).
  double kappa_at(double s) const;

  /// Projects a position onto the path. With hint != npos the search is
  /// restricted to a window around the hinted sample. Throws if two path
  /// regions far apart in arc length are equally close (self-intersecting
  /// geometry within the window).
  PathProjection project(double x, double y,
                         std::size_t hint = static_cast<std::size_t>(-1)) const;

 private:
  std::vector<ReferencePoint> pts_;
};

/// Samples a segment chain into an arc-length parameterized polyline.
/// Segments join with continuous position and heading by construction;
/// invalid segments (non-positive length/angle/radius, curvature above
/// kappa_max) are rejected.
ReferencePath generate_path(const PathSpec& spec, double ds, double kappa_max = 0.1);

}  // namespace rfmpc

#endif  // RFMPC_PATH_HPP
