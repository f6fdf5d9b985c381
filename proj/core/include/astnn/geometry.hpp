#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace astnn {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Speed of light in meters per nanosecond.
inline constexpr double kSpeedOfLight = 0.299792458;

/// Absolute tolerance for intersection and occlusion tests (meters).
inline constexpr double kGeomEps = 1e-9;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend constexpr bool operator==(Vec2 a, Vec2 b) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }

struct Segment {
  Vec2 a;
  Vec2 b;

  double length() const { return distance(a, b); }
};

struct BoundingBox {
  Vec2 min;
  Vec2 max;

  double width() const { return max.x - min.x; }
  double height() const { return max.y - min.y; }
  bool contains(Vec2 p) const { return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y; }
};

/// Wraps an angle in degrees into [0, 360).
double wrap_deg_360(double deg);
/// Wraps an angle in radians into [0, 2*pi).
double wrap_rad_2pi(double rad);
/// Wraps an angle in radians into [-pi, pi).
double wrap_rad_pi(double rad);
/// Shortest signed circular difference a - b in degrees, in [-180, 180).
double circular_diff_deg(double a, double b);

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Direction from `from` towards `to`, degrees in [0, 360).
double bearing_deg(Vec2 from, Vec2 to);

/// Reflection of `p` across the infinite line through `wall`.
/// Throws InvalidGeometry for a zero-length wall.
Vec2 reflect_across(Vec2 p, const Segment& wall);

/// True when the closed segments p-q and s come within kGeomEps of each other
/// (touching and grazing contacts count).
bool segments_touch(Vec2 p, Vec2 q, const Segment& s, double eps = kGeomEps);

/// Intersection of segment p-q with the supporting segment s, when it exists.
/// Returns false if the segments are parallel or the crossing lies outside either.
bool segment_intersection(Vec2 p, Vec2 q, const Segment& s, Vec2& out, double eps = kGeomEps);

/// Distance from point p to the closed segment s.
double point_segment_distance(Vec2 p, const Segment& s);

/// Shoelace area; positive for counter-clockwise vertex order.
double signed_area(std::span<const Vec2> vertices);

BoundingBox bounding_box(std::span<const Vec2> points);

}  // namespace astnn
