#include "astnn/geometry.hpp"

#include <algorithm>
#include <limits>

#include "astnn/errors.hpp"

namespace astnn {

double wrap_deg_360(double deg) {
  double w = std::fmod(deg, 360.0);
  if (w < 0.0) w += 360.0;
  // fmod of a tiny negative value can round up to exactly 360
  if (w >= 360.0) w = 0.0;
  return w;
}

double wrap_rad_2pi(double rad) {
  double w = std::fmod(rad, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  if (w >= kTwoPi) w = 0.0;
  return w;
}

double wrap_rad_pi(double rad) {
  double w = wrap_rad_2pi(rad + kPi) - kPi;
  if (w >= kPi) w -= kTwoPi;
  return w;
}

double circular_diff_deg(double a, double b) {
  double d = wrap_deg_360(a - b);
  return d >= 180.0 ? d - 360.0 : d;
}

double bearing_deg(Vec2 from, Vec2 to) {
  return wrap_deg_360(rad_to_deg(std::atan2(to.y - from.y, to.x - from.x)));
}

Vec2 reflect_across(Vec2 p, const Segment& wall) {
  const Vec2 d = wall.b - wall.a;
  const double len2 = dot(d, d);
  if (!(len2 > 0.0)) throw InvalidGeometry("cannot mirror across a zero-length wall");
  const Vec2 ap = p - wall.a;
  const double t = dot(ap, d) / len2;
  const Vec2 foot = wall.a + t * d;
  return 2.0 * foot - p;
}

double point_segment_distance(Vec2 p, const Segment& s) {
  const Vec2 d = s.b - s.a;
  const double len2 = dot(d, d);
  if (len2 == 0.0) return distance(p, s.a);
  const double t = std::clamp(dot(p - s.a, d) / len2, 0.0, 1.0);
  return distance(p, s.a + t * d);
}

bool segment_intersection(Vec2 p, Vec2 q, const Segment& s, Vec2& out, double eps) {
  const Vec2 r = q - p;
  const Vec2 w = s.b - s.a;
  const double denom = cross(r, w);
  if (std::abs(denom) < std::numeric_limits<double>::min()) return false;
  const Vec2 ps = s.a - p;
  const double t = cross(ps, w) / denom;
  const double u = cross(ps, r) / denom;
  const double tol_t = eps / std::max(norm(r), eps);
  const double tol_u = eps / std::max(norm(w), eps);
  if (t < -tol_t || t > 1.0 + tol_t || u < -tol_u || u > 1.0 + tol_u) return false;
  out = p + t * r;
  return true;
}

bool segments_touch(Vec2 p, Vec2 q, const Segment& s, double eps) {
  if (std::max(p.x, q.x) + eps < std::min(s.a.x, s.b.x) || std::min(p.x, q.x) - eps > std::max(s.a.x, s.b.x) ||
      std::max(p.y, q.y) + eps < std::min(s.a.y, s.b.y) || std::min(p.y, q.y) - eps > std::max(s.a.y, s.b.y))
    return false;
  Vec2 hit;
  if (segment_intersection(p, q, s, hit, eps)) return true;
  const Segment pq{p, q};
  return point_segment_distance(s.a, pq) <= eps || point_segment_distance(s.b, pq) <= eps ||
         point_segment_distance(p, s) <= eps || point_segment_distance(q, s) <= eps;
}

double signed_area(std::span<const Vec2> vertices) {
  double acc = 0.0;
  const std::size_t n = vertices.size();
  for (std::size_t i = 0; i < n; ++i) acc += cross(vertices[i], vertices[(i + 1) % n]);
  return 0.5 * acc;
}

BoundingBox bounding_box(std::span<const Vec2> points) {
  BoundingBox box{{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()},
                  {-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()}};
  for (const Vec2& p : points) {
    box.min.x = std::min(box.min.x, p.x);
    box.min.y = std::min(box.min.y, p.y);
    box.max.x = std::max(box.max.x, p.x);
    box.max.y = std::max(box.max.y, p.y);
  }
  return box;
}

}  // namespace astnn
