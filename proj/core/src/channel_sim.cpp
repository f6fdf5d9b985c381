#include "astnn/channel_sim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "astnn/errors.hpp"

namespace astnn::sim {

RoomPolygon::RoomPolygon(std::vector<Vec2> vertices) : vertices_(std::move(vertices)) {
  const std::size_t n = vertices_.size();
  if (n < 3) throw InvalidGeometry("room polygon needs at least 3 vertices");
  walls_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Segment w{vertices_[i], vertices_[(i + 1) % n]};
    if (!(w.length() > kGeomEps)) throw InvalidGeometry("room wall " + std::to_string(i) + " has zero length");
    walls_.push_back(w);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
      if (adjacent) {
        // adjacent edges may only share their common vertex
        const Segment& a = walls_[i];
        const Segment& b = walls_[j];
        const Vec2 shared = (j == i + 1) ? a.b : a.a;
        const Vec2 a_far = (j == i + 1) ? a.a : a.b;
        const Vec2 b_far = (j == i + 1) ? b.b : b.a;
        const Vec2 da = a_far - shared;
        const Vec2 db = b_far - shared;
        if (std::abs(cross(da, db)) <= kGeomEps * norm(da) * norm(db) && dot(da, db) > 0.0)
          throw InvalidGeometry("room walls " + std::to_string(i) + " and " + std::to_string(j) + " fold back");
        continue;
      }
      if (segments_touch(walls_[i].a, walls_[i].b, walls_[j]))
        throw InvalidGeometry("room polygon self-intersects at walls " + std::to_string(i) + " and " +
                              std::to_string(j));
    }
  }
  if (!(std::abs(signed_area(vertices_)) > kGeomEps)) throw InvalidGeometry("room polygon has zero area");
}

double RoomPolygon::area() const { return std::abs(signed_area(vertices_)); }

bool RoomPolygon::is_convex() const {
  const std::size_t n = vertices_.size();
  int sign = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double c = cross(vertices_[(i + 1) % n] - vertices_[i], vertices_[(i + 2) % n] - vertices_[(i + 1) % n]);
    if (std::abs(c) <= kGeomEps) continue;
    const int s = c > 0 ? 1 : -1;
    if (sign == 0) sign = s;
    if (s != sign) return false;
  }
  return true;
}

bool RoomPolygon::contains_strict(Vec2 p) const {
  bool inside = false;
  for (const Segment& w : walls_) {
    if (point_segment_distance(p, w) <= kGeomEps) return false;
    const Vec2 a = w.a;
    const Vec2 b = w.b;
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

bool RoomPolygon::segment_clear(Vec2 p, Vec2 q, int skip_wall) const {
  for (std::size_t j = 0; j < walls_.size(); ++j) {
    if (static_cast<int>(j) == skip_wall) continue;
    if (segments_touch(p, q, walls_[j])) return false;
  }
  return true;
}

RoomPolygon rectangle_room(double width, double height) {
  return RoomPolygon({{0.0, 0.0}, {width, 0.0}, {width, height}, {0.0, height}});
}

RoomPolygon h_room() {
  return RoomPolygon({{0.0, 0.0},
                      {4.0, 0.0},
                      {4.0, 3.0},
                      {7.0, 3.0},
                      {7.0, 0.0},
                      {11.0, 0.0},
                      {11.0, 12.0},
                      {7.0, 12.0},
                      {7.0, 9.0},
                      {4.0, 9.0},
                      {4.0, 12.0},
                      {0.0, 12.0}});
}

std::vector<Transmitter> h_room_transmitters() {
  return {{1, {2.0, 2.0}}, {2, {2.0, 10.0}}, {3, {5.5, 6.0}}, {4, {9.0, 2.0}}, {5, {9.0, 10.0}}};
}

Vec2 mirror_anchor(Vec2 tx_position, const Segment& wall) { return reflect_across(tx_position, wall); }

std::vector<VirtualAnchor> virtual_anchors(const RoomPolygon& room, const Transmitter& tx) {
  std::vector<VirtualAnchor> out;
  out.reserve(room.walls().size());
  for (std::size_t i = 0; i < room.walls().size(); ++i)
    out.push_back({tx.id, static_cast<int>(i), mirror_anchor(tx.position, room.walls()[i])});
  return out;
}

std::vector<SimPath> trace_paths(const RoomPolygon& room, const Transmitter& tx, Vec2 rx) {
  if (!room.contains_strict(rx)) throw InvalidGeometry("receiver is not strictly inside the room");

  std::vector<SimPath> paths;
  if (room.segment_clear(tx.position, rx)) {
    SimPath los;
    los.kind = PathKind::LoS;
    los.tx_id = tx.id;
    los.anchor = tx.position;
    los.reflection_point = rx;
    los.path_length_m = distance(tx.position, rx);
    los.delay_ns = los.path_length_m / kSpeedOfLight;
    los.aoa_azimuth_deg = bearing_deg(rx, tx.position);
    los.aod_azimuth_deg = bearing_deg(tx.position, rx);
    paths.push_back(los);
  }

  const auto& walls = room.walls();
  for (std::size_t i = 0; i < walls.size(); ++i) {
    const Vec2 va = mirror_anchor(tx.position, walls[i]);
    Vec2 hit;
    if (!segment_intersection(va, rx, walls[i], hit)) continue;
    const int wi = static_cast<int>(i);
    if (!room.segment_clear(tx.position, hit, wi) || !room.segment_clear(hit, rx, wi)) continue;

    SimPath nlos;
    nlos.kind = PathKind::FirstOrderNLoS;
    nlos.tx_id = tx.id;
    nlos.wall_index = wi;
    nlos.anchor = va;
    nlos.reflection_point = hit;
    nlos.path_length_m = distance(va, rx);
    nlos.delay_ns = nlos.path_length_m / kSpeedOfLight;
    nlos.aoa_azimuth_deg = bearing_deg(rx, va);
    nlos.aod_azimuth_deg = bearing_deg(tx.position, hit);
    paths.push_back(nlos);
  }
  return paths;
}

std::vector<SimPath> trace_all(const RoomPolygon& room, std::span<const Transmitter> txs, Vec2 rx) {
  std::vector<SimPath> all;
  for (const Transmitter& tx : txs) {
    auto p = trace_paths(room, tx, rx);
    all.insert(all.end(), p.begin(), p.end());
  }
  return all;
}

double perturb_aoa(double aoa_deg, double sigma_deg, std::mt19937_64& rng) {
  if (sigma_deg < 0.0) throw std::invalid_argument("AoA noise sigma must be non-negative");
  if (sigma_deg == 0.0) return wrap_deg_360(aoa_deg);
  std::normal_distribution<double> noise(0.0, sigma_deg);
  return wrap_deg_360(aoa_deg + noise(rng));
}

Vec2 sample_interior(const RoomPolygon& room, std::mt19937_64& rng) {
  const BoundingBox box = room.bounds();
  std::uniform_real_distribution<double> ux(box.min.x, box.max.x);
  std::uniform_real_distribution<double> uy(box.min.y, box.max.y);
  for (int attempt = 0; attempt < 1'000'000; ++attempt) {
    const Vec2 p{ux(rng), uy(rng)};
    if (room.contains_strict(p)) return p;
  }
  throw InvalidGeometry("could not sample a point inside the room");
}

std::vector<Vec2> random_waypoint_trajectory(const RoomPolygon& room, int points, double step_m,
                                             std::mt19937_64& rng) {
  if (points < 1) throw std::invalid_argument("trajectory needs at least one point");
  if (!(step_m > 0.0)) throw std::invalid_argument("trajectory step must be positive");

  std::vector<Vec2> out;
  out.reserve(static_cast<std::size_t>(points));
  Vec2 current = sample_interior(room, rng);
  out.push_back(current);
  // distance still to travel before the next sample is emitted
  double pending = step_m;
  while (static_cast<int>(out.size()) < points) {
    Vec2 waypoint = current;
    bool found = false;
    for (int attempt = 0; attempt < 10'000 && !found; ++attempt) {
      waypoint = sample_interior(room, rng);
      found = distance(current, waypoint) > kGeomEps && room.segment_clear(current, waypoint);
    }
    if (!found) throw InvalidGeometry("no visible waypoint from the current trajectory position");

    const double leg = distance(current, waypoint);
    const Vec2 dir = (1.0 / leg) * (waypoint - current);
    double travelled = 0.0;
    while (travelled + pending <= leg && static_cast<int>(out.size()) < points) {
      travelled += pending;
      out.push_back(current + travelled * dir);
      pending = step_m;
    }
    pending -= (leg - travelled);
    current = waypoint;
  }
  return out;
}

std::mt19937_64 trajectory_stream(std::uint64_t seed, std::uint64_t trajectory_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(trajectory_index),
                    static_cast<std::uint32_t>(trajectory_index >> 32)};
  return std::mt19937_64(seq);
}

MeasurementSnapshot simulate_snapshot(const RoomPolygon& room, std::span<const Transmitter> txs, Vec2 rx,
                                      double sigma_deg, std::mt19937_64& rng, int snapshot_id, int area_id) {
  MeasurementSnapshot snap;
  snap.snapshot_id = snapshot_id;
  snap.area_id = area_id;
  snap.truth = GroundTruth{rx, 0.0};
  for (const Transmitter& tx : txs) {
    const auto paths = trace_paths(room, tx, rx);
    if (paths.empty()) continue;
    auto& rows = snap.tx_records[tx.id];
    rows.reserve(paths.size());
    for (const SimPath& p : paths) {
      MpcRecord r;
      // placeholder free-space term; nothing downstream reads it
      r.path_loss_db = 20.0 * std::log10(std::max(p.path_length_m, 1e-3));
      r.delay_ns = p.delay_ns;
      r.aoa_az_deg = perturb_aoa(p.aoa_azimuth_deg, sigma_deg, rng);
      r.aoa_el_deg = 0.0;
      r.aod_az_deg = p.aod_azimuth_deg;
      r.aod_el_deg = 0.0;
      rows.push_back(r);
    }
  }
  return snap;
}

void validate(const SimConfig& config) {
  if (!(config.room.area() > kGeomEps)) throw InvalidGeometry("room has zero interior area");
  if (config.transmitters.empty()) throw std::invalid_argument("at least one transmitter is required");
  for (const Transmitter& tx : config.transmitters)
    if (!config.room.contains_strict(tx.position))
      throw InvalidGeometry("transmitter " + std::to_string(tx.id) + " is not inside the room");
  if (config.aoa_noise_sigma_deg < 0.0) throw std::invalid_argument("aoa_noise_sigma must be >= 0");
  if (config.points_per_trajectory < 1) throw std::invalid_argument("points_per_trajectory must be >= 1");
  if (config.trajectory_count < 0) throw std::invalid_argument("trajectory_count must be >= 0");
}

Dataset generate_dataset(const SimConfig& config) {
  if (config.room.vertices().empty()) throw InvalidGeometry("room has zero interior area");
  validate(config);
  Dataset out;
  out.reserve(static_cast<std::size_t>(config.trajectory_count) *
              static_cast<std::size_t>(config.points_per_trajectory));
  for (int t = 0; t < config.trajectory_count; ++t) {
    auto rng = trajectory_stream(config.rng_seed, static_cast<std::uint64_t>(t));
    const auto positions = random_waypoint_trajectory(config.room, config.points_per_trajectory, config.step_m, rng);
    for (std::size_t k = 0; k < positions.size(); ++k) {
      const int id = t * config.points_per_trajectory + static_cast<int>(k);
      out.push_back(simulate_snapshot(config.room, config.transmitters, positions[k], config.aoa_noise_sigma_deg,
                                      rng, id));
    }
  }
  return out;
}

}  // namespace astnn::sim
