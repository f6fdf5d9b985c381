#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "astnn/geometry.hpp"
#include "astnn/measurement.hpp"

namespace astnn::sim {

/// Closed simple polygon describing the room outline. Walls are the edges
/// between consecutive vertices, including the closing edge.
class RoomPolygon {
 public:
  RoomPolygon() = default;
  /// Throws InvalidGeometry for fewer than 3 vertices, self intersections or
  /// zero area.
  explicit RoomPolygon(std::vector<Vec2> vertices);

  const std::vector<Vec2>& vertices() const { return vertices_; }
  const std::vector<Segment>& walls() const { return walls_; }
  double area() const;
  BoundingBox bounds() const { return bounding_box(vertices_); }
  bool is_convex() const;

  /// Inside and farther than kGeomEps from every wall.
  bool contains_strict(Vec2 p) const;
  /// True when the closed segment p-q touches no wall other than `skip_wall`.
  bool segment_clear(Vec2 p, Vec2 q, int skip_wall = -1) const;

 private:
  std::vector<Vec2> vertices_;
  std::vector<Segment> walls_;
};

RoomPolygon rectangle_room(double width, double height);
/// 11 m x 12 m H-shaped room: two 4 m x 12 m wings joined by a 3 m x 6 m
/// middle section.
RoomPolygon h_room();

struct Transmitter {
  int id = 0;
  Vec2 position;
};

/// The five transmitters deployed in the H-shaped room study.
std::vector<Transmitter> h_room_transmitters();

struct VirtualAnchor {
  int tx_id = 0;
  int wall_index = 0;
  Vec2 position;
};

enum class PathKind { LoS, FirstOrderNLoS };

struct SimPath {
  PathKind kind = PathKind::LoS;
  int tx_id = 0;
  /// -1 for the direct path.
  int wall_index = -1;
  Vec2 anchor;
  /// Specular point on the wall; equals the receiver for LoS.
  Vec2 reflection_point;
  double aoa_azimuth_deg = 0.0;
  double aod_azimuth_deg = 0.0;
  double delay_ns = 0.0;
  double path_length_m = 0.0;
};

/// Integer key identifying a physical (wall -1) or virtual anchor.
constexpr int anchor_key(int tx_id, int wall_index) { return tx_id * 1000 + (wall_index + 1); }
constexpr int anchor_key(const SimPath& p) { return anchor_key(p.tx_id, p.wall_index); }

struct SimConfig {
  RoomPolygon room;
  std::vector<Transmitter> transmitters;
  double aoa_noise_sigma_deg = 5.0;
  int trajectory_count = 50;
  int points_per_trajectory = 30;
  /// Arc length between consecutive receiver positions on a trajectory.
  double step_m = 0.5;
  std::uint64_t rng_seed = 1;
};

/// Throws InvalidGeometry on a zero-length wall.
Vec2 mirror_anchor(Vec2 tx_position, const Segment& wall);

/// All first-order virtual anchors of `tx` (one per wall).
std::vector<VirtualAnchor> virtual_anchors(const RoomPolygon& room, const Transmitter& tx);

/// LoS path (if unobstructed) followed by one path per wall that supports a
/// valid unobstructed specular reflection, in wall order.
/// Throws InvalidGeometry when rx is not strictly inside the room.
std::vector<SimPath> trace_paths(const RoomPolygon& room, const Transmitter& tx, Vec2 rx);

/// trace_paths for every transmitter, concatenated in transmitter order.
std::vector<SimPath> trace_all(const RoomPolygon& room, std::span<const Transmitter> txs, Vec2 rx);

/// Adds zero-mean Gaussian noise of standard deviation sigma (degrees) and wraps
/// into [0, 360).
double perturb_aoa(double aoa_deg, double sigma_deg, std::mt19937_64& rng);

/// Uniform sample from the room interior (rejection sampling in the bounds).
Vec2 sample_interior(const RoomPolygon& room, std::mt19937_64& rng);

/// Random-waypoint walk: points_per_trajectory positions spaced step_m apart
/// along a polyline whose legs stay inside the room.
std::vector<Vec2> random_waypoint_trajectory(const RoomPolygon& room, int points, double step_m,
                                             std::mt19937_64& rng);

/// Per-trajectory random stream derived from (seed, trajectory index).
std::mt19937_64 trajectory_stream(std::uint64_t seed, std::uint64_t trajectory_index);

/// Builds the measurement seen at rx: one MpcRecord per traced path with a noisy
/// AoA and the exact delay.
MeasurementSnapshot simulate_snapshot(const RoomPolygon& room, std::span<const Transmitter> txs, Vec2 rx,
                                      double sigma_deg, std::mt19937_64& rng, int snapshot_id,
                                      int area_id = 0);

/// trajectory_count * points_per_trajectory snapshots with ids in
/// trajectory-major order. Trajectory k draws from trajectory_stream(seed, k).
Dataset generate_dataset(const SimConfig& config);

/// Validates the config (positive interior area, transmitters inside, counts,
/// sigma). Throws InvalidGeometry or std::invalid_argument.
void validate(const SimConfig& config);

}  // namespace astnn::sim
