#include <doctest.h>

#include <random>
#include <sstream>

#include "astnn/channel_sim.hpp"
#include "astnn/errors.hpp"
#include "astnn/measurement_io.hpp"
#include "support/oracles.hpp"

using namespace astnn;
using namespace astnn::sim;

TEST_SUITE("channel_sim") {

TEST_CASE("mirror_anchor examples") {
  const Vec2 a = mirror_anchor({2, 2}, {{0, 0}, {11, 0}});
  CHECK(a.x == doctest::Approx(2));
  CHECK(a.y == doctest::Approx(-2));
  const Vec2 b = mirror_anchor({2, 2}, {{0, 0}, {0, 12}});
  CHECK(b.x == doctest::Approx(-2));
  CHECK(b.y == doctest::Approx(2));
  const Vec2 c = mirror_anchor({5.5, 6}, {{4, 3}, {7, 3}});
  CHECK(c.x == doctest::Approx(5.5));
  CHECK(c.y == doctest::Approx(0));
  CHECK_THROWS_AS(mirror_anchor({1, 1}, {{3, 3}, {3, 3}}), InvalidGeometry);
}

TEST_CASE("reflection is an involution") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-20, 20);
  double worst = 0;
  for (int i = 0; i < 10000; ++i) {
    const Vec2 p{u(rng), u(rng)};
    const Segment w{{u(rng), u(rng)}, {u(rng), u(rng)}};
    if (w.length() < 1e-3) continue;
    worst = std::max(worst, distance(mirror_anchor(mirror_anchor(p, w), w), p));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("room polygon validation") {
  CHECK_THROWS_AS(RoomPolygon({{0, 0}, {1, 0}}), InvalidGeometry);
  CHECK_THROWS_AS(RoomPolygon({{0, 0}, {1, 1}, {1, 0}, {0, 1}}), InvalidGeometry);
  CHECK_THROWS_AS(RoomPolygon({{0, 0}, {1, 0}, {2, 0}}), InvalidGeometry);
  const RoomPolygon h = h_room();
  CHECK(h.walls().size() == 12);
  CHECK(h.area() == doctest::Approx(4 * 12 * 2 + 3 * 6));
  CHECK_FALSE(h.is_convex());
  CHECK(rectangle_room(10, 10).is_convex());
  for (const auto& tx : h_room_transmitters()) CHECK(h.contains_strict(tx.position));
}

TEST_CASE("convex room returns LoS plus one path per wall") {
  const RoomPolygon room = rectangle_room(10, 10);
  const auto paths = trace_paths(room, {1, {2, 2}}, {8, 8});
  REQUIRE(paths.size() == 5);
  CHECK(paths[0].kind == PathKind::LoS);

  std::mt19937_64 rng(3);
  for (int i = 0; i < 2000; ++i) {
    const Vec2 tx = sample_interior(room, rng), rx = sample_interior(room, rng);
    CHECK(trace_paths(room, {1, tx}, rx).size() == 5);
  }
}

TEST_CASE("image-source consistency") {
  const RoomPolygon room = h_room();
  std::mt19937_64 rng(5);
  int checked = 0;
  for (int i = 0; i < 2000; ++i) {
    const Vec2 tx = sample_interior(room, rng), rx = sample_interior(room, rng);
    for (const SimPath& p : trace_paths(room, {1, tx}, rx)) {
      CHECK(std::abs(p.delay_ns - p.path_length_m / kSpeedOfLight) < 1e-12);
      if (p.kind != PathKind::FirstOrderNLoS) continue;
      ++checked;
      CHECK(std::abs(distance(p.anchor, rx) - p.path_length_m) < 1e-9);
      // the bounce point lies on its wall
      const double off_wall = oracle::seg_dist(p.reflection_point, room.walls()[p.wall_index].a,
                                          room.walls()[p.wall_index].b);
      CHECK(off_wall < 1e-9);
      const double leg_aoa = bearing_deg(rx, p.reflection_point);
      CHECK(std::abs(circular_diff_deg(leg_aoa, p.aoa_azimuth_deg)) < 1e-9);
      // unfolded length equals the two physical legs
      CHECK(std::abs(distance(tx, p.reflection_point) + distance(p.reflection_point, rx) - p.path_length_m) < 1e-9);
    }
  }
  CHECK(checked > 1000);
}

TEST_CASE("H-room paths from tx 1 to (9, 10) match the marching oracle") {
  const RoomPolygon room = h_room();
  const Vec2 tx{2, 2}, rx{9, 10};
  const auto got = oracle::path_set(trace_paths(room, {1, tx}, rx));
  const auto want = oracle::trace_oracle(room.vertices(), tx, rx);
  CHECK(got == want);
  // the straight line passes through the middle opening at x=4 and x=7
  CHECK(want.los);
}

TEST_CASE("H-room occlusion agrees with the marching oracle") {
  const RoomPolygon room = h_room();
  std::mt19937_64 rng(17);
  int agree = 0;
  const int n = 2000;
  for (int i = 0; i < n; ++i) {
    const Vec2 tx = sample_interior(room, rng), rx = sample_interior(room, rng);
    agree += oracle::path_set(trace_paths(room, {1, tx}, rx)) == oracle::trace_oracle(room.vertices(), tx, rx);
  }
  CHECK(agree >= n - 2);
}

TEST_CASE("LoS delay vanishes as rx approaches tx") {
  const RoomPolygon room = rectangle_room(10, 10);
  double prev = 1e9;
  for (double eps : {1e-1, 1e-3, 1e-5, 1e-7}) {
    const auto paths = trace_paths(room, {1, {5, 5}}, {5 + eps, 5});
    REQUIRE(paths[0].kind == PathKind::LoS);
    CHECK(paths[0].delay_ns < prev);
    prev = paths[0].delay_ns;
  }
  CHECK(prev < 1e-6);
}

TEST_CASE("rx outside the room is rejected") {
  CHECK_THROWS_AS(trace_paths(h_room(), {1, {2, 2}}, {5.5, 1}), InvalidGeometry);
  CHECK_THROWS_AS(trace_paths(h_room(), {1, {2, 2}}, {0, 5}), InvalidGeometry);
}

TEST_CASE("perturb_aoa") {
  std::mt19937_64 rng(1);
  CHECK(perturb_aoa(90, 0, rng) == 90);
  for (int i = 0; i < 1000; ++i) {
    const double v = perturb_aoa(359.9, 5, rng);
    CHECK(v >= 0);
    CHECK(v < 360);
  }
  double sum = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) sum += perturb_aoa(180, 5, rng);
  CHECK(std::abs(sum / n - 180) < 0.1);
  CHECK_THROWS(perturb_aoa(10, -1, rng));

  std::mt19937_64 a(9), b(9);
  CHECK(perturb_aoa(33, 5, a) == perturb_aoa(33, 5, b));
}

TEST_CASE("generate_dataset sizes and determinism") {
  SimConfig cfg;
  cfg.room = h_room();
  cfg.transmitters = h_room_transmitters();
  cfg.trajectory_count = 50;
  cfg.points_per_trajectory = 30;
  const Dataset d = generate_dataset(cfg);
  CHECK(d.size() == 1500);
  for (const auto& s : d) {
    REQUIRE(s.truth.has_value());
    CHECK(cfg.room.contains_strict(s.truth->position));
    CHECK(oracle::inside(cfg.room.vertices(), s.truth->position));
  }

  std::ostringstream x, y;
  io::save_measurements(d, x);
  io::save_measurements(generate_dataset(cfg), y);
  CHECK(x.str() == y.str());

  cfg.rng_seed = 2;
  std::ostringstream z;
  io::save_measurements(generate_dataset(cfg), z);
  CHECK(x.str() != z.str());
}

TEST_CASE("single snapshot carries a path per illuminated transmitter") {
  SimConfig cfg;
  cfg.room = h_room();
  cfg.transmitters = h_room_transmitters();
  cfg.trajectory_count = 1;
  cfg.points_per_trajectory = 1;
  const Dataset d = generate_dataset(cfg);
  REQUIRE(d.size() == 1);
  CHECK(d[0].tx_records.size() >= 1);
  for (const auto& [tx, rows] : d[0].tx_records) CHECK(rows.size() >= 1);
}

TEST_CASE("trajectory spacing") {
  const RoomPolygon room = h_room();
  auto rng = trajectory_stream(4, 0);
  const auto pts = random_waypoint_trajectory(room, 200, 0.5, rng);
  REQUIRE(pts.size() == 200);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    // straight-line gap never exceeds the arc length step
    CHECK(distance(pts[i - 1], pts[i]) <= 0.5 + 1e-9);
    CHECK(room.contains_strict(pts[i]));
  }
}

TEST_CASE("invalid simulation configs") {
  SimConfig cfg;
  cfg.room = rectangle_room(10, 10);
  cfg.transmitters = {{1, {12, 5}}};
  CHECK_THROWS_AS(generate_dataset(cfg), InvalidGeometry);
  cfg.transmitters = {{1, {5, 5}}};
  cfg.aoa_noise_sigma_deg = -1;
  CHECK_THROWS(generate_dataset(cfg));
  cfg.aoa_noise_sigma_deg = 0;
  cfg.points_per_trajectory = 0;
  CHECK_THROWS(generate_dataset(cfg));
  SimConfig empty;
  CHECK_THROWS_AS(generate_dataset(empty), InvalidGeometry);
}

}  // TEST_SUITE
