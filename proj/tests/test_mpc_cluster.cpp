#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <random>

#include "astnn/mpc_cluster.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace astnn::cluster;

namespace {

std::vector<std::vector<MpcPoint>> as_point_sets(std::span<const MpcPoint> pts, const Partition& p) {
  std::vector<std::vector<MpcPoint>> out;
  for (const auto& c : p.clusters) {
    std::vector<MpcPoint> members;
    for (std::size_t i : c) members.push_back(pts[i]);
    out.push_back(std::move(members));
  }
  return out;
}

}  // namespace

TEST_SUITE("mpc_cluster") {

TEST_CASE("dbscan spec examples") {
  std::vector<MpcPoint> same(10, MpcPoint{5, 10, 0});
  const Partition a = dbscan(same, 3, 6);
  REQUIRE(a.clusters.size() == 1);
  CHECK(a.clusters[0].size() == 10);
  CHECK(a.noise.empty());

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> j(-0.25, 0.25);
  std::vector<MpcPoint> two;
  for (int g = 0; g < 2; ++g)
    for (int k = 0; k < 8; ++k) two.push_back({10 + 50.0 * g + j(rng), 100 + j(rng), j(rng) + 0.5});
  const Partition b = dbscan(two, 3, 6);
  CHECK(b.clusters.size() == 2);
  CHECK(oracle::dbscan(two, 3, 6) == as_point_sets(two, b));

  std::vector<MpcPoint> sparse{{0, 0, 0}, {100, 0, 0}, {0, 180, 0}};
  const Partition c = dbscan(sparse, 3, 6);
  CHECK(c.clusters.empty());
  CHECK(c.noise.size() == 3);

  CHECK(dbscan(std::vector<MpcPoint>{}, 3, 6).clusters.empty());
  CHECK_THROWS(dbscan(sparse, 0, 6));
  CHECK_THROWS(dbscan(sparse, 1, 0));
}

TEST_CASE("dbscan matches the brute-force reference") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 60; ++trial) {
    const auto pts = testgen::mpc_mixture(rng);
    CHECK(oracle::dbscan(pts, 3, 6) == as_point_sets(pts, dbscan(pts, 3, 6)));
  }
}

TEST_CASE("angular distance wraps at the seam") {
  CHECK(mpc_distance({0, 359, 0}, {0, 1, 0}) == doctest::Approx(2));
  CHECK(mpc_distance({0, 0, 359.5}, {0, 0, 0.5}) == doctest::Approx(1));
  std::vector<MpcPoint> seam;
  for (int k = 0; k < 8; ++k) seam.push_back({1, k % 2 ? 359.5 : 0.5, 0});
  CHECK(dbscan(seam, 3, 6).clusters.size() == 1);
}

TEST_CASE("centroid") {
  const std::vector<MpcPoint> wrap{{0, 359, 0}, {0, 1, 0}};
  const Centroid c = centroid(wrap);
  CHECK(std::min(c.azimuth, 360 - c.azimuth) < 1e-9);
  CHECK(c.azimuth >= 0);
  CHECK(c.azimuth < 360);

  const Centroid one = centroid(std::vector<MpcPoint>{{3, 40, 7}});
  CHECK(one.delay == 3);
  CHECK(one.azimuth == doctest::Approx(40));
  CHECK(one.elevation == doctest::Approx(7));
  CHECK(one.member_count == 1);

  const Centroid d = centroid(std::vector<MpcPoint>{{10, 0, 0}, {20, 0, 0}, {30, 0, 0}});
  CHECK(d.delay == doctest::Approx(20));
  CHECK_THROWS(centroid(std::vector<MpcPoint>{}));
}

TEST_CASE("cost") {
  const std::vector<MpcPoint> flat(4, MpcPoint{1, 2, 3});
  CHECK(cost(flat, centroid(flat)) == 0);

  const double d = 3.0;
  const std::vector<MpcPoint> pair{{10 - d / 2, 50, 0}, {10 + d / 2, 50, 0}};
  CHECK(cost(pair, centroid(pair)) == doctest::Approx(d / 2));

  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0, 2);
  for (int t = 0; t < 20; ++t) {
    std::vector<MpcPoint> pts;
    for (int k = 0; k < 20; ++k)
      pts.push_back({20 + n(rng), astnn::wrap_deg_360(n(rng)), astnn::wrap_deg_360(90 + n(rng))});
    CHECK(cost(pts, centroid(pts)) == doctest::Approx(oracle::cost_of(pts)).epsilon(1e-12));
  }
}

TEST_CASE("rec_dbscan leaves a tight cluster alone") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> j(-0.1, 0.1);
  std::vector<MpcPoint> pts;
  for (int k = 0; k < 12; ++k) pts.push_back({20 + j(rng), 45 + j(rng), 1 + j(rng)});
  const auto r = rec_dbscan_detailed(pts, {});
  CHECK(r.centroids.size() == 1);
  CHECK(r.levels == 0);
  CHECK(r.final_epsilon == 3);
}

TEST_CASE("blobs 4 apart stay merged because their cost is under epsilon") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> s(0, 0.5);
  std::vector<MpcPoint> pts;
  for (int g = 0; g < 2; ++g)
    for (int k = 0; k < 30; ++k) pts.push_back({10 + 4.0 * g + s(rng), 100 + s(rng), 1 + s(rng)});
  REQUIRE(dbscan(pts, 3, 6).clusters.size() == 1);
  const auto r = rec_dbscan_detailed(pts, {});
  CHECK(cost(r.clusters[0], r.centroids[0]) < 3);
  CHECK(r.levels == 0);
  CHECK(r.centroids.size() == oracle::rec_dbscan_count(pts, 3, 6, 0.75));
}

TEST_CASE("rec_dbscan splits a chain merged by the first pass") {
  // two 4-wide bars 3 apart: joined at epsilon 3, cost 3.5, apart at 2.25
  std::vector<MpcPoint> pts;
  for (int k = 0; k <= 16; ++k) {
    pts.push_back({0.25 * k, 50, 0});
    pts.push_back({7 + 0.25 * k, 50, 0});
  }
  REQUIRE(dbscan(pts, 3, 6).clusters.size() == 1);
  const auto r = rec_dbscan_detailed(pts, {});
  CHECK(r.levels == 1);
  CHECK(r.final_epsilon == doctest::Approx(2.25));
  CHECK(r.final_gamma == 5);
  REQUIRE(r.centroids.size() == 2);
  CHECK(r.centroids.size() == oracle::rec_dbscan_count(pts, 3, 6, 0.75));
  CHECK(std::min(r.centroids[0].delay, r.centroids[1].delay) == doctest::Approx(2));
  CHECK(std::max(r.centroids[0].delay, r.centroids[1].delay) == doctest::Approx(9));
}

TEST_CASE("rec_dbscan properties on random mixtures") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 40; ++trial) {
    auto pts = testgen::mpc_mixture(rng);
    const auto r = rec_dbscan_detailed(pts, {});
    const std::size_t first = dbscan(pts, 3, 6).clusters.size();
    REQUIRE(r.clusters.size() == r.centroids.size());
    for (std::size_t i = 0; i < r.clusters.size(); ++i) {
      CHECK(cost(r.clusters[i], r.centroids[i]) <= r.final_epsilon);
      CHECK(r.centroids[i].member_count == static_cast<int>(r.clusters[i].size()));
    }
    if (r.levels > 0) CHECK(r.centroids.size() >= first);
    CHECK(r.centroids.size() == oracle::rec_dbscan_count(pts, 3, 6, 0.75));

    // input order does not matter
    std::shuffle(pts.begin(), pts.end(), rng);
    const auto again = rec_dbscan(pts, {});
    REQUIRE(again.size() == r.centroids.size());
    for (std::size_t i = 0; i < again.size(); ++i) {
      CHECK(again[i].delay == doctest::Approx(r.centroids[i].delay).epsilon(1e-12));
      CHECK(again[i].azimuth == doctest::Approx(r.centroids[i].azimuth).epsilon(1e-12));
      CHECK(again[i].member_count == r.centroids[i].member_count);
    }
  }
}

TEST_CASE("recursion terminates on adversarial spreads") {
  // uniform cloud: no stable cluster at any scale
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 6);
  std::vector<MpcPoint> pts;
  for (int k = 0; k < 300; ++k) pts.push_back({u(rng), u(rng), u(rng)});
  const auto r = rec_dbscan_detailed(pts, {});
  for (std::size_t i = 0; i < r.clusters.size(); ++i) CHECK(cost(r.clusters[i], r.centroids[i]) <= r.final_epsilon);
}

TEST_CASE("ten thousand points cluster quickly") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> s(0, 0.7);
  std::vector<MpcPoint> pts;
  for (int k = 0; k < 10000; ++k) {
    const int g = k % 25;
    pts.push_back({10.0 * g + s(rng), astnn::wrap_deg_360(14.0 * g + s(rng)), astnn::wrap_deg_360(s(rng))});
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = rec_dbscan(pts, {});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(r.size() >= 25);
  CHECK(secs < 5.0);
}

TEST_CASE("parameter validation") {
  CHECK_THROWS(validate(ClusterParams{0, 6, 0.75}));
  CHECK_THROWS(validate(ClusterParams{3, 0, 0.75}));
  CHECK_THROWS(validate(ClusterParams{3, 6, 1.0}));
  CHECK_THROWS(validate(ClusterParams{3, 6, 0.0}));
  CHECK_NOTHROW(validate(ClusterParams{}));
}

}  // TEST_SUITE
