// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 when any
// criterion fails.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "astnn/adoa.hpp"
#include "astnn/bootstrap.hpp"
#include "astnn/channel_sim.hpp"
#include "astnn/measurement_io.hpp"
#include "astnn/mpc_cluster.hpp"
#include "astnn/pipeline.hpp"
#include "astnn/tinynn.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"
#include "support/scenes.hpp"

using namespace astnn;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, double budget_s, const std::function<Outcome()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("threw: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs <= budget_s;
  const bool ok = o.pass && in_time;
  if (!ok) ++failures;
  std::printf("%s %2d %s: %s (%.2f s of %.0f s)%s\n", ok ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs, budget_s,
              in_time ? "" : " over time budget");
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

Outcome parameter_count() {
  const nn::MlpArchitecture a = nn::build_architecture(40, 0.9);
  const bool shape = a.layer_sizes == std::vector<int>{40, 36, 36, 18, 2};
  const std::size_t n = a.parameter_count();
  return {shape && n == 3512, std::string("layers ") + (shape ? "[40,36,36,18,2]" : "wrong") + ", parameters " +
                                  std::to_string(n) + " (want 3512)"};
}

Outcome gradient_oracle() {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n(0, 1);
  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    nn::MlpModel m = nn::zero_model({{4, 3, 3, 2, 2}, 1.0});
    for (auto& w : m.weights) w = w.unaryExpr([&](double) { return n(rng); });
    for (auto& b : m.biases) b = b.unaryExpr([&](double) { return n(rng); });
    Eigen::MatrixXd X(4, 8), Y(2, 8);
    std::vector<std::vector<double>> xs;
    std::vector<std::pair<double, double>> ys;
    for (int k = 0; k < 8; ++k) {
      for (int i = 0; i < 4; ++i) X(i, k) = n(rng);
      Y(0, k) = n(rng);
      Y(1, k) = n(rng);
      xs.push_back({X(0, k), X(1, k), X(2, k), X(3, k)});
      ys.emplace_back(Y(0, k), Y(1, k));
    }
    const nn::Gradients g = nn::backward(m, X, Y);
    const double h = 1e-5;
    auto probe = [&](double& p, double analytic) {
      const double keep = p;
      p = keep + h;
      const double up = oracle::batch_loss(m, xs, ys);
      p = keep - h;
      const double down = oracle::batch_loss(m, xs, ys);
      p = keep;
      const double fd = (up - down) / (2 * h);
      // relative to the larger magnitude, with a floor so near-zero entries
      // are compared absolutely
      worst = std::max(worst, std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-3}));
    };
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
      for (Eigen::Index i = 0; i < m.weights[l].size(); ++i) probe(m.weights[l].data()[i], g.weights[l].data()[i]);
      for (Eigen::Index i = 0; i < m.biases[l].size(); ++i) probe(m.biases[l].data()[i], g.biases[l].data()[i]);
    }
  }
  return {worst < 1e-4, fmt("max relative error %.3g over 20 models (limit 1e-4)", worst)};
}

struct HRoomRun {
  bool done = false;
  pipeline::PipelineResult result;
};

HRoomRun& h_room_run() {
  static HRoomRun run;
  if (!run.done) {
    const auto cfg = pipeline::load_config(ASTNN_SOURCE_DIR "/configs/h_room.json");
    const auto dir = std::filesystem::temp_directory_path() / "astnn_acceptance_h_room";
    std::filesystem::remove_all(dir);
    run.result = pipeline::run_full_pipeline(cfg, dir.string());
    run.done = true;
  }
  return run;
}

Outcome truth_trained_nn() {
  const auto& r = h_room_run().result;
  const bool sizes = r.kept == 1425 && r.test_size == 475;
  const double f = r.tnn.sub_meter_fraction;
  return {sizes && f >= 0.90, fmt("kept %.0f, test %.0f, TNN sub-meter %.4f (need >= 0.90)", static_cast<double>(r.kept),
                                  static_cast<double>(r.test_size), f)};
}

Outcome algorithm_supervised_parity() {
  const auto& r = h_room_run().result;
  const double as = r.as_tnn.sub_meter_fraction, boot = r.bootstrap.sub_meter_fraction;
  const double gap = std::abs(as - boot);
  return {gap <= 0.05 && boot >= 0.80,
          fmt("AS-TNN %.4f, bootstrap %.4f, gap %.4f (need <= 0.05), bootstrap floor 0.80 ", as, boot, gap) +
              (boot >= 0.80 ? "met" : "missed")};
}

Outcome noiseless_bootstrap() {
  // corner transmitters with unequal insets; an exactly symmetric layout has
  // indistinguishable rotated twins
  const auto room = sim::rectangle_room(10, 10);
  const auto txs = scene::corner_transmitters();
  sim::SimConfig sc;
  sc.room = room;
  sc.transmitters = txs;
  sc.aoa_noise_sigma_deg = 0;
  sc.trajectory_count = 10;
  sc.points_per_trajectory = 20;
  sc.rng_seed = 42;
  const Dataset data = sim::generate_dataset(sc);
  pipeline::ClusteringOptions off;
  off.enabled = false;
  const auto feats = pipeline::build_features(data, off, features::kDefaultInputSize);
  bootstrap::BootstrapConfig cfg;
  cfg.gauge_anchors = scene::physical_gauges(txs);
  const bootstrap::RoomModel model{room, txs};
  const auto res = bootstrap::jade_localize(feats.rows, cfg, &model);
  std::map<int, Vec2> truth;
  for (const auto& s : data) truth[s.snapshot_id] = s.truth->position;
  int within = 0;
  double worst = 0;
  for (const auto& e : res.estimates) {
    const double err = e.fixed ? distance(e.position, truth.at(e.snapshot_id)) : 1e9;
    worst = std::max(worst, err);
    within += err < 0.1;
  }
  return {within == 200 && data.size() == 200,
          fmt("%.0f/%.0f within 0.1 m, worst %.3g m", within, static_cast<double>(data.size()), worst)};
}

Outcome recursive_dbscan() {
  std::mt19937_64 rng(77);
  int match = 0, violations = 0;
  for (int t = 0; t < 100; ++t) {
    const auto pts = testgen::mpc_mixture(rng);
    const auto r = cluster::rec_dbscan_detailed(pts, {3.0, 6, 0.75});
    for (std::size_t i = 0; i < r.clusters.size(); ++i)
      violations += cluster::cost(r.clusters[i], r.centroids[i]) > r.final_epsilon;
    match += r.centroids.size() == oracle::rec_dbscan_count(pts, 3.0, 6, 0.75);
  }
  return {violations == 0 && match >= 95,
          fmt("cost violations %.0f, count matches %.0f/100 (need >= 95)", violations, match)};
}

Outcome orientation_invariance() {
  // azimuths and offsets on a 1/64 degree grid keep every sum exact
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> count(2, 20), tick(0, 360 * 64 - 1);
  int identical = 0;
  for (int t = 0; t < 1000; ++t) {
    auto c = testgen::random_centroids(rng, count(rng));
    for (auto& x : c) x.azimuth = tick(rng) / 64.0;
    const auto before = features::compute_adoa(c, features::kDefaultInputSize);
    const double offset = tick(rng) / 64.0;
    for (auto& x : c) x.azimuth = wrap_deg_360(x.azimuth + offset);
    const auto after = features::compute_adoa(c, features::kDefaultInputSize);
    identical += std::memcmp(before.values.data(), after.values.data(), before.values.size() * sizeof(double)) == 0 &&
                 before.valid_count == after.valid_count;
  }
  return {identical == 1000, fmt("%.0f/1000 bit-identical", identical)};
}

Outcome ray_trace_oracles() {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-20, 20);
  double worst = 0;
  for (int i = 0; i < 10000; ++i) {
    const Vec2 p{u(rng), u(rng)};
    const Segment w{{u(rng), u(rng)}, {u(rng), u(rng)}};
    if (w.length() < 1e-3) continue;
    worst = std::max(worst, distance(sim::mirror_anchor(sim::mirror_anchor(p, w), w), p));
  }

  // rectangles of random shape; in other convex rooms a bounce point can miss
  // its wall segment, so walls + 1 is not guaranteed there
  int convex_bad = 0;
  std::uniform_real_distribution<double> side(2, 30);
  for (int r = 0; r < 40; ++r) {
    const sim::RoomPolygon room = sim::rectangle_room(side(rng), side(rng));
    for (int i = 0; i < 100; ++i) {
      const Vec2 tx = sim::sample_interior(room, rng), rx = sim::sample_interior(room, rng);
      convex_bad += sim::trace_paths(room, {1, tx}, rx).size() != room.walls().size() + 1;
    }
  }

  const sim::RoomPolygon h = sim::h_room();
  int agree = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const Vec2 tx = sim::sample_interior(h, rng), rx = sim::sample_interior(h, rng);
    agree += oracle::path_set(sim::trace_paths(h, {1, tx}, rx)) == oracle::trace_oracle(h.vertices(), tx, rx);
  }
  const double rate = static_cast<double>(agree) / n;
  return {worst <= 1e-12 && convex_bad == 0 && rate >= 0.999,
          fmt("involution max %.3g m, convex count mismatches %.0f/4000, H-room agreement %.4f (need >= 0.999)", worst,
              convex_bad, rate)};
}

Outcome trim_count() {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0, 1);
  std::vector<bootstrap::BootstrapEstimate> est;
  for (int i = 0; i < 1500; ++i) est.push_back({i, {5 + 2 * n(rng), 6 + n(rng)}, 0, true, false, false});
  const auto t = bootstrap::trim_outliers(est, 0.05);
  return {t.kept.size() == 1425, fmt("%.0f kept of 1500", static_cast<double>(t.kept.size()))};
}

Outcome ingestion_round_trip() {
  sim::SimConfig sc;
  sc.room = sim::h_room();
  sc.transmitters = sim::h_room_transmitters();
  sc.trajectory_count = 10;
  sc.points_per_trajectory = 30;
  const Dataset d = sim::generate_dataset(sc);
  std::stringstream s;
  io::save_measurements(d, s);
  const std::string first = s.str();
  const auto back = io::load_measurements(s);
  std::ostringstream again;
  io::save_measurements(back.snapshots, again);
  const bool ok = back.rejects.empty() && back.snapshots == d && again.str() == first;
  return {ok, std::string("measured-data figures are out of reach without the dataset; ") +
                  "save/load of 300 simulated snapshots is " + (ok ? "bit-identical" : "NOT bit-identical")};
}

}  // namespace

int main() {
  criterion(1, "parameter count", 1, parameter_count);
  criterion(2, "gradient oracle", 10, gradient_oracle);
  criterion(3, "truth-trained NN, H-room", 900, truth_trained_nn);
  criterion(4, "algorithm-supervised parity, H-room", 900, algorithm_supervised_parity);
  criterion(5, "noiseless bootstrap exactness", 120, noiseless_bootstrap);
  criterion(6, "recursive DBSCAN post-condition", 60, recursive_dbscan);
  criterion(7, "ADoA orientation invariance", 5, orientation_invariance);
  criterion(8, "reflection and ray-trace oracles", 120, ray_trace_oracles);
  criterion(9, "outlier trim count", 1, trim_count);
  criterion(10, "ingestion round trip", 10, ingestion_round_trip);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
