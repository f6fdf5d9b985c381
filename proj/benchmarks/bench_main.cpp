#include <benchmark/benchmark.h>

#include <random>

#include "astnn/bootstrap.hpp"
#include "astnn/channel_sim.hpp"
#include "astnn/mpc_cluster.hpp"
#include "astnn/tinynn.hpp"

using namespace astnn;

namespace {

std::vector<cluster::MpcPoint> blobs(int n) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> s(0, 0.7);
  std::vector<cluster::MpcPoint> pts;
  for (int k = 0; k < n; ++k) {
    const int g = k % 25;
    pts.push_back({10.0 * g + s(rng), wrap_deg_360(14.0 * g + s(rng)), wrap_deg_360(s(rng))});
  }
  return pts;
}

void BM_Dbscan(benchmark::State& st) {
  const auto pts = blobs(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(cluster::dbscan(pts, 3, 6));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}
BENCHMARK(BM_Dbscan)->Arg(1000)->Arg(10000);

void BM_RecDbscan(benchmark::State& st) {
  const auto pts = blobs(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(cluster::rec_dbscan(pts, {}));
}
BENCHMARK(BM_RecDbscan)->Arg(1000)->Arg(10000);

void BM_TracePaths(benchmark::State& st) {
  const auto room = sim::h_room();
  const auto txs = sim::h_room_transmitters();
  std::mt19937_64 rng(2);
  std::vector<Vec2> rx;
  for (int i = 0; i < 256; ++i) rx.push_back(sim::sample_interior(room, rng));
  std::size_t i = 0;
  for (auto _ : st) benchmark::DoNotOptimize(sim::trace_all(room, txs, rx[i++ % rx.size()]));
}
BENCHMARK(BM_TracePaths);

struct Lattice {
  bootstrap::AnchorMap anchors;
  std::optional<bootstrap::LatticeTable> table;
  features::AdoaVector observed;
};

Lattice& h_room_lattice(int n) {
  static std::map<int, Lattice> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  const auto room = sim::h_room();
  const auto txs = sim::h_room_transmitters();
  const bootstrap::RoomModel model{room, txs};
  bootstrap::BootstrapConfig cfg;
  for (const auto& tx : txs) cfg.gauge_anchors.push_back({sim::anchor_key(tx.id, -1), tx.position});
  Lattice& l = cache[n];
  l.anchors = bootstrap::initial_anchor_map(cfg, &model);
  l.table.emplace(l.anchors, room.bounds(), n, &model);
  std::vector<cluster::Centroid> c;
  for (const auto& p : sim::trace_all(room, txs, {2.5, 7.0})) c.push_back({p.delay_ns, p.aoa_azimuth_deg, 0, 1});
  l.observed = features::compute_adoa(c, 40);
  return l;
}

void BM_LatticeBuild(benchmark::State& st) {
  const auto room = sim::h_room();
  const auto txs = sim::h_room_transmitters();
  const bootstrap::RoomModel model{room, txs};
  const auto& anchors = h_room_lattice(64).anchors;
  for (auto _ : st)
    benchmark::DoNotOptimize(bootstrap::LatticeTable(anchors, room.bounds(), static_cast<int>(st.range(0)), &model));
}
BENCHMARK(BM_LatticeBuild)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_GridSearch(benchmark::State& st) {
  const int n = static_cast<int>(st.range(0));
  Lattice& l = h_room_lattice(n);
  bootstrap::BootstrapConfig cfg;
  cfg.grid_points_per_axis = n;
  for (auto _ : st) benchmark::DoNotOptimize(bootstrap::grid_search_rx(*l.table, l.observed, cfg));
  st.SetItemsProcessed(st.iterations() * n * n);
}
BENCHMARK(BM_GridSearch)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_Forward(benchmark::State& st) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0, 0.2);
  nn::MlpModel m = nn::zero_model(nn::build_architecture(40, 0.9));
  for (auto& w : m.weights) w = w.unaryExpr([&](double) { return g(rng); });
  std::vector<double> x(40);
  for (double& v : x) v = g(rng);
  for (auto _ : st) benchmark::DoNotOptimize(nn::forward(m, x));
}
BENCHMARK(BM_Forward);

void BM_Backward(benchmark::State& st) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0, 0.2);
  nn::MlpModel m = nn::zero_model(nn::build_architecture(40, 0.9));
  for (auto& w : m.weights) w = w.unaryExpr([&](double) { return g(rng); });
  const auto batch = static_cast<Eigen::Index>(st.range(0));
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(40, batch);
  const Eigen::MatrixXd y = Eigen::MatrixXd::Random(2, batch);
  for (auto _ : st) benchmark::DoNotOptimize(nn::backward(m, x, y));
  st.SetItemsProcessed(st.iterations() * batch);
}
BENCHMARK(BM_Backward)->Arg(95)->Arg(475);

}  // namespace
BENCHMARK_MAIN();
