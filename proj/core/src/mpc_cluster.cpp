#include "astnn/mpc_cluster.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "astnn/geometry.hpp"

namespace astnn::cluster {
namespace {

constexpr int kUnvisited = -2;
constexpr int kNoise = -1;
// The radius shrinks geometrically; this many levels takes any positive
// epsilon far below double resolution of realistic inputs.
constexpr int kMaxLevels = 400;

bool lex_less(const MpcPoint& a, const MpcPoint& b) {
  if (a.delay != b.delay) return a.delay < b.delay;
  if (a.azimuth != b.azimuth) return a.azimuth < b.azimuth;
  return a.elevation < b.elevation;
}

int scaled_gamma(double eta, int gamma) {
  return std::max(1, static_cast<int>(std::lround(eta * static_cast<double>(gamma))));
}

std::vector<MpcPoint> gather(std::span<const MpcPoint> points, const std::vector<std::size_t>& idx) {
  std::vector<MpcPoint> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(points[i]);
  return out;
}

}  // namespace

void validate(const ClusterParams& params) {
  if (!(params.epsilon > 0.0)) throw std::invalid_argument("cluster radius epsilon must be > 0");
  if (params.gamma < 1) throw std::invalid_argument("neighbor count gamma must be >= 1");
  if (!(params.eta > 0.0 && params.eta < 1.0)) throw std::invalid_argument("scaling factor eta must lie in (0, 1)");
}

MpcPoint to_point(const MpcRecord& r) {
  return {r.delay_ns, wrap_deg_360(r.aoa_az_deg), wrap_deg_360(r.aoa_el_deg)};
}

double mpc_distance(const MpcPoint& a, const MpcPoint& b) {
  const double dd = a.delay - b.delay;
  const double da = circular_diff_deg(a.azimuth, b.azimuth);
  const double de = circular_diff_deg(a.elevation, b.elevation);
  return std::sqrt(dd * dd + da * da + de * de);
}

Partition dbscan(std::span<const MpcPoint> points, double epsilon, int gamma) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("dbscan: epsilon must be > 0");
  if (gamma < 1) throw std::invalid_argument("dbscan: gamma must be >= 1");

  Partition out;
  const std::size_t n = points.size();
  if (n == 0) return out;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return lex_less(points[a], points[b]); });
  std::vector<double> delays(n);
  for (std::size_t k = 0; k < n; ++k) delays[k] = points[order[k]].delay;

  // neighbors of sorted position k, as sorted positions; the delay axis bounds
  // the candidate window
  auto neighbors = [&](std::size_t k, std::vector<std::size_t>& out_nb) {
    out_nb.clear();
    const MpcPoint& p = points[order[k]];
    const auto lo = std::lower_bound(delays.begin(), delays.end(), p.delay - epsilon);
    const auto hi = std::upper_bound(delays.begin(), delays.end(), p.delay + epsilon);
    for (auto it = lo; it != hi; ++it) {
      const auto j = static_cast<std::size_t>(it - delays.begin());
      if (mpc_distance(p, points[order[j]]) <= epsilon) out_nb.push_back(j);
    }
  };

  std::vector<int> label(n, kUnvisited);
  std::vector<std::size_t> nb;
  std::vector<std::size_t> frontier;
  int next_cluster = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (label[k] != kUnvisited) continue;
    neighbors(k, nb);
    if (static_cast<int>(nb.size()) < gamma) {
      label[k] = kNoise;
      continue;
    }
    const int c = next_cluster++;
    label[k] = c;
    frontier.assign(nb.begin(), nb.end());
    for (std::size_t f = 0; f < frontier.size(); ++f) {
      const std::size_t q = frontier[f];
      if (label[q] == kNoise) label[q] = c;
      if (label[q] != kUnvisited) continue;
      label[q] = c;
      neighbors(q, nb);
      if (static_cast<int>(nb.size()) >= gamma) frontier.insert(frontier.end(), nb.begin(), nb.end());
    }
  }

  out.clusters.resize(static_cast<std::size_t>(next_cluster));
  for (std::size_t k = 0; k < n; ++k) {
    if (label[k] >= 0)
      out.clusters[static_cast<std::size_t>(label[k])].push_back(order[k]);
    else
      out.noise.push_back(order[k]);
  }
  return out;
}

Centroid centroid(std::span<const MpcPoint> cluster) {
  if (cluster.empty()) throw std::invalid_argument("centroid of an empty cluster");
  double delay = 0.0, s_az = 0.0, c_az = 0.0, s_el = 0.0, c_el = 0.0;
  for (const MpcPoint& p : cluster) {
    delay += p.delay;
    s_az += std::sin(deg_to_rad(p.azimuth));
    c_az += std::cos(deg_to_rad(p.azimuth));
    s_el += std::sin(deg_to_rad(p.elevation));
    c_el += std::cos(deg_to_rad(p.elevation));
  }
  const auto n = static_cast<double>(cluster.size());
  Centroid c;
  c.delay = delay / n;
  c.azimuth = wrap_deg_360(rad_to_deg(std::atan2(s_az, c_az)));
  c.elevation = wrap_deg_360(rad_to_deg(std::atan2(s_el, c_el)));
  c.member_count = static_cast<int>(cluster.size());
  return c;
}

double cost(std::span<const MpcPoint> cluster, const Centroid& c) {
  if (cluster.empty()) return 0.0;
  const MpcPoint center{c.delay, c.azimuth, c.elevation};
  double acc = 0.0;
  for (const MpcPoint& p : cluster) acc += mpc_distance(p, center);
  return acc / static_cast<double>(cluster.size());
}

RecursiveResult rec_dbscan_detailed(std::span<const MpcPoint> points, const ClusterParams& params) {
  validate(params);
  RecursiveResult res;
  double eps = params.epsilon;
  int gamma = params.gamma;

  const Partition first = dbscan(points, eps, gamma);
  for (const auto& idx : first.clusters) res.clusters.push_back(gather(points, idx));
  for (const auto& c : res.clusters) res.centroids.push_back(centroid(c));

  auto any_above = [&](double bound) {
    for (std::size_t i = 0; i < res.clusters.size(); ++i)
      if (cost(res.clusters[i], res.centroids[i]) > bound) return true;
    return false;
  };

  while (any_above(eps) && res.levels < kMaxLevels) {
    const double eps_next = params.eta * eps;
    const int gamma_next = scaled_gamma(params.eta, gamma);

    std::vector<std::vector<MpcPoint>> kept;
    std::vector<Centroid> kept_centroids;
    std::vector<std::vector<MpcPoint>> appended;
    for (std::size_t i = 0; i < res.clusters.size(); ++i) {
      auto& members = res.clusters[i];
      if (cost(members, res.centroids[i]) <= eps_next) {
        kept.push_back(std::move(members));
        kept_centroids.push_back(res.centroids[i]);
        continue;
      }
      if (gamma_next == 1 && members.size() <= 2) {
        for (const MpcPoint& p : members) appended.push_back({p});
        continue;
      }
      const Partition sub = dbscan(members, eps_next, gamma_next);
      for (const auto& idx : sub.clusters) appended.push_back(gather(members, idx));
    }
    for (auto& c : appended) {
      kept_centroids.push_back(centroid(c));
      kept.push_back(std::move(c));
    }
    res.clusters = std::move(kept);
    res.centroids = std::move(kept_centroids);
    eps = eps_next;
    gamma = gamma_next;
    ++res.levels;
  }

  res.final_epsilon = eps;
  res.final_gamma = gamma;
  return res;
}

std::vector<Centroid> rec_dbscan(std::span<const MpcPoint> points, const ClusterParams& params) {
  return rec_dbscan_detailed(points, params).centroids;
}

}  // namespace astnn::cluster
