#pragma once

#include <span>
#include <vector>

#include "astnn/measurement.hpp"

namespace astnn::cluster {

/// One MPC in the clustering feature space: delay in ns, angles in degrees
/// wrapped to [0, 360). The mixed units are compared directly.
struct MpcPoint {
  double delay = 0.0;
  double azimuth = 0.0;
  double elevation = 0.0;

  friend bool operator==(const MpcPoint&, const MpcPoint&) = default;
};

struct ClusterParams {
  double epsilon = 3.0;
  int gamma = 6;
  double eta = 0.75;
};

struct Centroid {
  double delay = 0.0;
  double azimuth = 0.0;
  double elevation = 0.0;
  int member_count = 0;
};

/// Result of one DBSCAN pass. `clusters` hold indices into the input span.
struct Partition {
  std::vector<std::vector<std::size_t>> clusters;
  std::vector<std::size_t> noise;
};

/// Throws std::invalid_argument unless epsilon > 0, gamma >= 1, 0 < eta < 1.
void validate(const ClusterParams& params);

MpcPoint to_point(const MpcRecord& r);

/// Euclidean distance in (delay, azimuth, elevation) with both angles compared
/// by their shortest circular difference.
double mpc_distance(const MpcPoint& a, const MpcPoint& b);

/// Density-based clustering. A point is core when at least `gamma` points
/// (itself included) lie within `epsilon`. Expansion runs over the points in
/// lexicographic (delay, azimuth, elevation) order, so the partition does not
/// depend on input order. Cluster member lists are sorted by that order too.
Partition dbscan(std::span<const MpcPoint> points, double epsilon, int gamma);

/// Arithmetic mean delay, circular mean angles. Throws std::invalid_argument on
/// an empty cluster.
Centroid centroid(std::span<const MpcPoint> cluster);

/// Mean distance of the members to `c`.
double cost(std::span<const MpcPoint> cluster, const Centroid& c);

/// Final clusters of a recursive run, with the radius the loop ended on.
struct RecursiveResult {
  std::vector<Centroid> centroids;
  std::vector<std::vector<MpcPoint>> clusters;
  double final_epsilon = 0.0;
  int final_gamma = 0;
  int levels = 0;
};

/// Recursive DBSCAN: re-clusters every cluster whose cost exceeds the shrunken
/// radius with (eta*epsilon, round(eta*gamma)) until every surviving cluster
/// has cost <= epsilon. Noise is discarded at every level.
RecursiveResult rec_dbscan_detailed(std::span<const MpcPoint> points, const ClusterParams& params);

std::vector<Centroid> rec_dbscan(std::span<const MpcPoint> points, const ClusterParams& params);

}  // namespace astnn::cluster
