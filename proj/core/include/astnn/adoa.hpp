#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "astnn/mpc_cluster.hpp"

namespace astnn::features {

/// Padding value for unused feature slots; lies outside [-pi, pi).
inline constexpr double kSentinel = -4.0;
inline constexpr int kDefaultInputSize = 40;

/// Order of the features in a vector. Sweep order starts at the reference
/// direction and does not depend on the receiver heading. Global order sorts by
/// absolute azimuth, so the order itself carries the heading-aligned frame.
enum class AdoaOrder { Sweep, Global };

/// Fixed-length network input. The first valid_count entries are angle
/// differences in [-pi, pi), ordered by the angle swept counter-clockwise from
/// the reference direction; the rest hold kSentinel.
struct AdoaVector {
  std::vector<double> values;
  int valid_count = 0;
  std::optional<int> reference_anchor_hint;
  AdoaOrder order = AdoaOrder::Sweep;

  /// Sweep angle of feature k in [0, 2*pi).
  double sweep(int k) const;

  friend bool operator==(const AdoaVector&, const AdoaVector&) = default;
};

/// Counts vectors that had to drop features to fit the input size.
struct OverflowCounter {
  std::size_t truncated_vectors = 0;
  std::size_t dropped_features = 0;
};

/// Index of the centroid with the least delay (ties: smaller azimuth).
/// Throws InsufficientMeasurements on an empty list.
std::size_t select_reference(std::span<const cluster::Centroid> centroids);

/// Angle differences of every non-reference centroid with respect to the
/// reference, ordered per `order` and padded to `input_size`. Overflow keeps
/// the entries with the smallest sweep angle.
/// Throws InsufficientMeasurements for fewer than two centroids.
AdoaVector compute_adoa(std::span<const cluster::Centroid> centroids, int input_size = kDefaultInputSize,
                        OverflowCounter* overflow = nullptr, AdoaOrder order = AdoaOrder::Sweep);

/// Pads sweep-ordered features with kSentinel. Longer inputs keep the first
/// `n` (smallest sweep) entries and bump `overflow`.
AdoaVector pad_to(std::span<const double> values, int n, OverflowCounter* overflow = nullptr);

}  // namespace astnn::features
