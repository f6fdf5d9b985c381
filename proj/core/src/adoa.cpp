#include "astnn/adoa.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "astnn/errors.hpp"
#include "astnn/geometry.hpp"

namespace astnn::features {

double AdoaVector::sweep(int k) const {
  const double v = values.at(static_cast<std::size_t>(k));
  return v < 0.0 ? v + kTwoPi : v;
}

std::size_t select_reference(std::span<const cluster::Centroid> centroids) {
  if (centroids.empty()) throw InsufficientMeasurements("no centroids to pick a reference from");
  std::size_t best = 0;
  for (std::size_t k = 1; k < centroids.size(); ++k) {
    const auto& c = centroids[k];
    const auto& b = centroids[best];
    if (c.delay < b.delay || (c.delay == b.delay && c.azimuth < b.azimuth)) best = k;
  }
  return best;
}

AdoaVector pad_to(std::span<const double> values, int n, OverflowCounter* overflow) {
  if (n < 0) throw std::invalid_argument("pad_to: negative size");
  const auto size = static_cast<std::size_t>(n);
  AdoaVector out;
  out.values.assign(size, kSentinel);
  const std::size_t keep = std::min(size, values.size());
  std::copy_n(values.begin(), keep, out.values.begin());
  out.valid_count = static_cast<int>(keep);
  if (values.size() > size && overflow != nullptr) {
    ++overflow->truncated_vectors;
    overflow->dropped_features += values.size() - size;
  }
  return out;
}

AdoaVector compute_adoa(std::span<const cluster::Centroid> centroids, int input_size, OverflowCounter* overflow,
                        AdoaOrder order) {
  if (centroids.size() < 2)
    throw InsufficientMeasurements("at least two dominant paths are needed for an angle difference");
  if (input_size < 0) throw std::invalid_argument("compute_adoa: negative size");
  const std::size_t ref = select_reference(centroids);
  const double ref_az = centroids[ref].azimuth;

  // (sweep from the reference, absolute azimuth), both in degrees
  std::vector<std::pair<double, double>> paths;
  paths.reserve(centroids.size() - 1);
  for (std::size_t k = 0; k < centroids.size(); ++k)
    if (k != ref) paths.emplace_back(wrap_deg_360(centroids[k].azimuth - ref_az), wrap_deg_360(centroids[k].azimuth));
  std::sort(paths.begin(), paths.end());

  const auto size = static_cast<std::size_t>(input_size);
  if (paths.size() > size) {
    if (overflow != nullptr) {
      ++overflow->truncated_vectors;
      overflow->dropped_features += paths.size() - size;
    }
    paths.resize(size);
  }
  if (order == AdoaOrder::Global)
    std::stable_sort(paths.begin(), paths.end(), [](const auto& a, const auto& b) { return a.second < b.second; });

  std::vector<double> features;
  features.reserve(paths.size());
  for (const auto& [d, abs_deg] : paths) {
    const double signed_deg = d >= 180.0 ? d - 360.0 : d;
    double rad = signed_deg / 180.0 * kPi;
    if (rad >= kPi) rad = std::nextafter(kPi, 0.0);
    features.push_back(rad);
  }
  AdoaVector out = pad_to(features, input_size, nullptr);
  out.order = order;
  return out;
}

}  // namespace astnn::features
