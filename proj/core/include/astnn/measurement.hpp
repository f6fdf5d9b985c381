#pragma once

#include <map>
#include <optional>
#include <vector>

#include "astnn/geometry.hpp"

namespace astnn {

/// One extracted multipath component, as delivered by a channel sounder.
struct MpcRecord {
  double path_loss_db = 0.0;
  double delay_ns = 0.0;
  double aoa_az_deg = 0.0;
  double aoa_el_deg = 0.0;
  double aod_az_deg = 0.0;
  double aod_el_deg = 0.0;

  friend bool operator==(const MpcRecord&, const MpcRecord&) = default;
};

struct GroundTruth {
  Vec2 position;
  double heading_deg = 0.0;

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

/// Everything observed at one receiver location, grouped by transmitter id.
struct MeasurementSnapshot {
  int snapshot_id = 0;
  int area_id = 0;
  std::map<int, std::vector<MpcRecord>> tx_records;
  std::optional<GroundTruth> truth;

  std::size_t mpc_count() const {
    std::size_t n = 0;
    for (const auto& [tx, rows] : tx_records) n += rows.size();
    return n;
  }

  friend bool operator==(const MeasurementSnapshot&, const MeasurementSnapshot&) = default;
};

using Dataset = std::vector<MeasurementSnapshot>;

}  // namespace astnn
