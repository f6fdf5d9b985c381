#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "astnn/measurement.hpp"

namespace astnn::io {

inline constexpr std::string_view kMeasurementHeader =
    "snapshot_id,area_id,tx_id,truth_x,truth_y,truth_heading,path_loss_db,delay_ns,aoa_az_deg,aoa_el_deg,"
    "aod_az_deg,aod_el_deg";

struct RejectedRow {
  long line = 0;
  std::string reason;
};

struct LoadResult {
  Dataset snapshots;
  std::vector<RejectedRow> rejects;
  std::vector<std::string> warnings;
};

/// Parses the one-row-per-MPC CSV. Rows that violate an invariant land in
/// `rejects`; a missing or wrong header throws FormatError with its line.
LoadResult load_measurements(std::istream& in);
LoadResult load_measurements(const std::string& path);

/// Writes the CSV with shortest round-trip number formatting, so a
/// save/load cycle reproduces every value bit for bit.
void save_measurements(const Dataset& data, std::ostream& out);
void save_measurements(const Dataset& data, const std::string& path);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// One measurement location of a single transmitter's run.
struct RunLocation {
  Vec2 position;
  std::vector<MpcRecord> records;
};

struct MergeResult {
  Dataset snapshots;
  /// Transmitters whose run ran out before the reference run did.
  std::vector<int> exhausted;
  /// Per snapshot, the index consumed from each transmitter's run.
  std::vector<std::map<int, std::size_t>> members;
};

/// Coalesces per-transmitter runs of one area into co-located snapshots. The
/// lowest transmitter id is the reference; each of its locations greedily takes
/// the nearest unused location of every other run, and the snapshot truth is
/// the centroid of the picked locations. Throws std::invalid_argument when no
/// run is given.
MergeResult range_search_merge(const std::map<int, std::vector<RunLocation>>& per_tx_runs, int area_id = 0,
                               int first_snapshot_id = 0);

}  // namespace astnn::io
