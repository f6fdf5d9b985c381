#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "astnn/adoa.hpp"
#include "astnn/bootstrap.hpp"
#include "astnn/channel_sim.hpp"
#include "astnn/evaluation.hpp"
#include "astnn/measurement.hpp"
#include "astnn/mpc_cluster.hpp"
#include "astnn/tinynn.hpp"

namespace astnn::pipeline {

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded split without replacement: ceil(f * n) test indices, the rest train.
/// Both lists come back sorted. Throws std::invalid_argument unless 0 < f < 1.
SplitIndices split_indices(std::size_t n, double test_fraction, std::uint64_t seed);

template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_dataset(std::span<const T> samples, double test_fraction,
                                                        std::uint64_t seed) {
  const SplitIndices s = split_indices(samples.size(), test_fraction, seed);
  std::pair<std::vector<T>, std::vector<T>> out;
  for (std::size_t i : s.train) out.first.push_back(samples[i]);
  for (std::size_t i : s.test) out.second.push_back(samples[i]);
  return out;
}

struct ClusteringOptions {
  /// Without clustering every MPC is its own dominant path.
  bool enabled = true;
  cluster::ClusterParams params;
};

struct TxCentroid {
  int tx_id = 0;
  cluster::Centroid centroid;
};

/// Dominant paths of a snapshot: recursive DBSCAN per transmitter, results
/// grouped in transmitter order.
std::vector<TxCentroid> snapshot_centroids(const MeasurementSnapshot& snapshot, const ClusteringOptions& options);

struct FeatureSet {
  std::vector<bootstrap::SnapshotFeatures> rows;
  /// Snapshots with fewer than two dominant paths.
  std::vector<int> skipped;
  features::OverflowCounter overflow;
};

using CentroidMap = std::map<int, std::vector<TxCentroid>>;

CentroidMap cluster_dataset(const Dataset& data, const ClusteringOptions& options);
/// Pools every transmitter's centroids per snapshot into one ADoA vector.
FeatureSet features_from_centroids(const CentroidMap& centroids, int input_size,
                                   features::AdoaOrder order = features::AdoaOrder::Sweep);
FeatureSet build_features(const Dataset& data, const ClusteringOptions& options, int input_size,
                          features::AdoaOrder order = features::AdoaOrder::Sweep);

struct PipelineConfig {
  enum class Source { Simulate, File };
  Source source = Source::Simulate;
  std::string measurements_path;

  /// Simulation settings; room and transmitters double as the bootstrap's room
  /// model when use_room_model is set.
  sim::SimConfig simulation;
  bool have_room = false;

  ClusteringOptions clustering;
  int input_size = features::kDefaultInputSize;
  features::AdoaOrder feature_order = features::AdoaOrder::Sweep;

  bootstrap::BootstrapConfig bootstrap;
  bool use_room_model = true;

  double trim_fraction = 0.05;
  double test_fraction = 1.0 / 3.0;
  std::uint64_t split_seed = 7;

  nn::TrainConfig train;
  bool grid_search = false;
  nn::HyperparameterGrid grid = nn::default_grid();
  double validation_fraction = 0.2;

  double heatmap_cell = 0.5;
};

/// Parses the JSON config format documented in the README. Missing keys keep
/// their defaults; unknown keys throw FormatError.
PipelineConfig parse_config(std::string_view json_text);
PipelineConfig load_config(const std::string& path);

/// Every effective setting as compact JSON with sorted keys. Two configs that
/// behave the same serialize the same.
std::string canonical_json(const PipelineConfig& config);

/// Replaces the simulation, split and training seeds with `seed`.
void override_seed(PipelineConfig& config, std::uint64_t seed);

/// Gauge anchors and room model the config implies, when available.
std::optional<bootstrap::RoomModel> room_model(const PipelineConfig& config);
bootstrap::BootstrapConfig effective_bootstrap(const PipelineConfig& config);

// Artifact files.
void write_centroids_csv(const CentroidMap& centroids, std::ostream& out);
void write_features_csv(std::span<const bootstrap::SnapshotFeatures> rows, std::ostream& out);
std::vector<bootstrap::SnapshotFeatures> read_features_csv(std::istream& in);
void write_estimates_csv(std::span<const bootstrap::BootstrapEstimate> est, std::ostream& out);
std::vector<bootstrap::BootstrapEstimate> read_estimates_csv(std::istream& in);
void write_anchors_csv(const bootstrap::AnchorMap& anchors, std::ostream& out);
/// Rows `id,x,y[,is_physical]`; returns gauge anchors (physical rows) and
/// initial guesses for the rest.
void read_gauge_file(std::istream& in, std::vector<bootstrap::GaugeAnchor>& gauges,
                     std::vector<bootstrap::Anchor>& initial);
void write_predictions_csv(std::span<const eval::Prediction> preds, std::ostream& out);
std::vector<eval::Prediction> read_predictions_csv(std::istream& in);

std::map<int, eval::Truth> truths_of(const Dataset& data);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);
std::string file_digest(const std::string& path);

struct PipelineResult {
  eval::EvalReport bootstrap;
  eval::EvalReport as_tnn;
  eval::EvalReport tnn;
  /// Bootstrap estimates of every kept (post-trim) snapshot.
  eval::EvalReport bootstrap_all;
  std::size_t snapshots = 0;
  std::size_t featured = 0;
  std::size_t fixed = 0;
  std::size_t kept = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  nn::TrainConfig train_config;
  std::map<std::string, std::string> digests;
  std::map<std::string, double> stage_seconds;
  std::string manifest_path;
};

/// simulate/load -> cluster -> features -> bootstrap -> trim -> split -> train
/// (bootstrap and truth labels) -> evaluate, persisting every stage's output
/// under out_dir. Throws PipelineError tagged with the failing stage.
PipelineResult run_full_pipeline(const PipelineConfig& config, const std::string& out_dir);

}  // namespace astnn::pipeline
