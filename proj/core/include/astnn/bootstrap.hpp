#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "astnn/adoa.hpp"
#include "astnn/channel_sim.hpp"
#include "astnn/geometry.hpp"

namespace astnn::bootstrap {

struct Anchor {
  int id = 0;
  Vec2 position;
  bool is_physical = false;

  friend bool operator==(const Anchor&, const Anchor&) = default;
};

/// Estimated physical and virtual anchor positions.
class AnchorMap {
 public:
  AnchorMap() = default;
  /// Throws std::invalid_argument on duplicate ids.
  explicit AnchorMap(std::vector<Anchor> anchors);

  const std::vector<Anchor>& anchors() const { return anchors_; }
  std::size_t size() const { return anchors_.size(); }
  const Anchor& operator[](std::size_t i) const { return anchors_[i]; }
  Anchor& operator[](std::size_t i) { return anchors_[i]; }
  /// Index of `id`, or -1.
  int index_of(int id) const;

  friend bool operator==(const AnchorMap&, const AnchorMap&) = default;

 private:
  std::vector<Anchor> anchors_;
};

struct GaugeAnchor {
  int id = 0;
  Vec2 position;
};

/// Room outline and transmitter layout, when the deployment is known. Used to
/// seed virtual anchors at mirror images and to predict which anchors are
/// visible from a receiver hypothesis.
struct RoomModel {
  sim::RoomPolygon room;
  std::vector<sim::Transmitter> transmitters;
};

struct BootstrapConfig {
  int grid_points_per_axis = 256;
  int max_outer_iterations = 20;
  /// Meters; stops refinement steps and the outer loop.
  double convergence_tol = 0.01;
  int max_refine_iterations = 50;
  /// Gauss-Newton stops once a step is shorter than this (meters).
  double refine_step_tol = 1e-9;
  std::vector<GaugeAnchor> gauge_anchors;
  /// Extra non-gauge anchors with initial positions, for runs without a room
  /// model.
  std::vector<Anchor> initial_anchors;
  /// Largest wrapped ADoA error (rad) accepted when pairing a feature with an
  /// anchor. Unpaired features and unpaired visible anchors cost gate^2 each.
  double association_gate_rad = 0.35;
  /// A fix is ambiguous when more than ambiguity_fraction of the valid lattice
  /// lies within ambiguity_tol (rad^2) of the minimum.
  double ambiguity_tol = 1e-4;
  double ambiguity_fraction = 0.01;
  /// Lattice minima refined per snapshot on the first pass; the one with the
  /// lowest objective wins.
  int start_candidates = 4;
  /// Minimum distance between two refined lattice minima (meters).
  double candidate_separation = 1.0;
  /// Overrides the search rectangle.
  std::optional<BoundingBox> bbox;
};

/// Per-feature anchor pairing for one observation.
struct Association {
  /// Index into the AnchorMap of the reference path's anchor.
  int reference = -1;
  /// Anchor index per valid feature; -1 when the feature stayed unpaired.
  std::vector<int> feature_anchor;
  /// Visible anchors predicted at the hypothesis that no feature claimed.
  int unpaired_anchors = 0;

  int paired_count() const;
};

struct BootstrapEstimate {
  int snapshot_id = 0;
  Vec2 position;
  /// Mean squared wrapped ADoA error over paired features (rad^2).
  double residual = 0.0;
  bool fixed = true;
  bool ambiguous = false;
  bool refine_diverged = false;
};

/// Which anchors a hypothesis sees and which of them is the reference (least
/// delay, i.e. nearest).
struct Visibility {
  std::vector<int> anchors;
  int reference = -1;
};

/// Visible anchors at `rx`. With a room model this traces first-order paths
/// and keeps anchors with keys present in `anchors`; otherwise every anchor is
/// visible. The reference is the nearest visible anchor. Empty when rx lies
/// outside the room or within 1e-6 m of an anchor.
Visibility visible_anchors(const AnchorMap& anchors, Vec2 rx, const RoomModel* room);

/// Sum of squared wrapped differences between observed and predicted angle
/// differences over paired features. Throws SingularGeometry when rx lies
/// within 1e-6 m of a used anchor, std::invalid_argument on a malformed
/// association.
double adoa_residual(Vec2 rx, const AnchorMap& anchors, const features::AdoaVector& observed,
                     const Association& association);

/// Arc of absolute reference bearings [start, start + width) (rad, mod 2 pi)
/// consistent with a globally ordered observation: the first feature is the
/// path whose absolute azimuth follows the zero direction.
struct HeadingArc {
  double start = 0.0;
  double width = 0.0;
};

/// Empty for sweep-ordered vectors and for fewer than two features.
std::optional<HeadingArc> heading_arc(const features::AdoaVector& observed);

/// Signed angular distance from `bearing_rad` to the arc, 0 inside. Negative
/// when the nearer edge is the start.
double heading_offset(double bearing_rad, const HeadingArc& arc);

/// Pairs features with anchors visible from `rx_hypothesis`: predicted sweep
/// angles relative to the visible reference, greedy nearest pairs first, each
/// anchor used at most once, pairs above the gate left open.
/// Throws AssociationError when fewer anchors than features are available.
Association associate_anchors(const features::AdoaVector& observed, const AnchorMap& anchors,
                              Vec2 rx_hypothesis, const RoomModel* room = nullptr,
                              double gate_rad = BootstrapConfig{}.association_gate_rad);

/// Predicted sweep angles of every lattice point, built once per anchor map.
class LatticeTable {
 public:
  LatticeTable(const AnchorMap& anchors, const BoundingBox& bbox, int points_per_axis, const RoomModel* room);

  int points_per_axis() const { return n_; }
  const BoundingBox& bbox() const { return bbox_; }
  std::size_t size() const { return valid_.size(); }
  Vec2 point(std::size_t i) const;
  bool valid(std::size_t i) const { return valid_[i] != 0; }
  std::span<const double> sweeps(std::size_t i) const {
    return {sweeps_.data() + offsets_[i], sweeps_.data() + offsets_[i + 1]};
  }
  /// Bearing of the reference anchor from lattice point i (rad).
  double reference_bearing(std::size_t i) const { return ref_bearing_[i]; }
  bool penalize_unpaired() const { return penalize_unpaired_; }

 private:
  int n_ = 0;
  BoundingBox bbox_;
  std::vector<std::uint32_t> offsets_;
  std::vector<double> sweeps_;
  std::vector<char> valid_;
  std::vector<double> ref_bearing_;
  bool penalize_unpaired_ = false;
};

/// Nearest-anchor matching cost used on the lattice: each observed sweep angle
/// pays min(gate^2, squared distance to the closest predicted one); with
/// `penalize_unpaired`, predicted anchors nobody picked pay gate^2.
double lattice_cost(std::span<const double> observed_sweeps, std::span<const double> predicted_sweeps,
                    double gate_rad, bool penalize_unpaired);

struct GridResult {
  Vec2 position;
  double cost = 0.0;
  std::size_t lattice_index = 0;
  bool ambiguous = false;
};

/// Exhaustive lattice argmin of lattice_cost, plus the squared heading offset
/// for globally ordered observations (first index wins ties).
/// Throws NoFix for an empty observation or when every lattice point is
/// singular.
GridResult grid_search_rx(const LatticeTable& table, const features::AdoaVector& observed,
                          const BootstrapConfig& config);

/// Up to `count` local lattice minima, cheapest first, each at least
/// `separation` meters from every cheaper one. The first entry is the
/// grid_search_rx result. Throws NoFix like grid_search_rx.
std::vector<GridResult> grid_candidates(const LatticeTable& table, const features::AdoaVector& observed,
                                        const BootstrapConfig& config, int count, double separation);

/// Convenience overload that builds the lattice for a single search.
GridResult grid_search_rx(const AnchorMap& anchors, const features::AdoaVector& observed, const BoundingBox& bbox,
                          const BootstrapConfig& config, const RoomModel* room = nullptr);

struct RefineResult {
  Vec2 position;
  double residual = 0.0;
  int iterations = 0;
  bool diverged = false;
};

/// Damped Gauss-Newton over the receiver position with a fixed association.
/// Globally ordered observations add the heading offset as one more residual.
RefineResult refine_rx(Vec2 rx0, const AnchorMap& anchors, const features::AdoaVector& observed,
                       const Association& association, const BootstrapConfig& config);

/// One snapshot's view for the anchor-side problem.
struct AnchorObservation {
  Vec2 rx;
  const features::AdoaVector* observed = nullptr;
  const Association* association = nullptr;
};

struct AnchorRefineResult {
  AnchorMap anchors;
  /// Anchor ids left untouched because fewer than two snapshots observe them.
  std::vector<int> under_observed;
};

/// Per-anchor Gauss-Newton on the stacked residuals of the snapshots that
/// observe it. Gauge anchors keep their positions bit-exactly.
/// Throws std::invalid_argument for fewer than two observations.
AnchorRefineResult refine_anchors(std::span<const AnchorObservation> observations, const AnchorMap& anchors0,
                                  const BootstrapConfig& config);

struct SnapshotFeatures {
  int snapshot_id = 0;
  features::AdoaVector features;
};

struct BootstrapResult {
  std::vector<BootstrapEstimate> estimates;
  AnchorMap anchors;
  int outer_iterations = 0;
  /// Stacked objective after initialization and after each outer iteration.
  std::vector<double> objective_history;
  /// Fewer than two snapshots: anchors cannot be refined, fixes are flagged.
  bool under_determined = false;
  std::vector<int> under_observed_anchors;
};

/// Initial anchor map: gauge anchors plus mirror images of each gauge anchor
/// (room model given) or the configured initial anchors.
AnchorMap initial_anchor_map(const BootstrapConfig& config, const RoomModel* room);

/// Search rectangle: the override, the room bounds, or the gauge hull inflated
/// by 50%.
BoundingBox search_bbox(const BootstrapConfig& config, const RoomModel* room);

/// Joint receiver/anchor estimation. Throws NoFix when no snapshot gets a fix.
BootstrapResult jade_localize(std::span<const SnapshotFeatures> dataset, const BootstrapConfig& config,
                              const RoomModel* room = nullptr);

struct TrimResult {
  std::vector<BootstrapEstimate> kept;
  std::vector<BootstrapEstimate> dropped;
  /// Covariance was singular; Euclidean distance was used instead.
  bool euclidean_fallback = false;
};

/// Drops the ceil(fraction * N) estimates farthest from the mean in
/// Mahalanobis distance under a fitted Gaussian. Ties go by snapshot id, the
/// larger id dropped first. Throws std::invalid_argument unless 0 <= fraction < 1.
TrimResult trim_outliers(std::span<const BootstrapEstimate> estimates, double fraction = 0.05);

}  // namespace astnn::bootstrap
