#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "astnn/adoa.hpp"
#include "astnn/geometry.hpp"

namespace astnn::nn {

/// Layer widths [N_i, N_h1, ..., 2]. The default three-hidden-layer shape is
/// (N_i, ceil(k N_i), ceil(k N_i), ceil(ceil(k N_i) / 2), 2).
struct MlpArchitecture {
  std::vector<int> layer_sizes;
  double kappa = 1.0;

  std::size_t parameter_count() const;
  friend bool operator==(const MlpArchitecture&, const MlpArchitecture&) = default;
};

/// Throws std::invalid_argument unless n_input >= 1, 0 < kappa <= 1 and
/// hidden_layers >= 1.
MlpArchitecture build_architecture(int n_input, double kappa, int hidden_layers = 3);

/// Fully connected network: ReLU hidden layers, linear output layer.
/// weights[i] is fan_in x fan_out, so layer i computes W_i^T y + b_i.
struct MlpModel {
  MlpArchitecture architecture;
  double dropout = 0.0;
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  std::size_t parameter_count() const;
  std::size_t layer_count() const { return weights.size(); }
};

/// Zero-initialized model of the given shape.
MlpModel zero_model(const MlpArchitecture& arch, double dropout = 0.0);

/// Inverted-dropout masks, one (units x batch) matrix per hidden layer with
/// entries 0 or 1/(1-p).
using DropoutMasks = std::vector<Eigen::MatrixXd>;

DropoutMasks sample_masks(const MlpModel& model, Eigen::Index batch, double p, std::mt19937_64& rng);

/// Forward pass of one input. `mask`, when given, holds single-column masks.
/// Throws std::invalid_argument on a length mismatch.
Vec2 forward(const MlpModel& model, std::span<const double> x, const DropoutMasks* mask = nullptr);
Vec2 forward(const MlpModel& model, const features::AdoaVector& x, const DropoutMasks* mask = nullptr);

/// Squared Euclidean distance.
double mse_loss(Vec2 prediction, Vec2 label);

enum class LabelSource { Bootstrap, GroundTruth };

struct LabeledSample {
  features::AdoaVector features;
  Vec2 label;
  LabelSource label_source = LabelSource::Bootstrap;
  int snapshot_id = 0;
};

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  double loss = 0.0;
};

/// Mean mse_loss gradient over the batch. Columns of `inputs` are samples,
/// `labels` is 2 x batch. `masks` must match the batch when given.
Gradients backward(const MlpModel& model, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& labels,
                   const DropoutMasks* masks = nullptr);
Gradients backward(const MlpModel& model, std::span<const LabeledSample> batch,
                   const DropoutMasks* masks = nullptr);

struct AdamState {
  std::vector<Eigen::MatrixXd> m_w, v_w;
  std::vector<Eigen::VectorXd> m_b, v_b;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_model(const MlpModel& model, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
};

/// One bias-corrected Adam update with learning rate r.
void adam_step(MlpModel& model, const Gradients& grads, AdamState& state, double r);

struct TrainConfig {
  double kappa = 0.9;
  double dropout = 0.1;
  double learning_rate = 0.003;
  double batch_fraction = 0.5;
  int epochs = 300;
  std::uint64_t rng_seed = 1;
  int hidden_layers = 3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Epochs without validation improvement before stopping; 0 disables.
  int patience = 0;
};

/// Throws std::invalid_argument when a field is out of range.
void validate(const TrainConfig& config);

struct TrainResult {
  MlpModel model;
  std::vector<double> epoch_loss;
  std::vector<double> validation_loss;
  long optimizer_steps = 0;
};

/// Mini-batch Adam from a He-uniform start. Deterministic given the seed.
/// With a validation set and patience > 0, stops on a plateau and returns the
/// best-validation weights. Throws TrainingError on a non-finite loss.
TrainResult train(std::span<const LabeledSample> samples, const TrainConfig& config,
                  std::span<const LabeledSample> validation = {});

/// Prediction with dropout disabled.
Vec2 predict(const MlpModel& model, const features::AdoaVector& features);

/// Mean mse_loss of the model over samples.
double mean_loss(const MlpModel& model, std::span<const LabeledSample> samples);

struct HyperparameterGrid {
  std::vector<double> kappas;
  std::vector<double> dropouts;
  std::vector<double> learning_rates;
  std::vector<double> batch_fractions;

  std::size_t size() const {
    return kappas.size() * dropouts.size() * learning_rates.size() * batch_fractions.size();
  }
};

/// kappa {0.6..1}, dropout {0, .10, .15, .20}, 21 learning rates 1e-4..1e-2 at
/// ten per decade, batch fraction {0.5, 0.75}.
HyperparameterGrid default_grid();

/// Learning rates 10^(lo + k/per_decade) covering [10^lo, 10^hi].
std::vector<double> log_spaced(double lo_exp, double hi_exp, int per_decade);

struct GridScore {
  TrainConfig config;
  double validation_loss = 0.0;
  std::size_t parameter_count = 0;
};

struct GridSearchResult {
  TrainConfig best;
  std::vector<GridScore> scores;
};

/// Trains one model per grid point on `train_set` and scores it on
/// `validation_set`. Config k uses seed derived from (base.rng_seed, k). Ties
/// go to the smaller model, then the smaller learning rate. A config whose
/// training aborts scores +inf.
GridSearchResult grid_search_hyperparams(std::span<const LabeledSample> train_set,
                                         std::span<const LabeledSample> validation_set,
                                         const HyperparameterGrid& grid, const TrainConfig& base);

inline constexpr std::uint8_t kModelFormatVersion = 1;

void save_model(const MlpModel& model, std::ostream& out);
void save_model(const MlpModel& model, const std::string& path);
/// Throws FormatError on a bad version byte or truncated data.
MlpModel load_model(std::istream& in);
MlpModel load_model(const std::string& path);

}  // namespace astnn::nn
