#include "astnn/tinynn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "astnn/errors.hpp"

namespace astnn::nn {
namespace {

Eigen::MatrixXd relu(const Eigen::MatrixXd& z) { return z.cwiseMax(0.0); }

void check_input(const MlpModel& model, Eigen::Index n) {
  if (model.weights.empty()) throw std::invalid_argument("model has no layers");
  if (model.weights.front().rows() != n) throw std::invalid_argument("input length does not match the model");
}

/// Activations of every layer for a batch; acts[0] is the input.
std::vector<Eigen::MatrixXd> forward_batch(const MlpModel& model, const Eigen::MatrixXd& inputs,
                                           const DropoutMasks* masks) {
  check_input(model, inputs.rows());
  const std::size_t layers = model.weights.size();
  std::vector<Eigen::MatrixXd> acts;
  acts.reserve(layers + 1);
  acts.push_back(inputs);
  for (std::size_t i = 0; i < layers; ++i) {
    Eigen::MatrixXd z = model.weights[i].transpose() * acts.back();
    z.colwise() += model.biases[i];
    if (i + 1 < layers) {
      z = relu(z);
      if (masks != nullptr) z = z.cwiseProduct((*masks)[i]);
    }
    acts.push_back(std::move(z));
  }
  return acts;
}

Eigen::MatrixXd to_inputs(std::span<const LabeledSample> batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const auto n = static_cast<Eigen::Index>(batch.front().features.values.size());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const auto& v = batch[j].features.values;
    if (static_cast<Eigen::Index>(v.size()) != n) throw std::invalid_argument("feature vectors differ in length");
    x.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Eigen::VectorXd>(v.data(), n);
  }
  return x;
}

Eigen::MatrixXd to_labels(std::span<const LabeledSample> batch) {
  Eigen::MatrixXd y(2, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t j = 0; j < batch.size(); ++j) {
    y(0, static_cast<Eigen::Index>(j)) = batch[j].label.x;
    y(1, static_cast<Eigen::Index>(j)) = batch[j].label.y;
  }
  return y;
}

void he_uniform(MlpModel& model, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < model.weights.size(); ++i) {
    auto& w = model.weights[i];
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows()));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = u(rng);
    model.biases[i].setZero();
  }
}

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "model files are little-endian");
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.write(buf, sizeof(T));
}

template <typename T>
T take(std::istream& in) {
  char buf[sizeof(T)];
  if (!in.read(buf, sizeof(T))) throw FormatError("model file is truncated");
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

}  // namespace

std::size_t MlpArchitecture::parameter_count() const {
  std::size_t total = 0;
  for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i)
    total += static_cast<std::size_t>(layer_sizes[i]) * static_cast<std::size_t>(layer_sizes[i + 1]) +
             static_cast<std::size_t>(layer_sizes[i + 1]);
  return total;
}

MlpArchitecture build_architecture(int n_input, double kappa, int hidden_layers) {
  if (n_input < 1) throw std::invalid_argument("input layer needs at least one unit");
  if (!(kappa > 0.0 && kappa <= 1.0)) throw std::invalid_argument("node factor kappa must lie in (0, 1]");
  if (hidden_layers < 1) throw std::invalid_argument("at least one hidden layer is required");
  // the epsilon keeps products such as 0.7 * 10 from rounding up a whole unit
  const int h1 = static_cast<int>(std::ceil(kappa * static_cast<double>(n_input) - 1e-9));
  MlpArchitecture arch;
  arch.kappa = kappa;
  arch.layer_sizes.push_back(n_input);
  for (int l = 0; l + 1 < hidden_layers; ++l) arch.layer_sizes.push_back(h1);
  arch.layer_sizes.push_back(hidden_layers == 1 ? h1 : (h1 + 1) / 2);
  arch.layer_sizes.push_back(2);
  return arch;
}

std::size_t MlpModel::parameter_count() const {
  std::size_t total = 0;
  for (std::size_t i = 0; i < weights.size(); ++i)
    total += static_cast<std::size_t>(weights[i].size() + biases[i].size());
  return total;
}

MlpModel zero_model(const MlpArchitecture& arch, double dropout) {
  if (arch.layer_sizes.size() < 2) throw std::invalid_argument("architecture needs input and output layers");
  MlpModel m;
  m.architecture = arch;
  m.dropout = dropout;
  for (std::size_t i = 0; i + 1 < arch.layer_sizes.size(); ++i) {
    m.weights.push_back(Eigen::MatrixXd::Zero(arch.layer_sizes[i], arch.layer_sizes[i + 1]));
    m.biases.push_back(Eigen::VectorXd::Zero(arch.layer_sizes[i + 1]));
  }
  return m;
}

DropoutMasks sample_masks(const MlpModel& model, Eigen::Index batch, double p, std::mt19937_64& rng) {
  DropoutMasks masks;
  const double keep_scale = p > 0.0 ? 1.0 / (1.0 - p) : 1.0;
  std::bernoulli_distribution drop(p);
  for (std::size_t i = 0; i + 1 < model.weights.size(); ++i) {
    Eigen::MatrixXd m(model.weights[i].cols(), batch);
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = (p > 0.0 && drop(rng)) ? 0.0 : keep_scale;
    masks.push_back(std::move(m));
  }
  return masks;
}

Vec2 forward(const MlpModel& model, std::span<const double> x, const DropoutMasks* mask) {
  check_input(model, static_cast<Eigen::Index>(x.size()));
  const Eigen::MatrixXd in = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  const auto acts = forward_batch(model, in, mask);
  return {acts.back()(0, 0), acts.back()(1, 0)};
}

Vec2 forward(const MlpModel& model, const features::AdoaVector& x, const DropoutMasks* mask) {
  return forward(model, std::span<const double>(x.values), mask);
}

double mse_loss(Vec2 prediction, Vec2 label) {
  const double dx = label.x - prediction.x;
  const double dy = label.y - prediction.y;
  return dx * dx + dy * dy;
}

Gradients backward(const MlpModel& model, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& labels,
                   const DropoutMasks* masks) {
  const auto acts = forward_batch(model, inputs, masks);
  const std::size_t layers = model.weights.size();
  const auto batch = static_cast<double>(inputs.cols());

  Gradients g;
  g.weights.resize(layers);
  g.biases.resize(layers);
  const Eigen::MatrixXd err = acts.back() - labels;
  g.loss = err.squaredNorm() / batch;

  // delta holds dLoss/dz of the current layer, already divided by the batch size
  Eigen::MatrixXd delta = (2.0 / batch) * err;
  for (std::size_t i = layers; i-- > 0;) {
    g.weights[i] = acts[i] * delta.transpose();
    g.biases[i] = delta.rowwise().sum();
    if (i == 0) break;
    Eigen::MatrixXd back = model.weights[i] * delta;
    // acts[i] is relu(z) (times the mask); the ReLU subgradient at 0 is 0
    const Eigen::MatrixXd& a = acts[i];
    for (Eigen::Index c = 0; c < back.cols(); ++c)
      for (Eigen::Index r = 0; r < back.rows(); ++r) {
        if (a(r, c) <= 0.0) {
          back(r, c) = 0.0;
        } else if (masks != nullptr) {
          back(r, c) *= (*masks)[i - 1](r, c);
        }
      }
    delta = std::move(back);
  }
  return g;
}

Gradients backward(const MlpModel& model, std::span<const LabeledSample> batch, const DropoutMasks* masks) {
  return backward(model, to_inputs(batch), to_labels(batch), masks);
}

AdamState AdamState::for_model(const MlpModel& model, double beta1, double beta2, double eps) {
  AdamState s;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  for (std::size_t i = 0; i < model.weights.size(); ++i) {
    s.m_w.push_back(Eigen::MatrixXd::Zero(model.weights[i].rows(), model.weights[i].cols()));
    s.v_w.push_back(Eigen::MatrixXd::Zero(model.weights[i].rows(), model.weights[i].cols()));
    s.m_b.push_back(Eigen::VectorXd::Zero(model.biases[i].size()));
    s.v_b.push_back(Eigen::VectorXd::Zero(model.biases[i].size()));
  }
  return s;
}

void adam_step(MlpModel& model, const Gradients& grads, AdamState& s, double r) {
  if (s.m_w.size() != model.weights.size()) throw std::invalid_argument("optimizer state does not match the model");
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    m = s.beta1 * m + (1.0 - s.beta1) * g;
    v = s.beta2 * v + (1.0 - s.beta2) * g.cwiseProduct(g);
    param.array() -= r * (m.array() / c1) / ((v.array() / c2).sqrt() + s.eps);
  };
  for (std::size_t i = 0; i < model.weights.size(); ++i) {
    update(model.weights[i], grads.weights[i], s.m_w[i], s.v_w[i]);
    update(model.biases[i], grads.biases[i], s.m_b[i], s.v_b[i]);
  }
}

void validate(const TrainConfig& c) {
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0, 1)");
  if (!(c.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  if (!(c.batch_fraction > 0.0 && c.batch_fraction <= 1.0))
    throw std::invalid_argument("batch fraction must lie in (0, 1]");
  if (c.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (c.patience < 0) throw std::invalid_argument("patience must be >= 0");
}

double mean_loss(const MlpModel& model, std::span<const LabeledSample> samples) {
  if (samples.empty()) return 0.0;
  const auto acts = forward_batch(model, to_inputs(samples), nullptr);
  return (acts.back() - to_labels(samples)).squaredNorm() / static_cast<double>(samples.size());
}

TrainResult train(std::span<const LabeledSample> samples, const TrainConfig& config,
                  std::span<const LabeledSample> validation) {
  validate(config);
  if (samples.empty()) throw std::invalid_argument("training needs at least one sample");
  const int n_input = static_cast<int>(samples.front().features.values.size());

  std::mt19937_64 rng(config.rng_seed);
  TrainResult res;
  res.model = zero_model(build_architecture(n_input, config.kappa, config.hidden_layers), config.dropout);
  he_uniform(res.model, rng);
  AdamState state = AdamState::for_model(res.model, config.adam_beta1, config.adam_beta2, config.adam_eps);

  const Eigen::MatrixXd all_x = to_inputs(samples);
  const Eigen::MatrixXd all_y = to_labels(samples);
  const auto n = static_cast<Eigen::Index>(samples.size());
  const auto batch = static_cast<Eigen::Index>(
      std::max(1.0, std::ceil(config.batch_fraction * static_cast<double>(n) - 1e-9)));

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  const bool early_stop = config.patience > 0 && !validation.empty();
  MlpModel best_model;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_sum = 0.0;
    for (Eigen::Index start = 0; start < n; start += batch) {
      const Eigen::Index len = std::min(batch, n - start);
      Eigen::MatrixXd bx(all_x.rows(), len);
      Eigen::MatrixXd by(2, len);
      for (Eigen::Index j = 0; j < len; ++j) {
        bx.col(j) = all_x.col(order[static_cast<std::size_t>(start + j)]);
        by.col(j) = all_y.col(order[static_cast<std::size_t>(start + j)]);
      }
      const DropoutMasks masks = sample_masks(res.model, len, config.dropout, rng);
      const Gradients g = backward(res.model, bx, by, config.dropout > 0.0 ? &masks : nullptr);
      if (!std::isfinite(g.loss))
        throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch) +
                            "; learning rate " + std::to_string(config.learning_rate) + " is likely too high");
      adam_step(res.model, g, state, config.learning_rate);
      ++res.optimizer_steps;
      epoch_sum += g.loss * static_cast<double>(len);
    }
    res.epoch_loss.push_back(epoch_sum / static_cast<double>(n));

    if (!validation.empty()) {
      const double v = mean_loss(res.model, validation);
      res.validation_loss.push_back(v);
      if (early_stop) {
        if (v < best_val) {
          best_val = v;
          best_model = res.model;
          since_best = 0;
        } else if (++since_best >= config.patience) {
          break;
        }
      }
    }
  }
  if (early_stop && !best_model.weights.empty()) res.model = std::move(best_model);
  return res;
}

Vec2 predict(const MlpModel& model, const features::AdoaVector& features) { return forward(model, features); }

std::vector<double> log_spaced(double lo_exp, double hi_exp, int per_decade) {
  std::vector<double> out;
  const int steps = static_cast<int>(std::lround((hi_exp - lo_exp) * per_decade));
  for (int k = 0; k <= steps; ++k)
    out.push_back(std::pow(10.0, lo_exp + static_cast<double>(k) / static_cast<double>(per_decade)));
  return out;
}

HyperparameterGrid default_grid() {
  return {{0.6, 0.7, 0.8, 0.9, 1.0}, {0.0, 0.10, 0.15, 0.20}, log_spaced(-4.0, -2.0, 10), {0.5, 0.75}};
}

GridSearchResult grid_search_hyperparams(std::span<const LabeledSample> train_set,
                                         std::span<const LabeledSample> validation_set,
                                         const HyperparameterGrid& grid, const TrainConfig& base) {
  if (grid.size() == 0) throw std::invalid_argument("hyperparameter grid is empty");
  if (validation_set.empty()) throw std::invalid_argument("grid search needs a validation set");
  for (const auto& t : train_set)
    for (const auto& v : validation_set)
      if (t.snapshot_id == v.snapshot_id) throw std::invalid_argument("training and validation sets overlap");

  GridSearchResult out;
  std::uint64_t index = 0;
  for (double kappa : grid.kappas)
    for (double p : grid.dropouts)
      for (double r : grid.learning_rates)
        for (double b : grid.batch_fractions) {
          TrainConfig cfg = base;
          cfg.kappa = kappa;
          cfg.dropout = p;
          cfg.learning_rate = r;
          cfg.batch_fraction = b;
          std::seed_seq seq{static_cast<std::uint32_t>(base.rng_seed), static_cast<std::uint32_t>(base.rng_seed >> 32),
                            static_cast<std::uint32_t>(index)};
          std::mt19937_64 derive(seq);
          cfg.rng_seed = derive();
          ++index;

          GridScore score{cfg, std::numeric_limits<double>::infinity(), 0};
          try {
            const TrainResult tr = train(train_set, cfg);
            score.parameter_count = tr.model.parameter_count();
            score.validation_loss = mean_loss(tr.model, validation_set);
            if (!std::isfinite(score.validation_loss)) score.validation_loss = std::numeric_limits<double>::infinity();
          } catch (const TrainingError&) {
            score.parameter_count =
                build_architecture(static_cast<int>(train_set.front().features.values.size()), kappa, cfg.hidden_layers)
                    .parameter_count();
          }
          out.scores.push_back(score);
        }

  const auto best = std::min_element(out.scores.begin(), out.scores.end(), [](const GridScore& a, const GridScore& b) {
    if (a.validation_loss != b.validation_loss) return a.validation_loss < b.validation_loss;
    if (a.parameter_count != b.parameter_count) return a.parameter_count < b.parameter_count;
    return a.config.learning_rate < b.config.learning_rate;
  });
  out.best = best->config;
  return out;
}

void save_model(const MlpModel& model, std::ostream& out) {
  put<std::uint8_t>(out, kModelFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.architecture.layer_sizes.size()));
  for (int s : model.architecture.layer_sizes) put<std::uint32_t>(out, static_cast<std::uint32_t>(s));
  put<double>(out, model.architecture.kappa);
  put<double>(out, model.dropout);
  for (std::size_t i = 0; i < model.weights.size(); ++i) {
    const auto& w = model.weights[i];
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) put<double>(out, w(r, c));
    for (Eigen::Index k = 0; k < model.biases[i].size(); ++k) put<double>(out, model.biases[i](k));
  }
  if (!out) throw std::runtime_error("failed to write model");
}

void save_model(const MlpModel& model, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  save_model(model, f);
}

MlpModel load_model(std::istream& in) {
  const auto version = take<std::uint8_t>(in);
  if (version != kModelFormatVersion)
    throw FormatError("unsupported model format version " + std::to_string(version));
  const auto layers = take<std::uint32_t>(in);
  if (layers < 2 || layers > 64) throw FormatError("implausible layer count " + std::to_string(layers));
  MlpArchitecture arch;
  for (std::uint32_t i = 0; i < layers; ++i) {
    const auto s = take<std::uint32_t>(in);
    if (s == 0 || s > 1'000'000) throw FormatError("implausible layer width");
    arch.layer_sizes.push_back(static_cast<int>(s));
  }
  arch.kappa = take<double>(in);
  MlpModel model = zero_model(arch, take<double>(in));
  for (std::size_t i = 0; i < model.weights.size(); ++i) {
    auto& w = model.weights[i];
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = take<double>(in);
    for (Eigen::Index k = 0; k < model.biases[i].size(); ++k) model.biases[i](k) = take<double>(in);
  }
  return model;
}

MlpModel load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  return load_model(f);
}

}  // namespace astnn::nn
