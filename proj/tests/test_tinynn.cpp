#include <doctest.h>

#include <random>
#include <sstream>

#include "astnn/errors.hpp"
#include "astnn/tinynn.hpp"
#include "support/oracles.hpp"

using namespace astnn;
using namespace astnn::nn;

namespace {

MlpModel random_model(std::vector<int> sizes, std::mt19937_64& rng, double scale = 1.0) {
  MlpArchitecture arch{std::move(sizes), 1.0};
  MlpModel m = zero_model(arch);
  std::normal_distribution<double> n(0, scale);
  for (auto& w : m.weights) w = w.unaryExpr([&](double) { return n(rng); });
  for (auto& b : m.biases) b = b.unaryExpr([&](double) { return n(rng); });
  return m;
}

LabeledSample sample(std::vector<double> x, Vec2 y) {
  LabeledSample s;
  s.features.values = std::move(x);
  s.features.valid_count = static_cast<int>(s.features.values.size());
  s.label = y;
  return s;
}

// y = A x + c with x in [0.2, 1]^16; only four inputs matter. Narrower
// inputs make the 2-unit-wide tail of a kappa 1 net prone to dead units.
std::vector<LabeledSample> linear_task(std::uint64_t seed, int count = 200, int id0 = 0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.2, 1.0);
  std::vector<LabeledSample> out;
  for (int i = 0; i < count; ++i) {
    std::vector<double> x(16);
    for (double& v : x) v = u(rng);
    out.push_back(sample(x, {1.5 * x[0] - 0.5 * x[1] + 2.0 * x[3] + 0.3, 0.8 * x[1] + x[2] - 1.2 * x[3] + 4.0}));
    out.back().snapshot_id = id0 + i;
  }
  return out;
}

double rmse(const MlpModel& m, const std::vector<LabeledSample>& s) { return std::sqrt(mean_loss(m, s) / 2.0); }

std::vector<double> all_params(const MlpModel& m) {
  std::vector<double> p;
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    p.insert(p.end(), m.weights[l].data(), m.weights[l].data() + m.weights[l].size());
    p.insert(p.end(), m.biases[l].data(), m.biases[l].data() + m.biases[l].size());
  }
  return p;
}

}  // namespace

TEST_SUITE("tinynn") {

TEST_CASE("architecture and parameter count") {
  const MlpArchitecture a = build_architecture(40, 0.9);
  CHECK(a.layer_sizes == std::vector<int>{40, 36, 36, 18, 2});
  CHECK(a.parameter_count() == 40 * 36 + 36 + 36 * 36 + 36 + 36 * 18 + 18 + 18 * 2 + 2);
  CHECK(a.parameter_count() == 3512);
  CHECK(zero_model(a).parameter_count() == 3512);
  CHECK(build_architecture(1, 1.0).layer_sizes == std::vector<int>{1, 1, 1, 1, 2});
  CHECK(build_architecture(10, 0.6, 1).layer_sizes == std::vector<int>{10, 6, 2});
  CHECK(build_architecture(10, 0.6, 4).layer_sizes.size() == 6);
  CHECK_THROWS(build_architecture(0, 0.9));
  CHECK_THROWS(build_architecture(4, 0.0));
  CHECK_THROWS(build_architecture(4, 1.1));
  CHECK_THROWS(build_architecture(4, 0.5, 0));
}

TEST_CASE("forward") {
  const MlpModel zero = zero_model(build_architecture(40, 0.9));
  const std::vector<double> x(40, 0.7);
  CHECK(forward(zero, x) == Vec2{0, 0});

  // 1-1-1-1-2 by hand: relu(2*3-1)=5, relu(-1*5+7)=2, relu(0.5*2)=1, out (4*1+1, -2*1+0.5)
  MlpModel tiny = zero_model(build_architecture(1, 1.0));
  tiny.weights[0](0, 0) = 2;
  tiny.biases[0](0) = -1;
  tiny.weights[1](0, 0) = -1;
  tiny.biases[1](0) = 7;
  tiny.weights[2](0, 0) = 0.5;
  tiny.weights[3](0, 0) = 4;
  tiny.weights[3](0, 1) = -2;
  tiny.biases[3] << 1, 0.5;
  const Vec2 y = forward(tiny, std::vector<double>{3});
  CHECK(std::abs(y.x - 5) < 1e-12);
  CHECK(std::abs(y.y + 1.5) < 1e-12);
  // a negative pre-activation is cut
  CHECK(forward(tiny, std::vector<double>{-10}) == Vec2{1 + 4 * 0.5 * 7, 0.5 - 2 * 0.5 * 7});

  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 1);
  for (int t = 0; t < 50; ++t) {
    const MlpModel m = random_model({6, 5, 5, 3, 2}, rng);
    std::vector<double> in(6);
    for (double& v : in) v = n(rng);
    const Vec2 got = forward(m, in);
    const auto want = oracle::forward(m, in);
    CHECK(got.x == doctest::Approx(want[0]).epsilon(1e-12));
    CHECK(got.y == doctest::Approx(want[1]).epsilon(1e-12));
    features::AdoaVector v;
    v.values = in;
    CHECK(predict(m, v) == got);
  }
  CHECK_THROWS(forward(zero, std::vector<double>(39, 0.0)));
}

TEST_CASE("mse_loss") {
  CHECK(mse_loss({1, 2}, {1, 2}) == 0);
  CHECK(mse_loss({0, 0}, {3, 4}) == 25);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-50, 50);
  for (int t = 0; t < 1000; ++t) {
    const Vec2 a{u(rng), u(rng)}, b{u(rng), u(rng)};
    CHECK(mse_loss(a, b) == doctest::Approx((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y)).epsilon(1e-14));
  }
}

TEST_CASE("backward agrees with central finite differences") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 1);
  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    MlpModel m = random_model({4, 3, 3, 2, 2}, rng);
    std::vector<std::vector<double>> xs;
    std::vector<std::pair<double, double>> ys;
    Eigen::MatrixXd X(4, 6), Y(2, 6);
    for (int k = 0; k < 6; ++k) {
      std::vector<double> x{n(rng), n(rng), n(rng), n(rng)};
      for (int i = 0; i < 4; ++i) X(i, k) = x[static_cast<std::size_t>(i)];
      Y(0, k) = n(rng);
      Y(1, k) = n(rng);
      xs.push_back(x);
      ys.emplace_back(Y(0, k), Y(1, k));
    }
    const Gradients g = backward(m, X, Y);
    CHECK(g.loss == doctest::Approx(oracle::batch_loss(m, xs, ys)).epsilon(1e-12));
    const double h = 1e-5;
    auto check = [&](double& param, double analytic) {
      const double keep = param;
      param = keep + h;
      const double up = oracle::batch_loss(m, xs, ys);
      param = keep - h;
      const double down = oracle::batch_loss(m, xs, ys);
      param = keep;
      const double fd = (up - down) / (2 * h);
      const double rel = std::abs(fd - analytic) / std::max(1e-3, std::max(std::abs(fd), std::abs(analytic)));
      worst = std::max(worst, rel);
    };
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
      for (Eigen::Index i = 0; i < m.weights[l].size(); ++i) check(m.weights[l].data()[i], g.weights[l].data()[i]);
      for (Eigen::Index i = 0; i < m.biases[l].size(); ++i) check(m.biases[l].data()[i], g.biases[l].data()[i]);
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("backward: zero error and the linear least-squares gradient") {
  std::mt19937_64 rng(6);
  const MlpModel m = random_model({3, 4, 4, 2, 2}, rng);
  Eigen::MatrixXd X = Eigen::MatrixXd::Random(3, 5);
  Eigen::MatrixXd Y(2, 5);
  for (int k = 0; k < 5; ++k) {
    const Vec2 p = forward(m, std::vector<double>{X(0, k), X(1, k), X(2, k)});
    Y(0, k) = p.x;
    Y(1, k) = p.y;
  }
  const Gradients g = backward(m, X, Y);
  CHECK(g.loss == doctest::Approx(0).epsilon(1e-24));
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    CHECK(g.weights[l].cwiseAbs().maxCoeff() < 1e-12);
    CHECK(g.biases[l].cwiseAbs().maxCoeff() < 1e-12);
  }

  // single hidden layer of identity-like units: positive inputs, positive
  // weights, so every ReLU stays on and the net is y = W2^T (W1^T x + b1) + b2
  MlpModel lin = zero_model(build_architecture(3, 1.0, 1));
  std::uniform_real_distribution<double> pos(0.1, 1.0);
  lin.weights[0] = lin.weights[0].unaryExpr([&](double) { return pos(rng); });
  lin.biases[0] = lin.biases[0].unaryExpr([&](double) { return pos(rng); });
  lin.weights[1] = lin.weights[1].unaryExpr([&](double) { return pos(rng) - 0.5; });
  Eigen::MatrixXd P = Eigen::MatrixXd::Random(3, 7).cwiseAbs();
  Eigen::MatrixXd T = Eigen::MatrixXd::Random(2, 7);
  const Gradients gl = backward(lin, P, T);
  // closed form: H = W1^T P + b1, E = W2^T H + b2 - T, dL/dW2 = (2/N) H E^T
  const Eigen::MatrixXd H = (lin.weights[0].transpose() * P).colwise() + lin.biases[0];
  const Eigen::MatrixXd E = (lin.weights[1].transpose() * H).colwise() + lin.biases[1] - T;
  const double N = 7;
  CHECK((gl.weights[1] - (2 / N) * H * E.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((gl.biases[1] - (2 / N) * E.rowwise().sum()).cwiseAbs().maxCoeff() < 1e-12);
  const Eigen::MatrixXd D = lin.weights[1] * E;
  CHECK((gl.weights[0] - (2 / N) * P * D.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((gl.biases[0] - (2 / N) * D.rowwise().sum()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("adam_step") {
  std::mt19937_64 rng(7);
  MlpModel m = random_model({4, 3, 3, 2, 2}, rng);
  const MlpModel before = m;
  AdamState st = AdamState::for_model(m);
  Gradients zero;
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    zero.weights.push_back(Eigen::MatrixXd::Zero(m.weights[l].rows(), m.weights[l].cols()));
    zero.biases.push_back(Eigen::VectorXd::Zero(m.biases[l].size()));
  }
  adam_step(m, zero, st, 0.01);
  CHECK(all_params(m) == all_params(before));

  Gradients g = zero;
  std::normal_distribution<double> n(0, 3);
  for (auto& w : g.weights) w = w.unaryExpr([&](double) { return n(rng); });
  for (auto& b : g.biases) b = b.unaryExpr([&](double) { return n(rng); });
  MlpModel m2 = before;
  AdamState st2 = AdamState::for_model(m2);
  const double r = 0.003;
  adam_step(m2, g, st2, r);
  const auto p0 = all_params(before), p1 = all_params(m2);
  std::vector<double> gv;
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    gv.insert(gv.end(), g.weights[l].data(), g.weights[l].data() + g.weights[l].size());
    gv.insert(gv.end(), g.biases[l].data(), g.biases[l].data() + g.biases[l].size());
  }
  for (std::size_t i = 0; i < p0.size(); ++i) {
    const double step = p1[i] - p0[i];
    CHECK(std::abs(step + (gv[i] > 0 ? r : -r)) < 1e-9);
  }

  // 1-parameter quadratic (w - 3)^2 through the output bias of a zero net
  MlpModel q = zero_model(build_architecture(1, 1.0, 1));
  AdamState sq = AdamState::for_model(q);
  for (int k = 0; k < 1000; ++k) {
    Gradients gq;
    for (std::size_t l = 0; l < q.weights.size(); ++l) {
      gq.weights.push_back(Eigen::MatrixXd::Zero(q.weights[l].rows(), q.weights[l].cols()));
      gq.biases.push_back(Eigen::VectorXd::Zero(q.biases[l].size()));
    }
    gq.biases.back()(0) = 2 * (q.biases.back()(0) - 3);
    adam_step(q, gq, sq, 0.05);
  }
  CHECK(std::abs(q.biases.back()(0) - 3) < 1e-3);
}

TEST_CASE("dropout keeps the expected pre-activation") {
  std::mt19937_64 rng(8);
  // positive output weights and no output bias keep the mean well away from 0
  MlpModel m = random_model({6, 10, 2}, rng);
  m.weights[1] = m.weights[1].cwiseAbs();
  m.biases[1].setZero();
  const std::vector<double> x{0.3, -0.2, 0.9, 0.1, 0.5, -0.7};
  const Vec2 plain = forward(m, x);
  double sx = 0, sy = 0;
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    const DropoutMasks mask = sample_masks(m, 1, 0.2, rng);
    const Vec2 y = forward(m, x, &mask);
    sx += y.x;
    sy += y.y;
  }
  REQUIRE(plain.x > 0.5);
  REQUIRE(plain.y > 0.5);
  CHECK(std::abs(sx / n - plain.x) <= 0.01 * plain.x);
  CHECK(std::abs(sy / n - plain.y) <= 0.01 * plain.y);

  const DropoutMasks one = sample_masks(m, 4, 0.25, rng);
  REQUIRE(one.size() == 1);
  CHECK(one[0].rows() == 10);
  CHECK(one[0].cols() == 4);
  for (Eigen::Index i = 0; i < one[0].size(); ++i) {
    const double v = one[0].data()[i];
    CHECK((v == 0.0 || std::abs(v - 1 / 0.75) < 1e-15));
  }
}

TEST_CASE("training on a noiseless linear map") {
  const auto data = linear_task(11);
  TrainConfig cfg;
  cfg.kappa = 1.0;
  cfg.dropout = 0.0;
  cfg.learning_rate = 0.003;
  cfg.batch_fraction = 0.25;
  cfg.epochs = 500;
  const TrainResult r = train(data, cfg);
  CHECK(rmse(r.model, data) < 0.05);
  CHECK(rmse(r.model, linear_task(12, 100)) < 0.05);
  REQUIRE(r.epoch_loss.size() == 500);
  CHECK(r.optimizer_steps == 500 * 4);

  // 50-epoch moving average trends down
  std::vector<double> ma;
  double s = 0;
  for (std::size_t k = 0; k < r.epoch_loss.size(); ++k) {
    s += r.epoch_loss[k];
    if (k >= 50) s -= r.epoch_loss[k - 50];
    if (k >= 49) ma.push_back(s / 50);
  }
  int rises = 0;
  for (std::size_t k = 1; k < ma.size(); ++k) rises += ma[k] > ma[k - 1] * (1 + 1e-9);
  CHECK(rises == 0);

  const TrainResult again = train(data, cfg);
  CHECK(all_params(again.model) == all_params(r.model));
  CHECK(again.epoch_loss == r.epoch_loss);
  cfg.rng_seed = 2;
  CHECK(all_params(train(data, cfg).model) != all_params(r.model));
}

TEST_CASE("training bookkeeping and validation") {
  const auto data = linear_task(13, 37);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_fraction = 0.25;  // batch 10 -> 4 steps
  CHECK(train(data, cfg).optimizer_steps == 4);
  cfg.batch_fraction = 1.0;
  CHECK(train(data, cfg).optimizer_steps == 1);

  TrainConfig bad;
  bad.epochs = 0;
  CHECK_THROWS(validate(bad));
  bad = {};
  bad.dropout = 1.0;
  CHECK_THROWS(validate(bad));
  bad = {};
  bad.learning_rate = 0;
  CHECK_THROWS(validate(bad));
  bad = {};
  bad.batch_fraction = 0;
  CHECK_THROWS(validate(bad));
  CHECK_NOTHROW(validate(TrainConfig{}));
  CHECK_THROWS(train(std::vector<LabeledSample>{}, TrainConfig{}));

  TrainConfig hot;
  hot.learning_rate = 1e200;
  hot.epochs = 50;
  CHECK_THROWS_AS(train(data, hot), TrainingError);
}

TEST_CASE("hyperparameter grid") {
  const HyperparameterGrid g = default_grid();
  CHECK(g.kappas == std::vector<double>{0.6, 0.7, 0.8, 0.9, 1.0});
  CHECK(g.dropouts == std::vector<double>{0, 0.10, 0.15, 0.20});
  CHECK(g.batch_fractions == std::vector<double>{0.5, 0.75});
  REQUIRE(g.learning_rates.size() == 21);
  CHECK(g.learning_rates.front() == doctest::Approx(1e-4));
  CHECK(g.learning_rates.back() == doctest::Approx(1e-2));
  for (std::size_t k = 1; k < 21; ++k)
    CHECK(g.learning_rates[k] / g.learning_rates[k - 1] == doctest::Approx(std::pow(10.0, 0.1)));
  // 0.003 is not on the grid; the nearest point is 10^-2.5
  const auto nearest = *std::min_element(g.learning_rates.begin(), g.learning_rates.end(), [](double a, double b) {
    return std::abs(a - 0.003) < std::abs(b - 0.003);
  });
  CHECK(nearest == doctest::Approx(0.00316227766));
  CHECK(g.size() == 5 * 4 * 21 * 2);

  const auto data = linear_task(14, 60);
  const auto val = linear_task(15, 30, 1000);
  HyperparameterGrid one{{0.9}, {0.1}, {0.003}, {0.5}};
  TrainConfig base;
  base.epochs = 5;
  const GridSearchResult r = grid_search_hyperparams(data, val, one, base);
  REQUIRE(r.scores.size() == 1);
  CHECK(r.best.kappa == 0.9);
  CHECK(r.best.dropout == 0.1);
  CHECK(r.best.learning_rate == 0.003);
  CHECK(r.best.batch_fraction == 0.5);

  // a config that blows up scores +inf and the search carries on
  HyperparameterGrid two{{0.9}, {0.0}, {1e200, 0.003}, {0.5}};
  const GridSearchResult r2 = grid_search_hyperparams(data, val, two, base);
  CHECK(std::isinf(r2.scores[0].validation_loss));
  CHECK(r2.best.learning_rate == 0.003);
}

TEST_CASE("grid search finds a planted kappa") {
  // labels copy two independent inputs; kappa 0.1 squeezes ten inputs through
  // a single hidden unit and cannot represent them
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> u(0, 1);
  int next_id = 0;
  auto make = [&](int n) {
    std::vector<LabeledSample> s;
    for (int i = 0; i < n; ++i) {
      std::vector<double> x(10);
      for (double& v : x) v = u(rng);
      s.push_back(sample(x, {2 * x[0], 2 * x[7]}));
      s.back().snapshot_id = next_id++;
    }
    return s;
  };
  const auto tr = make(150), va = make(50);
  HyperparameterGrid g{{0.1, 1.0}, {0.0}, {0.01}, {0.5}};
  TrainConfig base;
  base.epochs = 300;
  const GridSearchResult r = grid_search_hyperparams(tr, va, g, base);
  CHECK(r.best.kappa == 1.0);
  REQUIRE(r.scores.size() == 2);
  CHECK(r.scores[0].parameter_count < r.scores[1].parameter_count);
}

TEST_CASE("log_spaced") {
  const auto v = log_spaced(-4, -2, 10);
  CHECK(v.size() == 21);
  CHECK(log_spaced(0, 1, 1) == std::vector<double>{1, 10});
}

TEST_CASE("model save and load") {
  std::mt19937_64 rng(17);
  MlpModel m = random_model({40, 36, 36, 18, 2}, rng);
  m.architecture = build_architecture(40, 0.9);
  m.dropout = 0.1;
  std::stringstream buf;
  save_model(m, buf);
  const MlpModel back = load_model(buf);
  CHECK(back.architecture == m.architecture);
  CHECK(back.dropout == m.dropout);
  CHECK(all_params(back) == all_params(m));

  std::string bytes;
  {
    std::ostringstream o;
    save_model(m, o);
    bytes = o.str();
  }
  CHECK(static_cast<std::uint8_t>(bytes[0]) == kModelFormatVersion);
  std::string wrong = bytes;
  wrong[0] = static_cast<char>(kModelFormatVersion + 1);
  std::istringstream w(wrong);
  CHECK_THROWS_AS(load_model(w), FormatError);
  std::istringstream cut(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_model(cut), FormatError);
}

}  // TEST_SUITE
