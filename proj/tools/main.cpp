// astnn command line: each subcommand runs one pipeline stage on files, and
// run-all chains them.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "astnn/bootstrap.hpp"
#include "astnn/errors.hpp"
#include "astnn/evaluation.hpp"
#include "astnn/measurement_io.hpp"
#include "astnn/pipeline.hpp"
#include "astnn/tinynn.hpp"

namespace fs = std::filesystem;
using namespace astnn;

namespace {

struct Globals {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
};

pipeline::PipelineConfig load(const Globals& g) {
  pipeline::PipelineConfig c;
  if (!g.config_path.empty()) c = pipeline::load_config(g.config_path);
  if (g.seed) pipeline::override_seed(c, *g.seed);
  return c;
}

std::string out_path(const Globals& g, const std::string& name) {
  fs::create_directories(g.out_dir);
  return (fs::path(g.out_dir) / name).string();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

Dataset read_measurements(const std::string& path) {
  io::LoadResult lr = io::load_measurements(path);
  for (const auto& w : lr.warnings) std::cerr << "warning: " << w << '\n';
  if (!lr.rejects.empty()) {
    std::cerr << lr.rejects.size() << " row(s) rejected\n";
    for (const auto& r : lr.rejects) std::cerr << "  line " << r.line << ": " << r.reason << '\n';
  }
  return std::move(lr.snapshots);
}

void print_summary(const std::string& name, const eval::EvalReport& r) {
  std::cout << name << ": " << eval::summary_json(r) << '\n';
}

// Runs `fn`, turning any failure into a stage-tagged message and exit code 1.
template <typename F>
int guarded(const std::string& stage, F&& fn) {
  try {
    fn();
    return 0;
  } catch (const PipelineError& e) {
    std::cerr << "error: " << e.what() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: [" << stage << "] " << e.what() << '\n';
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Algorithm-supervised tiny-NN indoor localization toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON pipeline config")->check(CLI::ExistingFile);
  app.add_option("--out", g.out_dir, "Output directory")->capture_default_str();
  app.add_option("--seed", g.seed, "Overrides the simulation, split and training seeds");

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic measurement CSV");

  // cluster
  auto* cl_cmd = app.add_subcommand("cluster", "Recursive DBSCAN of every snapshot into dominant paths");
  std::string cl_input;
  std::optional<double> cl_eps, cl_eta;
  std::optional<int> cl_gamma;
  bool cl_off = false;
  cl_cmd->add_option("input", cl_input, "Measurement CSV")->required()->check(CLI::ExistingFile);
  cl_cmd->add_option("--epsilon", cl_eps, "Initial radius");
  cl_cmd->add_option("--gamma", cl_gamma, "Initial neighbor threshold");
  cl_cmd->add_option("--eta", cl_eta, "Shrink factor");
  cl_cmd->add_flag("--no-cluster", cl_off, "Treat every MPC as its own path");

  // features
  auto* ft_cmd = app.add_subcommand("features", "Dump ADoA vectors as CSV");
  std::string ft_input;
  std::optional<int> ft_size;
  ft_cmd->add_option("input", ft_input, "Measurement CSV")->required()->check(CLI::ExistingFile);
  ft_cmd->add_option("--input-size", ft_size, "Feature vector length");

  // bootstrap
  auto* bs_cmd = app.add_subcommand("bootstrap", "Label snapshots with the geometric bootstrap localizer");
  std::string bs_features, bs_gauge;
  std::optional<int> bs_grid, bs_iter;
  std::optional<double> bs_tol;
  bs_cmd->add_option("features", bs_features, "Feature CSV")->required()->check(CLI::ExistingFile);
  bs_cmd->add_option("--grid", bs_grid, "Lattice points per axis");
  bs_cmd->add_option("--tol", bs_tol, "Convergence tolerance (m)");
  bs_cmd->add_option("--max-iter", bs_iter, "Outer iterations");
  bs_cmd->add_option("--gauge-file", bs_gauge, "CSV id,x,y[,is_physical] of pinned anchors")
      ->check(CLI::ExistingFile);

  // train
  auto* tr_cmd = app.add_subcommand("train", "Train the localization network");
  std::string tr_features, tr_labels = "bootstrap", tr_estimates, tr_meas;
  std::optional<double> tr_kappa, tr_dropout, tr_lr, tr_batch;
  std::optional<int> tr_epochs, tr_hidden;
  bool tr_grid = false;
  tr_cmd->add_option("features", tr_features, "Feature CSV")->required()->check(CLI::ExistingFile);
  tr_cmd->add_option("--labels", tr_labels, "Label source")->check(CLI::IsMember({"bootstrap", "truth"}));
  tr_cmd->add_option("--estimates", tr_estimates, "Bootstrap estimate CSV (bootstrap labels)")
      ->check(CLI::ExistingFile);
  tr_cmd->add_option("--measurements", tr_meas, "Measurement CSV with truth (truth labels)")
      ->check(CLI::ExistingFile);
  tr_cmd->add_option("--kappa", tr_kappa);
  tr_cmd->add_option("--dropout", tr_dropout);
  tr_cmd->add_option("--lr", tr_lr);
  tr_cmd->add_option("--batch-frac", tr_batch);
  tr_cmd->add_option("--epochs", tr_epochs);
  tr_cmd->add_option("--hidden-layers", tr_hidden);
  tr_cmd->add_flag("--grid-search", tr_grid, "Pick hyperparameters on a held-out split first");

  // evaluate
  auto* ev_cmd = app.add_subcommand("evaluate", "Error statistics of predictions against truth");
  std::string ev_meas, ev_pred, ev_model, ev_features, ev_prefix = "eval";
  std::optional<double> ev_cell;
  ev_cmd->add_option("measurements", ev_meas, "Measurement CSV with truth")->required()->check(CLI::ExistingFile);
  auto* ev_p = ev_cmd->add_option("--predictions", ev_pred, "CSV snapshot_id,x,y")->check(CLI::ExistingFile);
  auto* ev_m = ev_cmd->add_option("--model", ev_model, "Model file")->check(CLI::ExistingFile);
  ev_cmd->add_option("--features", ev_features, "Feature CSV for --model")->check(CLI::ExistingFile);
  ev_cmd->add_option("--prefix", ev_prefix, "Report file prefix")->capture_default_str();
  ev_cmd->add_option("--cell", ev_cell, "Heat-map cell size (m)");
  ev_p->excludes(ev_m);

  auto* all_cmd = app.add_subcommand("run-all", "Run every stage and write all artifacts");

  CLI11_PARSE(app, argc, argv);

  if (*sim_cmd) {
    return guarded("simulate", [&] {
      const auto c = load(g);
      if (!c.have_room) throw std::invalid_argument("simulate needs --config with a room");
      const Dataset d = sim::generate_dataset(c.simulation);
      const std::string path = out_path(g, "measurements.csv");
      io::save_measurements(d, path);
      std::cout << d.size() << " snapshots -> " << path << '\n';
    });
  }
  if (*cl_cmd) {
    return guarded("cluster", [&] {
      auto c = load(g);
      if (cl_eps) c.clustering.params.epsilon = *cl_eps;
      if (cl_gamma) c.clustering.params.gamma = *cl_gamma;
      if (cl_eta) c.clustering.params.eta = *cl_eta;
      if (cl_off) c.clustering.enabled = false;
      const auto centroids = pipeline::cluster_dataset(read_measurements(cl_input), c.clustering);
      const std::string path = out_path(g, "centroids.csv");
      auto out = open_out(path);
      pipeline::write_centroids_csv(centroids, out);
      std::cout << centroids.size() << " snapshots -> " << path << '\n';
    });
  }
  if (*ft_cmd) {
    return guarded("features", [&] {
      auto c = load(g);
      if (ft_size) c.input_size = *ft_size;
      const auto fset = pipeline::build_features(read_measurements(ft_input), c.clustering, c.input_size, c.feature_order);
      const std::string path = out_path(g, "features.csv");
      auto out = open_out(path);
      pipeline::write_features_csv(fset.rows, out);
      std::cout << fset.rows.size() << " vectors -> " << path << '\n';
      if (!fset.skipped.empty()) std::cerr << fset.skipped.size() << " snapshot(s) had fewer than two paths\n";
      if (fset.overflow.truncated_vectors > 0)
        std::cerr << fset.overflow.truncated_vectors << " vector(s) truncated, " << fset.overflow.dropped_features
                  << " feature(s) dropped\n";
    });
  }
  if (*bs_cmd) {
    return guarded("bootstrap", [&] {
      auto c = load(g);
      bootstrap::BootstrapConfig b = pipeline::effective_bootstrap(c);
      if (bs_grid) b.grid_points_per_axis = *bs_grid;
      if (bs_tol) b.convergence_tol = *bs_tol;
      if (bs_iter) b.max_outer_iterations = *bs_iter;
      if (!bs_gauge.empty()) {
        auto in = open_in(bs_gauge);
        b.gauge_anchors.clear();
        pipeline::read_gauge_file(in, b.gauge_anchors, b.initial_anchors);
      }
      auto in = open_in(bs_features);
      const auto rows = pipeline::read_features_csv(in);
      if (rows.size() < 2) throw InsufficientMeasurements("under-determined: need at least two snapshots");
      const auto model = pipeline::room_model(c);
      const auto res = bootstrap::jade_localize(rows, b, model ? &*model : nullptr);
      auto est = open_out(out_path(g, "estimates.csv"));
      pipeline::write_estimates_csv(res.estimates, est);
      auto anc = open_out(out_path(g, "anchors.csv"));
      pipeline::write_anchors_csv(res.anchors, anc);
      std::size_t fixed = 0;
      for (const auto& e : res.estimates) fixed += e.fixed ? 1 : 0;
      std::cout << fixed << "/" << res.estimates.size() << " fixed after " << res.outer_iterations
                << " outer iteration(s)\n";
    });
  }
  if (*tr_cmd) {
    return guarded("train", [&] {
      auto c = load(g);
      auto& t = c.train;
      if (tr_kappa) t.kappa = *tr_kappa;
      if (tr_dropout) t.dropout = *tr_dropout;
      if (tr_lr) t.learning_rate = *tr_lr;
      if (tr_batch) t.batch_fraction = *tr_batch;
      if (tr_epochs) t.epochs = *tr_epochs;
      if (tr_hidden) t.hidden_layers = *tr_hidden;
      nn::validate(t);

      auto in = open_in(tr_features);
      const auto rows = pipeline::read_features_csv(in);
      std::map<int, Vec2> labels;
      nn::LabelSource src = nn::LabelSource::Bootstrap;
      if (tr_labels == "bootstrap") {
        if (tr_estimates.empty()) throw std::invalid_argument("--labels bootstrap needs --estimates");
        auto ein = open_in(tr_estimates);
        for (const auto& e : pipeline::read_estimates_csv(ein))
          if (e.fixed) labels[e.snapshot_id] = e.position;
      } else {
        if (tr_meas.empty()) throw std::invalid_argument("--labels truth needs --measurements");
        src = nn::LabelSource::GroundTruth;
        for (const auto& [id, truth] : pipeline::truths_of(read_measurements(tr_meas))) labels[id] = truth.position;
      }
      std::vector<nn::LabeledSample> samples;
      for (const auto& r : rows) {
        const auto it = labels.find(r.snapshot_id);
        if (it != labels.end()) samples.push_back({r.features, it->second, src, r.snapshot_id});
      }
      if (samples.empty()) throw TrainingError("no feature row has a label");
      if (tr_grid) {
        const auto [tr, va] = pipeline::split_dataset<nn::LabeledSample>(samples, c.validation_fraction,
                                                                          c.split_seed + 1);
        t = nn::grid_search_hyperparams(tr, va, c.grid, t).best;
        std::cout << "grid search: kappa=" << t.kappa << " dropout=" << t.dropout << " lr=" << t.learning_rate
                  << " batch=" << t.batch_fraction << '\n';
      }
      const auto res = nn::train(samples, t);
      const std::string path = out_path(g, "model.bin");
      nn::save_model(res.model, path);
      std::cout << samples.size() << " samples, final loss " << res.epoch_loss.back() << " -> " << path << '\n';
    });
  }
  if (*ev_cmd) {
    return guarded("evaluate", [&] {
      auto c = load(g);
      if (ev_cell) c.heatmap_cell = *ev_cell;
      std::vector<eval::Prediction> preds;
      if (!ev_pred.empty()) {
        auto in = open_in(ev_pred);
        preds = pipeline::read_predictions_csv(in);
      } else if (!ev_model.empty()) {
        if (ev_features.empty()) throw std::invalid_argument("--model needs --features");
        const auto model = nn::load_model(ev_model);
        auto in = open_in(ev_features);
        for (const auto& r : pipeline::read_features_csv(in))
          preds.push_back({r.snapshot_id, nn::predict(model, r.features)});
      } else {
        throw std::invalid_argument("give --predictions or --model");
      }
      const auto report = eval::evaluate(preds, pipeline::truths_of(read_measurements(ev_meas)), c.heatmap_cell);
      fs::create_directories(g.out_dir);
      eval::write_report(report, g.out_dir, ev_prefix);
      print_summary(ev_prefix, report);
    });
  }
  if (*all_cmd) {
    return guarded("run-all", [&] {
      const auto c = load(g);
      const auto res = pipeline::run_full_pipeline(c, g.out_dir);
      std::cout << res.snapshots << " snapshots, " << res.fixed << " fixed, " << res.kept << " kept, "
                << res.train_size << " train / " << res.test_size << " test\n";
      print_summary("bootstrap", res.bootstrap);
      print_summary("as_tnn", res.as_tnn);
      print_summary("tnn", res.tnn);
      for (const auto& [stage, secs] : res.stage_seconds) std::cout << "  " << stage << ": " << secs << " s\n";
      std::cout << "manifest -> " << res.manifest_path << '\n';
    });
  }
  return 0;
}
