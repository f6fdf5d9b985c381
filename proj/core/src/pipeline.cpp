#include "astnn/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "astnn/errors.hpp"
#include "astnn/measurement_io.hpp"
#include "json.hpp"

namespace astnn::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

SplitIndices split_indices(std::size_t n, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw std::invalid_argument("test fraction must lie in (0, 1)");
  const auto n_test = std::min<std::size_t>(n, static_cast<std::size_t>(std::ceil(test_fraction * n - 1e-9)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Fisher-Yates with an explicit index draw; std::shuffle's use of the engine
  // is implementation-defined
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  SplitIndices s;
  s.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(s.test.begin(), s.test.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

std::vector<TxCentroid> snapshot_centroids(const MeasurementSnapshot& snapshot, const ClusteringOptions& options) {
  std::vector<TxCentroid> out;
  for (const auto& [tx, records] : snapshot.tx_records) {
    if (!options.enabled) {
      for (const MpcRecord& r : records) {
        const cluster::MpcPoint p = cluster::to_point(r);
        out.push_back({tx, {p.delay, p.azimuth, p.elevation, 1}});
      }
      continue;
    }
    std::vector<cluster::MpcPoint> pts;
    pts.reserve(records.size());
    for (const MpcRecord& r : records) pts.push_back(cluster::to_point(r));
    for (const cluster::Centroid& c : cluster::rec_dbscan(pts, options.params)) out.push_back({tx, c});
  }
  return out;
}

CentroidMap cluster_dataset(const Dataset& data, const ClusteringOptions& options) {
  if (options.enabled) cluster::validate(options.params);
  CentroidMap out;
  for (const MeasurementSnapshot& s : data) out[s.snapshot_id] = snapshot_centroids(s, options);
  return out;
}

FeatureSet features_from_centroids(const CentroidMap& centroids, int input_size, features::AdoaOrder order) {
  FeatureSet fs;
  for (const auto& [id, list] : centroids) {
    if (list.size() < 2) {
      fs.skipped.push_back(id);
      continue;
    }
    std::vector<cluster::Centroid> pooled;
    pooled.reserve(list.size());
    for (const TxCentroid& c : list) pooled.push_back(c.centroid);
    fs.rows.push_back({id, features::compute_adoa(pooled, input_size, &fs.overflow, order)});
  }
  return fs;
}

FeatureSet build_features(const Dataset& data, const ClusteringOptions& options, int input_size,
                          features::AdoaOrder order) {
  return features_from_centroids(cluster_dataset(data, options), input_size, order);
}

// ---- config ----

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw FormatError(where + " must be an object");
  for (const auto& item : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end())
      throw FormatError("unknown key '" + item.key() + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad value for '") + key + "': " + e.what());
  }
}

Vec2 read_point(const json& j) {
  if (j.is_array() && j.size() == 2) return {j[0].get<double>(), j[1].get<double>()};
  if (j.is_object()) return {j.at("x").get<double>(), j.at("y").get<double>()};
  throw FormatError("point must be [x, y] or {\"x\":..,\"y\":..}");
}

json point_json(Vec2 p) { return json::array({p.x, p.y}); }

sim::RoomPolygon read_room(const json& j) {
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    if (name == "h_room") return sim::h_room();
    throw FormatError("unknown room preset '" + name + "'");
  }
  check_keys(j, {"preset", "width", "height", "vertices"}, "room");
  if (j.contains("vertices")) {
    std::vector<Vec2> v;
    for (const json& p : j.at("vertices")) v.push_back(read_point(p));
    return sim::RoomPolygon(std::move(v));
  }
  const std::string preset = j.value("preset", "");
  if (preset == "h_room") return sim::h_room();
  if (preset == "rectangle") return sim::rectangle_room(j.at("width").get<double>(), j.at("height").get<double>());
  throw FormatError("room needs vertices or a preset (h_room, rectangle)");
}

std::vector<sim::Transmitter> read_transmitters(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "h_room") return sim::h_room_transmitters();
    throw FormatError("unknown transmitter preset '" + j.get<std::string>() + "'");
  }
  std::vector<sim::Transmitter> txs;
  for (const json& t : j) {
    check_keys(t, {"id", "x", "y"}, "transmitter");
    txs.push_back({t.at("id").get<int>(), {t.at("x").get<double>(), t.at("y").get<double>()}});
  }
  return txs;
}

template <typename A>
std::vector<A> read_anchor_list(const json& j) {
  std::vector<A> out;
  for (const json& a : j) {
    check_keys(a, {"id", "x", "y", "physical"}, "anchor");
    A v{};
    v.id = a.at("id").get<int>();
    v.position = {a.at("x").get<double>(), a.at("y").get<double>()};
    if constexpr (std::is_same_v<A, bootstrap::Anchor>) v.is_physical = a.value("physical", false);
    out.push_back(v);
  }
  return out;
}

}  // namespace

PipelineConfig parse_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, {"source", "measurements", "room", "transmitters", "simulation", "clustering", "features", "bootstrap",
                 "trim_fraction", "split", "train", "grid_search", "evaluation"},
             "config");
  PipelineConfig c;
  try {
    const std::string source = j.value("source", "simulate");
    if (source == "simulate") {
      c.source = PipelineConfig::Source::Simulate;
    } else if (source == "file") {
      c.source = PipelineConfig::Source::File;
    } else {
      throw FormatError("source must be 'simulate' or 'file'");
    }
    read(j, "measurements", c.measurements_path);
    if (j.contains("room")) {
      c.simulation.room = read_room(j.at("room"));
      c.have_room = true;
    }
    if (j.contains("transmitters")) c.simulation.transmitters = read_transmitters(j.at("transmitters"));

    if (j.contains("simulation")) {
      const json& s = j.at("simulation");
      check_keys(s, {"sigma_deg", "trajectories", "points_per_trajectory", "step_m", "seed"}, "simulation");
      read(s, "sigma_deg", c.simulation.aoa_noise_sigma_deg);
      read(s, "trajectories", c.simulation.trajectory_count);
      read(s, "points_per_trajectory", c.simulation.points_per_trajectory);
      read(s, "step_m", c.simulation.step_m);
      read(s, "seed", c.simulation.rng_seed);
    }
    if (j.contains("clustering")) {
      const json& s = j.at("clustering");
      check_keys(s, {"enabled", "epsilon", "gamma", "eta"}, "clustering");
      read(s, "enabled", c.clustering.enabled);
      read(s, "epsilon", c.clustering.params.epsilon);
      read(s, "gamma", c.clustering.params.gamma);
      read(s, "eta", c.clustering.params.eta);
    }
    if (j.contains("features")) {
      check_keys(j.at("features"), {"input_size", "order"}, "features");
      read(j.at("features"), "input_size", c.input_size);
      const std::string order = j.at("features").value("order", "sweep");
      if (order == "sweep") {
        c.feature_order = features::AdoaOrder::Sweep;
      } else if (order == "global") {
        c.feature_order = features::AdoaOrder::Global;
      } else {
        throw FormatError("features.order must be 'sweep' or 'global'");
      }
    }
    if (j.contains("bootstrap")) {
      const json& s = j.at("bootstrap");
      check_keys(s, {"grid", "tol", "max_iter", "max_refine_iter", "refine_step_tol", "gate_rad", "ambiguity_tol",
                     "ambiguity_fraction", "starts", "start_separation", "use_room_model", "gauge", "initial_anchors",
                     "bbox"},
                 "bootstrap");
      auto& b = c.bootstrap;
      read(s, "grid", b.grid_points_per_axis);
      read(s, "tol", b.convergence_tol);
      read(s, "max_iter", b.max_outer_iterations);
      read(s, "max_refine_iter", b.max_refine_iterations);
      read(s, "refine_step_tol", b.refine_step_tol);
      read(s, "gate_rad", b.association_gate_rad);
      read(s, "ambiguity_tol", b.ambiguity_tol);
      read(s, "ambiguity_fraction", b.ambiguity_fraction);
      read(s, "starts", b.start_candidates);
      read(s, "start_separation", b.candidate_separation);
      read(s, "use_room_model", c.use_room_model);
      if (s.contains("gauge")) b.gauge_anchors = read_anchor_list<bootstrap::GaugeAnchor>(s.at("gauge"));
      if (s.contains("initial_anchors")) b.initial_anchors = read_anchor_list<bootstrap::Anchor>(s.at("initial_anchors"));
      if (s.contains("bbox")) {
        const auto v = s.at("bbox").get<std::vector<double>>();
        if (v.size() != 4) throw FormatError("bbox must be [min_x, min_y, max_x, max_y]");
        b.bbox = BoundingBox{{v[0], v[1]}, {v[2], v[3]}};
      }
    }
    read(j, "trim_fraction", c.trim_fraction);
    if (j.contains("split")) {
      check_keys(j.at("split"), {"test_fraction", "seed"}, "split");
      read(j.at("split"), "test_fraction", c.test_fraction);
      read(j.at("split"), "seed", c.split_seed);
    }
    if (j.contains("train")) {
      const json& s = j.at("train");
      check_keys(s, {"kappa", "dropout", "lr", "batch_fraction", "epochs", "seed", "hidden_layers", "patience",
                     "adam_beta1", "adam_beta2", "adam_eps"},
                 "train");
      auto& t = c.train;
      read(s, "kappa", t.kappa);
      read(s, "dropout", t.dropout);
      read(s, "lr", t.learning_rate);
      read(s, "batch_fraction", t.batch_fraction);
      read(s, "epochs", t.epochs);
      read(s, "seed", t.rng_seed);
      read(s, "hidden_layers", t.hidden_layers);
      read(s, "patience", t.patience);
      read(s, "adam_beta1", t.adam_beta1);
      read(s, "adam_beta2", t.adam_beta2);
      read(s, "adam_eps", t.adam_eps);
    }
    if (j.contains("grid_search")) {
      const json& s = j.at("grid_search");
      check_keys(s, {"enabled", "validation_fraction", "kappas", "dropouts", "learning_rates", "batch_fractions"},
                 "grid_search");
      read(s, "enabled", c.grid_search);
      read(s, "validation_fraction", c.validation_fraction);
      read(s, "kappas", c.grid.kappas);
      read(s, "dropouts", c.grid.dropouts);
      read(s, "learning_rates", c.grid.learning_rates);
      read(s, "batch_fractions", c.grid.batch_fractions);
    }
    if (j.contains("evaluation")) {
      check_keys(j.at("evaluation"), {"heatmap_cell"}, "evaluation");
      read(j.at("evaluation"), "heatmap_cell", c.heatmap_cell);
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad config: ") + e.what());
  }

  if (c.source == PipelineConfig::Source::Simulate && !c.have_room)
    throw FormatError("simulate source needs a room");
  if (c.source == PipelineConfig::Source::File && c.measurements_path.empty())
    throw FormatError("file source needs 'measurements'");
  if (!(c.trim_fraction >= 0.0 && c.trim_fraction < 1.0)) throw FormatError("trim_fraction must lie in [0, 1)");
  if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0)) throw FormatError("split.test_fraction must lie in (0, 1)");
  if (!(c.validation_fraction > 0.0 && c.validation_fraction < 1.0))
    throw FormatError("grid_search.validation_fraction must lie in (0, 1)");
  if (c.input_size < 1) throw FormatError("features.input_size must be positive");
  if (!(c.heatmap_cell > 0.0)) throw FormatError("evaluation.heatmap_cell must be positive");
  try {
    nn::validate(c.train);
    if (c.clustering.enabled) cluster::validate(c.clustering.params);
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
  return c;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string canonical_json(const PipelineConfig& c) {
  json j;
  j["source"] = c.source == PipelineConfig::Source::Simulate ? "simulate" : "file";
  j["measurements"] = c.measurements_path;
  if (c.have_room) {
    json v = json::array();
    for (Vec2 p : c.simulation.room.vertices()) v.push_back(point_json(p));
    j["room"] = {{"vertices", v}};
  }
  json txs = json::array();
  for (const auto& t : c.simulation.transmitters) txs.push_back({{"id", t.id}, {"x", t.position.x}, {"y", t.position.y}});
  j["transmitters"] = txs;
  j["simulation"] = {{"sigma_deg", c.simulation.aoa_noise_sigma_deg},
                     {"trajectories", c.simulation.trajectory_count},
                     {"points_per_trajectory", c.simulation.points_per_trajectory},
                     {"step_m", c.simulation.step_m},
                     {"seed", c.simulation.rng_seed}};
  j["clustering"] = {{"enabled", c.clustering.enabled},
                     {"epsilon", c.clustering.params.epsilon},
                     {"gamma", c.clustering.params.gamma},
                     {"eta", c.clustering.params.eta}};
  j["features"] = {{"input_size", c.input_size},
                   {"order", c.feature_order == features::AdoaOrder::Global ? "global" : "sweep"}};
  const auto& b = c.bootstrap;
  json gauge = json::array();
  for (const auto& g : b.gauge_anchors) gauge.push_back({{"id", g.id}, {"x", g.position.x}, {"y", g.position.y}});
  json init = json::array();
  for (const auto& a : b.initial_anchors)
    init.push_back({{"id", a.id}, {"x", a.position.x}, {"y", a.position.y}, {"physical", a.is_physical}});
  j["bootstrap"] = {{"grid", b.grid_points_per_axis},     {"tol", b.convergence_tol},
                    {"max_iter", b.max_outer_iterations}, {"max_refine_iter", b.max_refine_iterations},
                    {"refine_step_tol", b.refine_step_tol}, {"gate_rad", b.association_gate_rad},
                    {"ambiguity_tol", b.ambiguity_tol},   {"ambiguity_fraction", b.ambiguity_fraction},
                    {"starts", b.start_candidates},       {"start_separation", b.candidate_separation},
                    {"use_room_model", c.use_room_model}, {"gauge", gauge},
                    {"initial_anchors", init}};
  if (b.bbox) j["bootstrap"]["bbox"] = {b.bbox->min.x, b.bbox->min.y, b.bbox->max.x, b.bbox->max.y};
  j["trim_fraction"] = c.trim_fraction;
  j["split"] = {{"test_fraction", c.test_fraction}, {"seed", c.split_seed}};
  const auto& t = c.train;
  j["train"] = {{"kappa", t.kappa},         {"dropout", t.dropout},       {"lr", t.learning_rate},
                {"batch_fraction", t.batch_fraction}, {"epochs", t.epochs}, {"seed", t.rng_seed},
                {"hidden_layers", t.hidden_layers},   {"patience", t.patience}, {"adam_beta1", t.adam_beta1},
                {"adam_beta2", t.adam_beta2},         {"adam_eps", t.adam_eps}};
  j["grid_search"] = {{"enabled", c.grid_search},
                      {"validation_fraction", c.validation_fraction},
                      {"kappas", c.grid.kappas},
                      {"dropouts", c.grid.dropouts},
                      {"learning_rates", c.grid.learning_rates},
                      {"batch_fractions", c.grid.batch_fractions}};
  j["evaluation"] = {{"heatmap_cell", c.heatmap_cell}};
  return j.dump();
}

void override_seed(PipelineConfig& config, std::uint64_t seed) {
  config.simulation.rng_seed = seed;
  config.split_seed = seed;
  config.train.rng_seed = seed;
}

std::optional<bootstrap::RoomModel> room_model(const PipelineConfig& config) {
  if (!config.use_room_model || !config.have_room || config.simulation.transmitters.empty()) return std::nullopt;
  return bootstrap::RoomModel{config.simulation.room, config.simulation.transmitters};
}

bootstrap::BootstrapConfig effective_bootstrap(const PipelineConfig& config) {
  bootstrap::BootstrapConfig b = config.bootstrap;
  // a known deployment pins the physical transmitters as the gauge
  if (b.gauge_anchors.empty() && room_model(config)) {
    for (const sim::Transmitter& tx : config.simulation.transmitters)
      b.gauge_anchors.push_back({sim::anchor_key(tx.id, -1), tx.position});
  }
  return b;
}

// ---- artifact files ----

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

double to_double(const std::string& s, long line) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw FormatError("expected a number, got '" + s + "'", line);
  return v;
}

long long to_int(const std::string& s, long line) {
  long long v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw FormatError("expected an integer, got '" + s + "'", line);
  return v;
}

bool looks_numeric(const std::string& s) {
  return !s.empty() && (std::isdigit(static_cast<unsigned char>(s[0])) || s[0] == '-' || s[0] == '+' || s[0] == '.');
}

// Iterates data rows, skipping a header line and blank lines.
void for_each_row(std::istream& in, const std::function<void(const std::vector<std::string>&, long)>& fn) {
  std::string line;
  long n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv(line);
    if (n == 1 && !looks_numeric(cells[0])) continue;
    fn(cells, n);
  }
}

const std::string& fmt(double v, std::string& buf) { return buf = io::format_double(v); }

}  // namespace

void write_centroids_csv(const CentroidMap& centroids, std::ostream& out) {
  std::string b;
  out << "snapshot_id,tx_id,delay_ns,aoa_az_deg,aoa_el_deg,member_count\n";
  for (const auto& [id, list] : centroids)
    for (const TxCentroid& c : list) {
      out << id << ',' << c.tx_id << ',' << fmt(c.centroid.delay, b) << ',';
      out << fmt(c.centroid.azimuth, b) << ',' << fmt(c.centroid.elevation, b) << ',' << c.centroid.member_count
          << '\n';
    }
}

void write_features_csv(std::span<const bootstrap::SnapshotFeatures> rows, std::ostream& out) {
  std::string b;
  const std::size_t n = rows.empty() ? 0 : rows.front().features.values.size();
  out << "snapshot_id,order,valid_count";
  for (std::size_t k = 0; k < n; ++k) out << ",f" << k;
  out << '\n';
  for (const auto& r : rows) {
    out << r.snapshot_id << ',' << (r.features.order == features::AdoaOrder::Global ? "global" : "sweep") << ','
        << r.features.valid_count;
    for (double v : r.features.values) out << ',' << fmt(v, b);
    out << '\n';
  }
}

std::vector<bootstrap::SnapshotFeatures> read_features_csv(std::istream& in) {
  std::vector<bootstrap::SnapshotFeatures> rows;
  for_each_row(in, [&](const std::vector<std::string>& cells, long line) {
    if (cells.size() < 4) throw FormatError("feature row needs an id, an order, a count and values", line);
    bootstrap::SnapshotFeatures f;
    f.snapshot_id = static_cast<int>(to_int(cells[0], line));
    if (cells[1] == "global") {
      f.features.order = features::AdoaOrder::Global;
    } else if (cells[1] != "sweep") {
      throw FormatError("order must be sweep or global", line);
    }
    f.features.valid_count = static_cast<int>(to_int(cells[2], line));
    for (std::size_t k = 3; k < cells.size(); ++k) f.features.values.push_back(to_double(cells[k], line));
    if (f.features.valid_count < 0 || f.features.valid_count > static_cast<int>(f.features.values.size()))
      throw FormatError("valid_count out of range", line);
    if (!rows.empty() && rows.front().features.values.size() != f.features.values.size())
      throw FormatError("feature rows differ in length", line);
    rows.push_back(std::move(f));
  });
  return rows;
}

void write_estimates_csv(std::span<const bootstrap::BootstrapEstimate> est, std::ostream& out) {
  std::string b;
  out << "snapshot_id,x,y,residual,fixed,ambiguous\n";
  for (const auto& e : est) {
    out << e.snapshot_id << ',' << fmt(e.position.x, b) << ',';
    out << fmt(e.position.y, b) << ',' << fmt(e.residual, b) << ',' << int(e.fixed) << ',' << int(e.ambiguous)
        << '\n';
  }
}

std::vector<bootstrap::BootstrapEstimate> read_estimates_csv(std::istream& in) {
  std::vector<bootstrap::BootstrapEstimate> out;
  for_each_row(in, [&](const std::vector<std::string>& c, long line) {
    if (c.size() < 3) throw FormatError("estimate row needs snapshot_id,x,y", line);
    bootstrap::BootstrapEstimate e;
    e.snapshot_id = static_cast<int>(to_int(c[0], line));
    e.position = {to_double(c[1], line), to_double(c[2], line)};
    if (c.size() > 3) e.residual = to_double(c[3], line);
    if (c.size() > 4) e.fixed = to_int(c[4], line) != 0;
    if (c.size() > 5) e.ambiguous = to_int(c[5], line) != 0;
    out.push_back(e);
  });
  return out;
}

void write_anchors_csv(const bootstrap::AnchorMap& anchors, std::ostream& out) {
  std::string b;
  out << "id,x,y,is_physical\n";
  for (const auto& a : anchors.anchors())
    out << a.id << ',' << fmt(a.position.x, b) << ',' << fmt(a.position.y, b) << ',' << int(a.is_physical) << '\n';
}

void read_gauge_file(std::istream& in, std::vector<bootstrap::GaugeAnchor>& gauges,
                     std::vector<bootstrap::Anchor>& initial) {
  for_each_row(in, [&](const std::vector<std::string>& c, long line) {
    if (c.size() < 3) throw FormatError("gauge row needs id,x,y", line);
    const int id = static_cast<int>(to_int(c[0], line));
    const Vec2 p{to_double(c[1], line), to_double(c[2], line)};
    const bool physical = c.size() < 4 || to_int(c[3], line) != 0;
    if (physical) {
      gauges.push_back({id, p});
    } else {
      initial.push_back({id, p, false});
    }
  });
}

void write_predictions_csv(std::span<const eval::Prediction> preds, std::ostream& out) {
  std::string b;
  out << "snapshot_id,x,y\n";
  for (const auto& p : preds) out << p.snapshot_id << ',' << fmt(p.position.x, b) << ',' << fmt(p.position.y, b) << '\n';
}

std::vector<eval::Prediction> read_predictions_csv(std::istream& in) {
  std::vector<eval::Prediction> out;
  for_each_row(in, [&](const std::vector<std::string>& c, long line) {
    if (c.size() < 3) throw FormatError("prediction row needs snapshot_id,x,y", line);
    out.push_back({static_cast<int>(to_int(c[0], line)), {to_double(c[1], line), to_double(c[2], line)}});
  });
  return out;
}

std::map<int, eval::Truth> truths_of(const Dataset& data) {
  std::map<int, eval::Truth> out;
  for (const MeasurementSnapshot& s : data)
    if (s.truth) out[s.snapshot_id] = {s.truth->position, s.area_id};
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return hex64(fnv1a64(bytes));
}

// ---- runner ----

namespace {

class Runner {
 public:
  Runner(const PipelineConfig& config, std::string out_dir) : config_(config), dir_(std::move(out_dir)) {
    fs::create_directories(dir_);
  }

  template <typename F>
  auto stage(const std::string& name, F&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      if constexpr (std::is_void_v<decltype(fn())>) {
        fn();
        finish(name, t0);
      } else {
        auto r = fn();
        finish(name, t0);
        return r;
      }
    } catch (const PipelineError&) {
      throw;
    } catch (const std::exception& e) {
      write_manifest(name);
      throw PipelineError(name, e.what());
    }
  }

  template <typename W>
  void emit(const std::string& name, W&& writer) {
    const std::string path = (fs::path(dir_) / name).string();
    {
      std::ofstream out(path, std::ios::binary);
      if (!out) throw std::runtime_error("cannot write " + path);
      writer(out);
    }
    track(path);
  }

  void track(const std::string& path) { result.digests[fs::path(path).filename().string()] = file_digest(path); }

  void write_manifest(const std::string& failed_stage = {}) {
    json m;
    m["config_hash"] = hex64(fnv1a64(canonical_json(config_)));
    m["seeds"] = {{"simulation", config_.simulation.rng_seed},
                  {"split", config_.split_seed},
                  {"train", config_.train.rng_seed}};
    m["files"] = result.digests;
    m["counts"] = {{"snapshots", result.snapshots}, {"featured", result.featured}, {"fixed", result.fixed},
                   {"kept", result.kept},           {"train", result.train_size},  {"test", result.test_size}};
    if (!failed_stage.empty()) m["failed_stage"] = failed_stage;
    result.manifest_path = (fs::path(dir_) / "manifest.json").string();
    std::ofstream out(result.manifest_path, std::ios::binary);
    out << m.dump(2) << '\n';
  }

  const std::string& dir() const { return dir_; }

  PipelineResult result;

 private:
  void finish(const std::string& name, std::chrono::steady_clock::time_point t0) {
    result.stage_seconds[name] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  const PipelineConfig& config_;
  std::string dir_;
};

std::vector<nn::LabeledSample> labeled(const std::vector<std::size_t>& idx,
                                       const std::vector<bootstrap::SnapshotFeatures>& feats,
                                       const std::vector<Vec2>& labels, nn::LabelSource src) {
  std::vector<nn::LabeledSample> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back({feats[i].features, labels[i], src, feats[i].snapshot_id});
  return out;
}

nn::TrainResult fit(const PipelineConfig& config, const std::vector<nn::LabeledSample>& samples,
                    nn::TrainConfig& used) {
  used = config.train;
  if (config.grid_search) {
    const auto [tr, va] =
        split_dataset<nn::LabeledSample>(samples, config.validation_fraction, config.split_seed + 1);
    used = nn::grid_search_hyperparams(tr, va, config.grid, config.train).best;
  }
  return nn::train(samples, used);
}

}  // namespace

PipelineResult run_full_pipeline(const PipelineConfig& config, const std::string& out_dir) {
  Runner run(config, out_dir);
  PipelineResult& res = run.result;

  const Dataset data = run.stage(config.source == PipelineConfig::Source::Simulate ? "simulate" : "load", [&] {
    Dataset d;
    if (config.source == PipelineConfig::Source::Simulate) {
      d = sim::generate_dataset(config.simulation);
    } else {
      io::LoadResult lr = io::load_measurements(config.measurements_path);
      if (!lr.rejects.empty()) {
        run.emit("rejects.csv", [&](std::ostream& o) {
          o << "line,reason\n";
          for (const auto& r : lr.rejects) o << r.line << ',' << r.reason << '\n';
        });
      }
      d = std::move(lr.snapshots);
    }
    if (d.empty()) throw InsufficientMeasurements("dataset is empty");
    run.emit("measurements.csv", [&](std::ostream& o) { io::save_measurements(d, o); });
    return d;
  });
  res.snapshots = data.size();

  const CentroidMap centroids = run.stage("cluster", [&] {
    CentroidMap c = cluster_dataset(data, config.clustering);
    run.emit("centroids.csv", [&](std::ostream& o) { write_centroids_csv(c, o); });
    return c;
  });

  const FeatureSet fset = run.stage("features", [&] {
    FeatureSet f = features_from_centroids(centroids, config.input_size, config.feature_order);
    if (f.rows.empty()) throw InsufficientMeasurements("no snapshot has two or more dominant paths");
    run.emit("features.csv", [&](std::ostream& o) { write_features_csv(f.rows, o); });
    return f;
  });
  res.featured = fset.rows.size();

  const bootstrap::BootstrapResult boot = run.stage("bootstrap", [&] {
    if (fset.rows.size() < 2)
      throw InsufficientMeasurements("under-determined: " + std::to_string(fset.rows.size()) +
                                     " snapshot(s) cannot pin the anchor map");
    const auto model = room_model(config);
    bootstrap::BootstrapResult b =
        bootstrap::jade_localize(fset.rows, effective_bootstrap(config), model ? &*model : nullptr);
    run.emit("estimates.csv", [&](std::ostream& o) { write_estimates_csv(b.estimates, o); });
    run.emit("anchors.csv", [&](std::ostream& o) { write_anchors_csv(b.anchors, o); });
    return b;
  });

  const std::vector<bootstrap::BootstrapEstimate> kept = run.stage("trim", [&] {
    std::vector<bootstrap::BootstrapEstimate> fixed;
    for (const auto& e : boot.estimates)
      if (e.fixed) fixed.push_back(e);
    res.fixed = fixed.size();
    auto t = bootstrap::trim_outliers(fixed, config.trim_fraction);
    run.emit("trimmed.csv", [&](std::ostream& o) { write_estimates_csv(t.kept, o); });
    return t.kept;
  });
  res.kept = kept.size();

  // kept snapshots with features, bootstrap labels and truth labels in id order
  std::vector<bootstrap::SnapshotFeatures> feats;
  std::vector<Vec2> boot_labels;
  std::vector<Vec2> truth_labels;
  const std::map<int, eval::Truth> truths = truths_of(data);
  const SplitIndices split = run.stage("split", [&] {
    std::map<int, const bootstrap::SnapshotFeatures*> by_id;
    for (const auto& r : fset.rows) by_id[r.snapshot_id] = &r;
    for (const auto& e : kept) {
      const auto t = truths.find(e.snapshot_id);
      if (t == truths.end()) throw EvaluationError("snapshot " + std::to_string(e.snapshot_id) + " has no truth");
      feats.push_back(*by_id.at(e.snapshot_id));
      boot_labels.push_back(e.position);
      truth_labels.push_back(t->second.position);
    }
    SplitIndices s = split_indices(feats.size(), config.test_fraction, config.split_seed);
    if (s.train.empty()) throw InsufficientMeasurements("training set is empty");
    run.emit("split.csv", [&](std::ostream& o) {
      o << "snapshot_id,set\n";
      for (std::size_t i : s.train) o << feats[i].snapshot_id << ",train\n";
      for (std::size_t i : s.test) o << feats[i].snapshot_id << ",test\n";
    });
    return s;
  });
  res.train_size = split.train.size();
  res.test_size = split.test.size();

  struct Models {
    nn::MlpModel as_tnn;
    nn::MlpModel tnn;
  };
  const Models models = run.stage("train", [&] {
    nn::TrainConfig used_as;
    nn::TrainConfig used_t;
    Models m;
    m.as_tnn = fit(config, labeled(split.train, feats, boot_labels, nn::LabelSource::Bootstrap), used_as).model;
    m.tnn = fit(config, labeled(split.train, feats, truth_labels, nn::LabelSource::GroundTruth), used_t).model;
    res.train_config = used_as;
    run.emit("model_as_tnn.bin", [&](std::ostream& o) { nn::save_model(m.as_tnn, o); });
    run.emit("model_tnn.bin", [&](std::ostream& o) { nn::save_model(m.tnn, o); });
    return m;
  });

  run.stage("evaluate", [&] {
    std::vector<eval::Prediction> p_boot, p_as, p_tnn, p_all;
    for (std::size_t i : split.test) {
      const int id = feats[i].snapshot_id;
      p_boot.push_back({id, boot_labels[i]});
      p_as.push_back({id, nn::predict(models.as_tnn, feats[i].features)});
      p_tnn.push_back({id, nn::predict(models.tnn, feats[i].features)});
    }
    for (std::size_t i = 0; i < feats.size(); ++i) p_all.push_back({feats[i].snapshot_id, boot_labels[i]});
    res.bootstrap = eval::evaluate(p_boot, truths, config.heatmap_cell);
    res.as_tnn = eval::evaluate(p_as, truths, config.heatmap_cell);
    res.tnn = eval::evaluate(p_tnn, truths, config.heatmap_cell);
    res.bootstrap_all = eval::evaluate(p_all, truths, config.heatmap_cell);
    run.emit("predictions_as_tnn.csv", [&](std::ostream& o) { write_predictions_csv(p_as, o); });
    run.emit("predictions_tnn.csv", [&](std::ostream& o) { write_predictions_csv(p_tnn, o); });
    for (const auto& [prefix, rep] : {std::pair<std::string, const eval::EvalReport*>{"bootstrap", &res.bootstrap},
                                      {"as_tnn", &res.as_tnn},
                                      {"tnn", &res.tnn},
                                      {"bootstrap_all", &res.bootstrap_all}})
      for (const std::string& path : eval::write_report(*rep, run.dir(), prefix)) run.track(path);
  });

  run.write_manifest();
  return res;
}

}  // namespace astnn::pipeline
