#include "astnn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "astnn/errors.hpp"
#include "astnn/measurement_io.hpp"

namespace astnn::eval {

double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

BoxStats box_stats(std::vector<double> values) {
  BoxStats b;
  b.count = values.size();
  if (values.empty()) return b;
  std::sort(values.begin(), values.end());
  b.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  b.q1 = quantile(values, 0.25);
  b.median = quantile(values, 0.5);
  b.q3 = quantile(values, 0.75);
  const double iqr = b.q3 - b.q1;
  const double lo_fence = b.q1 - 1.5 * iqr;
  const double hi_fence = b.q3 + 1.5 * iqr;
  b.whisker_low = *std::find_if(values.begin(), values.end(), [&](double v) { return v >= lo_fence; });
  b.whisker_high = *std::find_if(values.rbegin(), values.rend(), [&](double v) { return v <= hi_fence; });
  return b;
}

std::vector<CdfPoint> empirical_cdf(std::vector<double> values) {
  std::vector<CdfPoint> out;
  if (values.empty()) return out;
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i + 1 < values.size() && values[i + 1] == values[i]) continue;
    out.push_back({values[i], static_cast<double>(i + 1) / n});
  }
  return out;
}

EvalReport evaluate(const std::vector<Prediction>& predictions, const std::map<int, Truth>& truths,
                    double heatmap_cell) {
  std::vector<int> missing;
  for (const Prediction& p : predictions)
    if (!truths.contains(p.snapshot_id)) missing.push_back(p.snapshot_id);
  if (!missing.empty()) {
    std::ostringstream msg;
    msg << "no ground truth for snapshot ids:";
    for (int id : missing) msg << ' ' << id;
    throw EvaluationError(msg.str());
  }
  if (!(heatmap_cell > 0.0)) throw std::invalid_argument("heat-map cell size must be positive");

  EvalReport r;
  std::vector<double> errs;
  std::map<int, std::vector<double>> by_area;
  for (const Prediction& p : predictions) {
    const Truth& t = truths.at(p.snapshot_id);
    const double e = distance(p.position, t.position);
    r.errors.push_back({p.snapshot_id, t.area_id, t.position, p.position, e});
    errs.push_back(e);
    by_area[t.area_id].push_back(e);
  }
  r.cdf = empirical_cdf(errs);
  if (!errs.empty()) {
    const BoxStats all = box_stats(errs);
    r.mean = all.mean;
    r.median = all.median;
    r.sub_meter_fraction = static_cast<double>(std::count_if(errs.begin(), errs.end(), [](double e) { return e < 1.0; })) /
                           static_cast<double>(errs.size());
  }
  for (auto& [area, v] : by_area) r.per_area[area] = box_stats(std::move(v));

  r.heatmap.cell_size = heatmap_cell;
  if (!r.errors.empty()) {
    Vec2 origin = r.errors.front().truth;
    for (const ErrorRow& e : r.errors) {
      origin.x = std::min(origin.x, e.truth.x);
      origin.y = std::min(origin.y, e.truth.y);
    }
    origin = {std::floor(origin.x / heatmap_cell) * heatmap_cell, std::floor(origin.y / heatmap_cell) * heatmap_cell};
    r.heatmap.origin = origin;
    std::map<std::pair<int, int>, std::pair<std::size_t, double>> acc;
    for (const ErrorRow& e : r.errors) {
      const int ix = static_cast<int>(std::floor((e.truth.x - origin.x) / heatmap_cell));
      const int iy = static_cast<int>(std::floor((e.truth.y - origin.y) / heatmap_cell));
      auto& cell = acc[{ix, iy}];
      ++cell.first;
      cell.second += e.error;
    }
    for (const auto& [key, val] : acc)
      r.heatmap.cells.push_back({key.first, key.second, val.first, val.second / static_cast<double>(val.first)});
  }
  return r;
}

void write_errors_csv(const EvalReport& report, std::ostream& out) {
  out << "snapshot_id,area_id,truth_x,truth_y,est_x,est_y,error_m\n";
  for (const ErrorRow& e : report.errors)
    out << e.snapshot_id << ',' << e.area_id << ',' << io::format_double(e.truth.x) << ','
        << io::format_double(e.truth.y) << ',' << io::format_double(e.estimate.x) << ','
        << io::format_double(e.estimate.y) << ',' << io::format_double(e.error) << '\n';
}

void write_cdf_csv(const EvalReport& report, std::ostream& out) {
  out << "error_m,cdf\n";
  for (const CdfPoint& c : report.cdf) out << io::format_double(c.error) << ',' << io::format_double(c.fraction) << '\n';
}

void write_areas_csv(const EvalReport& report, std::ostream& out) {
  out << "area_id,count,mean,q1,median,q3,whisker_low,whisker_high\n";
  for (const auto& [area, b] : report.per_area)
    out << area << ',' << b.count << ',' << io::format_double(b.mean) << ',' << io::format_double(b.q1) << ','
        << io::format_double(b.median) << ',' << io::format_double(b.q3) << ',' << io::format_double(b.whisker_low)
        << ',' << io::format_double(b.whisker_high) << '\n';
}

void write_heatmap_csv(const EvalReport& report, std::ostream& out) {
  const Heatmap& h = report.heatmap;
  out << "cell_x_min,cell_y_min,cell_size,count,mean_error_m\n";
  for (const HeatmapCell& c : h.cells)
    out << io::format_double(h.origin.x + c.ix * h.cell_size) << ',' << io::format_double(h.origin.y + c.iy * h.cell_size)
        << ',' << io::format_double(h.cell_size) << ',' << c.count << ',' << io::format_double(c.mean_error) << '\n';
}

std::string summary_json(const EvalReport& report) {
  std::ostringstream s;
  s << "{\"count\": " << report.errors.size() << ", \"mean_m\": " << io::format_double(report.mean)
    << ", \"median_m\": " << io::format_double(report.median)
    << ", \"sub_meter_fraction\": " << io::format_double(report.sub_meter_fraction) << "}";
  return s.str();
}

std::vector<std::string> write_report(const EvalReport& report, const std::string& dir, const std::string& prefix) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<std::string> paths;
  auto emit = [&](const std::string& suffix, auto&& writer) {
    const std::string path = (fs::path(dir) / (prefix + suffix)).string();
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    writer(f);
    paths.push_back(path);
  };
  emit("_errors.csv", [&](std::ostream& o) { write_errors_csv(report, o); });
  emit("_cdf.csv", [&](std::ostream& o) { write_cdf_csv(report, o); });
  emit("_areas.csv", [&](std::ostream& o) { write_areas_csv(report, o); });
  emit("_heatmap.csv", [&](std::ostream& o) { write_heatmap_csv(report, o); });
  emit("_summary.json", [&](std::ostream& o) { o << summary_json(report) << '\n'; });
  return paths;
}

}  // namespace astnn::eval
