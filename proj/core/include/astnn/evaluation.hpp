#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "astnn/geometry.hpp"

namespace astnn::eval {

struct Prediction {
  int snapshot_id = 0;
  Vec2 position;
};

struct Truth {
  Vec2 position;
  int area_id = 0;
};

struct ErrorRow {
  int snapshot_id = 0;
  int area_id = 0;
  Vec2 truth;
  Vec2 estimate;
  double error = 0.0;
};

struct CdfPoint {
  double error = 0.0;
  double fraction = 0.0;
};

/// Box-plot summary; whiskers are the most extreme samples within 1.5 IQR of
/// the quartiles.
struct BoxStats {
  std::size_t count = 0;
  double mean = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double whisker_low = 0.0;
  double whisker_high = 0.0;
};

struct HeatmapCell {
  int ix = 0;
  int iy = 0;
  std::size_t count = 0;
  double mean_error = 0.0;
};

struct Heatmap {
  double cell_size = 0.5;
  Vec2 origin;
  std::vector<HeatmapCell> cells;
};

struct EvalReport {
  std::vector<ErrorRow> errors;
  std::vector<CdfPoint> cdf;
  double mean = 0.0;
  double median = 0.0;
  /// Fraction of errors strictly below 1 m.
  double sub_meter_fraction = 0.0;
  std::map<int, BoxStats> per_area;
  Heatmap heatmap;
};

/// Linear-interpolation quantile of a sorted sample.
double quantile(const std::vector<double>& sorted, double q);

BoxStats box_stats(std::vector<double> values);

/// Empirical CDF evaluated at every distinct value.
std::vector<CdfPoint> empirical_cdf(std::vector<double> values);

/// Throws EvaluationError naming the snapshot ids without a truth entry.
EvalReport evaluate(const std::vector<Prediction>& predictions, const std::map<int, Truth>& truths,
                    double heatmap_cell = 0.5);

void write_errors_csv(const EvalReport& report, std::ostream& out);
void write_cdf_csv(const EvalReport& report, std::ostream& out);
void write_areas_csv(const EvalReport& report, std::ostream& out);
void write_heatmap_csv(const EvalReport& report, std::ostream& out);
/// Small JSON object with count, mean, median and sub-meter fraction.
std::string summary_json(const EvalReport& report);

/// Writes <prefix>_errors.csv, _cdf.csv, _areas.csv, _heatmap.csv and
/// _summary.json into `dir`; returns the written paths.
std::vector<std::string> write_report(const EvalReport& report, const std::string& dir, const std::string& prefix);

}  // namespace astnn::eval
