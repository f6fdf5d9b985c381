#include "astnn/measurement_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "astnn/errors.hpp"

namespace astnn::io {
namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

bool parse_int(std::string_view s, int& out) {
  s = trim(s);
  if (s.empty()) return false;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

LoadResult load_measurements(std::istream& in) {
  LoadResult out;
  std::string line;
  long line_no = 0;
  bool have_header = false;
  while (!have_header && std::getline(in, line)) {
    ++line_no;
    std::string_view t = trim(line);
    if (line_no == 1 && t.size() >= 3 && static_cast<unsigned char>(t[0]) == 0xEF) t.remove_prefix(3);
    if (t.empty()) continue;
    if (t != kMeasurementHeader) throw FormatError("unexpected measurement header", line_no);
    have_header = true;
  }
  if (!have_header) {
    out.warnings.push_back("measurement file is empty");
    return out;
  }

  std::map<int, std::size_t> index_of;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view t = trim(line);
    if (t.empty()) continue;
    const auto cols = split_csv(t);
    auto reject = [&](std::string reason) { out.rejects.push_back({line_no, std::move(reason)}); };
    if (cols.size() != 12) {
      reject("expected 12 columns, got " + std::to_string(cols.size()));
      continue;
    }
    int snapshot_id = 0, area_id = 0, tx_id = 0;
    if (!parse_int(cols[0], snapshot_id) || !parse_int(cols[1], area_id) || !parse_int(cols[2], tx_id)) {
      reject("bad integer id");
      continue;
    }
    const bool truth_empty = trim(cols[3]).empty() && trim(cols[4]).empty() && trim(cols[5]).empty();
    std::optional<GroundTruth> truth;
    if (!truth_empty) {
      GroundTruth g;
      if (!parse_double(cols[3], g.position.x) || !parse_double(cols[4], g.position.y) ||
          !parse_double(cols[5], g.heading_deg) || !std::isfinite(g.position.x) || !std::isfinite(g.position.y) ||
          !std::isfinite(g.heading_deg)) {
        reject("bad ground truth");
        continue;
      }
      truth = g;
    }
    MpcRecord r;
    double* fields[] = {&r.path_loss_db, &r.delay_ns, &r.aoa_az_deg, &r.aoa_el_deg, &r.aod_az_deg, &r.aod_el_deg};
    bool ok = true;
    for (std::size_t k = 0; k < 6 && ok; ++k) ok = parse_double(cols[6 + k], *fields[k]) && std::isfinite(*fields[k]);
    if (!ok) {
      reject("bad numeric MPC field");
      continue;
    }
    if (r.delay_ns < 0.0) {
      reject("negative delay");
      continue;
    }
    for (double* a : {&r.aoa_az_deg, &r.aoa_el_deg, &r.aod_az_deg, &r.aod_el_deg})
      if (*a < 0.0 || *a >= 360.0) *a = wrap_deg_360(*a);

    auto it = index_of.find(snapshot_id);
    if (it == index_of.end()) {
      MeasurementSnapshot s;
      s.snapshot_id = snapshot_id;
      s.area_id = area_id;
      s.truth = truth;
      out.snapshots.push_back(std::move(s));
      it = index_of.emplace(snapshot_id, out.snapshots.size() - 1).first;
    }
    MeasurementSnapshot& snap = out.snapshots[it->second];
    if (snap.area_id != area_id || snap.truth != truth) {
      reject("area or ground truth disagrees with earlier rows of snapshot " + std::to_string(snapshot_id));
      continue;
    }
    snap.tx_records[tx_id].push_back(r);
  }
  if (!out.rejects.empty())
    out.warnings.push_back(std::to_string(out.rejects.size()) + " malformed rows rejected");
  return out;
}

LoadResult load_measurements(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open measurement file " + path);
  return load_measurements(f);
}

void save_measurements(const Dataset& data, std::ostream& out) {
  out << kMeasurementHeader << '\n';
  for (const MeasurementSnapshot& s : data) {
    std::string prefix = std::to_string(s.snapshot_id) + ',' + std::to_string(s.area_id) + ',';
    std::string truth = s.truth ? format_double(s.truth->position.x) + ',' + format_double(s.truth->position.y) + ',' +
                                      format_double(s.truth->heading_deg)
                                : std::string(",,");
    for (const auto& [tx, rows] : s.tx_records) {
      for (const MpcRecord& r : rows) {
        out << prefix << tx << ',' << truth << ',' << format_double(r.path_loss_db) << ','
            << format_double(r.delay_ns) << ',' << format_double(r.aoa_az_deg) << ',' << format_double(r.aoa_el_deg)
            << ',' << format_double(r.aod_az_deg) << ',' << format_double(r.aod_el_deg) << '\n';
      }
    }
  }
  if (!out) throw std::runtime_error("failed to write measurements");
}

void save_measurements(const Dataset& data, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  save_measurements(data, f);
}

MergeResult range_search_merge(const std::map<int, std::vector<RunLocation>>& per_tx_runs, int area_id,
                               int first_snapshot_id) {
  if (per_tx_runs.empty()) throw std::invalid_argument("range search needs at least one transmitter run");
  MergeResult out;
  const auto& [ref_tx, ref_run] = *per_tx_runs.begin();

  std::map<int, std::vector<char>> used;
  for (const auto& [tx, run] : per_tx_runs) used[tx].assign(run.size(), 0);

  for (std::size_t t = 0; t < ref_run.size(); ++t) {
    MeasurementSnapshot snap;
    snap.snapshot_id = first_snapshot_id + static_cast<int>(t);
    snap.area_id = area_id;
    snap.tx_records[ref_tx] = ref_run[t].records;
    std::map<int, std::size_t> picked{{ref_tx, t}};
    Vec2 sum = ref_run[t].position;
    int members = 1;

    for (const auto& [tx, run] : per_tx_runs) {
      if (tx == ref_tx) continue;
      auto& taken = used[tx];
      std::size_t best = run.size();
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t u = 0; u < run.size(); ++u) {
        if (taken[u]) continue;
        const double d = distance(run[u].position, ref_run[t].position);
        if (d < best_d) {
          best_d = d;
          best = u;
        }
      }
      if (best == run.size()) {
        if (std::find(out.exhausted.begin(), out.exhausted.end(), tx) == out.exhausted.end())
          out.exhausted.push_back(tx);
        continue;
      }
      taken[best] = 1;
      picked[tx] = best;
      snap.tx_records[tx] = run[best].records;
      sum = sum + run[best].position;
      ++members;
    }
    snap.truth = GroundTruth{(1.0 / members) * sum, 0.0};
    out.snapshots.push_back(std::move(snap));
    out.members.push_back(std::move(picked));
  }
  return out;
}

}  // namespace astnn::io
