#include "astnn/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <tuple>

#include "astnn/errors.hpp"

namespace astnn::bootstrap {
namespace {

constexpr double kSingularRadius = 1e-6;
constexpr int kMaxHalvings = 40;
constexpr int kAssociationRounds = 4;

double bearing_rad(Vec2 rx, Vec2 anchor) { return std::atan2(anchor.y - rx.y, anchor.x - rx.x); }

/// d(bearing)/d(rx); the derivative with respect to the anchor is the negation.
Vec2 bearing_grad_rx(Vec2 rx, Vec2 anchor) {
  const Vec2 d = anchor - rx;
  const double d2 = dot(d, d);
  return {d.y / d2, -d.x / d2};
}

std::vector<double> observed_sweeps(const features::AdoaVector& observed) {
  std::vector<double> s;
  s.reserve(static_cast<std::size_t>(observed.valid_count));
  for (int k = 0; k < observed.valid_count; ++k) s.push_back(observed.sweep(k));
  return s;
}

void check_association(const features::AdoaVector& observed, const AnchorMap& anchors, const Association& a) {
  if (a.reference < 0 || a.reference >= static_cast<int>(anchors.size()))
    throw std::invalid_argument("association has no valid reference anchor");
  if (static_cast<int>(a.feature_anchor.size()) != observed.valid_count)
    throw std::invalid_argument("association size does not match the feature count");
  for (int idx : a.feature_anchor)
    if (idx >= static_cast<int>(anchors.size())) throw std::invalid_argument("association index out of range");
}

bool singular_at(Vec2 rx, const AnchorMap& anchors, const Association& a) {
  if (distance(rx, anchors[static_cast<std::size_t>(a.reference)].position) < kSingularRadius) return true;
  for (int idx : a.feature_anchor)
    if (idx >= 0 && distance(rx, anchors[static_cast<std::size_t>(idx)].position) < kSingularRadius) return true;
  return false;
}

double heading_term(Vec2 rx, const AnchorMap& anchors, const Association& a, const std::optional<HeadingArc>& arc) {
  if (!arc) return 0.0;
  const double off = heading_offset(bearing_rad(rx, anchors[static_cast<std::size_t>(a.reference)].position), *arc);
  return off * off;
}

/// Residual plus heading and gate penalties; the quantity the outer loop keeps
/// non-increasing.
double objective(Vec2 rx, const AnchorMap& anchors, const features::AdoaVector& observed, const Association& a,
                 const BootstrapConfig& config, bool penalize_unpaired) {
  const double gate2 = config.association_gate_rad * config.association_gate_rad;
  double total = adoa_residual(rx, anchors, observed, a) + heading_term(rx, anchors, a, heading_arc(observed));
  total += gate2 * static_cast<double>(observed.valid_count - a.paired_count());
  if (penalize_unpaired) total += gate2 * static_cast<double>(a.unpaired_anchors);
  return total;
}

double safe_objective(Vec2 rx, const AnchorMap& anchors, const features::AdoaVector& observed,
                      const Association& a, const BootstrapConfig& config, bool penalize_unpaired) {
  try {
    return objective(rx, anchors, observed, a, config, penalize_unpaired);
  } catch (const SingularGeometry&) {
    return std::numeric_limits<double>::infinity();
  }
}

struct Normal2 {
  double a11 = 0.0, a12 = 0.0, a22 = 0.0, g1 = 0.0, g2 = 0.0;

  void add(Vec2 j, double r) {
    a11 += j.x * j.x;
    a12 += j.x * j.y;
    a22 += j.y * j.y;
    g1 += j.x * r;
    g2 += j.y * r;
  }

  /// Solves (J^T J) step = -J^T r; falls back to a scaled gradient step when
  /// the system is rank deficient.
  Vec2 solve() const {
    const double det = a11 * a22 - a12 * a12;
    const double scale = std::max(a11 + a22, std::numeric_limits<double>::min());
    if (std::abs(det) > 1e-12 * scale * scale) return {-(a22 * g1 - a12 * g2) / det, -(-a12 * g1 + a11 * g2) / det};
    return {-g1 / scale, -g2 / scale};
  }
};

}  // namespace

AnchorMap::AnchorMap(std::vector<Anchor> anchors) : anchors_(std::move(anchors)) {
  for (std::size_t i = 0; i < anchors_.size(); ++i)
    for (std::size_t j = i + 1; j < anchors_.size(); ++j)
      if (anchors_[i].id == anchors_[j].id)
        throw std::invalid_argument("duplicate anchor id " + std::to_string(anchors_[i].id));
}

int AnchorMap::index_of(int id) const {
  for (std::size_t i = 0; i < anchors_.size(); ++i)
    if (anchors_[i].id == id) return static_cast<int>(i);
  return -1;
}

int Association::paired_count() const {
  return static_cast<int>(std::count_if(feature_anchor.begin(), feature_anchor.end(), [](int i) { return i >= 0; }));
}

Visibility visible_anchors(const AnchorMap& anchors, Vec2 rx, const RoomModel* room) {
  Visibility vis;
  if (room != nullptr) {
    if (!room->room.contains_strict(rx)) return vis;
    for (const sim::SimPath& p : sim::trace_all(room->room, room->transmitters, rx)) {
      const int idx = anchors.index_of(sim::anchor_key(p));
      if (idx >= 0) vis.anchors.push_back(idx);
    }
  } else {
    vis.anchors.resize(anchors.size());
    std::iota(vis.anchors.begin(), vis.anchors.end(), 0);
  }
  double best = std::numeric_limits<double>::infinity();
  for (int idx : vis.anchors) {
    const double d = distance(rx, anchors[static_cast<std::size_t>(idx)].position);
    if (d < kSingularRadius) return {};
    if (d < best) {
      best = d;
      vis.reference = idx;
    }
  }
  return vis;
}

double adoa_residual(Vec2 rx, const AnchorMap& anchors, const features::AdoaVector& observed,
                     const Association& association) {
  check_association(observed, anchors, association);
  if (singular_at(rx, anchors, association))
    throw SingularGeometry("receiver hypothesis coincides with an anchor");
  const double ref = bearing_rad(rx, anchors[static_cast<std::size_t>(association.reference)].position);
  double total = 0.0;
  for (int k = 0; k < observed.valid_count; ++k) {
    const int idx = association.feature_anchor[static_cast<std::size_t>(k)];
    if (idx < 0) continue;
    const double predicted = bearing_rad(rx, anchors[static_cast<std::size_t>(idx)].position) - ref;
    const double e = wrap_rad_pi(observed.values[static_cast<std::size_t>(k)] - predicted);
    total += e * e;
  }
  return total;
}

std::optional<HeadingArc> heading_arc(const features::AdoaVector& observed) {
  if (observed.order != features::AdoaOrder::Global || observed.valid_count < 2) return std::nullopt;
  std::vector<double> s = observed_sweeps(observed);
  const double first = s.front();
  std::sort(s.begin(), s.end());
  // rank of the first feature in sweep order
  const auto k0 = static_cast<std::size_t>(std::lower_bound(s.begin(), s.end(), first) - s.begin());
  const double prev = k0 == 0 ? s.back() - kTwoPi : s[k0 - 1];
  return HeadingArc{wrap_rad_2pi(-first), first - prev};
}

double heading_offset(double bearing, const HeadingArc& arc) {
  const double t = wrap_rad_2pi(bearing - arc.start);
  if (t < arc.width) return 0.0;
  const double after = t - arc.width;
  const double before = kTwoPi - t;
  return after <= before ? after : -before;
}

Association associate_anchors(const features::AdoaVector& observed, const AnchorMap& anchors, Vec2 rx_hypothesis,
                              const RoomModel* room, double gate_rad) {
  if (static_cast<int>(anchors.size()) - 1 < observed.valid_count)
    throw AssociationError("fewer anchors than features to associate");
  const Visibility vis = visible_anchors(anchors, rx_hypothesis, room);
  if (vis.reference < 0) throw AssociationError("no anchor is visible from the hypothesis");

  Association a;
  a.reference = vis.reference;
  a.feature_anchor.assign(static_cast<std::size_t>(observed.valid_count), -1);

  const double ref = bearing_rad(rx_hypothesis, anchors[static_cast<std::size_t>(vis.reference)].position);
  std::vector<std::pair<int, double>> predicted;
  for (int idx : vis.anchors) {
    if (idx == vis.reference) continue;
    predicted.emplace_back(idx, wrap_rad_2pi(bearing_rad(rx_hypothesis, anchors[static_cast<std::size_t>(idx)].position) - ref));
  }

  struct Pair {
    double diff;
    int feature;
    int slot;
  };
  std::vector<Pair> pairs;
  for (int k = 0; k < observed.valid_count; ++k) {
    const double s = observed.sweep(k);
    for (std::size_t j = 0; j < predicted.size(); ++j) {
      const double d = std::abs(wrap_rad_pi(s - predicted[j].second));
      if (d <= gate_rad) pairs.push_back({d, k, static_cast<int>(j)});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
    return std::tie(x.diff, x.feature, x.slot) < std::tie(y.diff, y.feature, y.slot);
  });
  std::vector<char> slot_used(predicted.size(), 0);
  int used = 0;
  for (const Pair& p : pairs) {
    auto& f = a.feature_anchor[static_cast<std::size_t>(p.feature)];
    if (f >= 0 || slot_used[static_cast<std::size_t>(p.slot)]) continue;
    f = predicted[static_cast<std::size_t>(p.slot)].first;
    slot_used[static_cast<std::size_t>(p.slot)] = 1;
    ++used;
  }
  a.unpaired_anchors = static_cast<int>(predicted.size()) - used;
  return a;
}

LatticeTable::LatticeTable(const AnchorMap& anchors, const BoundingBox& bbox, int points_per_axis,
                           const RoomModel* room)
    : n_(points_per_axis), bbox_(bbox), penalize_unpaired_(room != nullptr) {
  if (points_per_axis < 2) throw std::invalid_argument("grid needs at least 2 points per axis");
  if (!(bbox.width() > 0.0 && bbox.height() > 0.0)) throw std::invalid_argument("search box has no area");
  const std::size_t total = static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_);
  offsets_.reserve(total + 1);
  valid_.reserve(total);
  offsets_.push_back(0);
  std::vector<double> buf;
  for (std::size_t i = 0; i < total; ++i) {
    const Vec2 p = point(i);
    const Visibility vis = visible_anchors(anchors, p, room);
    buf.clear();
    if (vis.reference >= 0) {
      const double ref = bearing_rad(p, anchors[static_cast<std::size_t>(vis.reference)].position);
      for (int idx : vis.anchors)
        if (idx != vis.reference)
          buf.push_back(wrap_rad_2pi(bearing_rad(p, anchors[static_cast<std::size_t>(idx)].position) - ref));
      std::sort(buf.begin(), buf.end());
    }
    valid_.push_back(vis.reference >= 0 ? 1 : 0);
    ref_bearing_.push_back(vis.reference >= 0 ? bearing_rad(p, anchors[static_cast<std::size_t>(vis.reference)].position)
                                               : 0.0);
    sweeps_.insert(sweeps_.end(), buf.begin(), buf.end());
    offsets_.push_back(static_cast<std::uint32_t>(sweeps_.size()));
  }
}

Vec2 LatticeTable::point(std::size_t i) const {
  const auto ix = static_cast<double>(i % static_cast<std::size_t>(n_));
  const auto iy = static_cast<double>(i / static_cast<std::size_t>(n_));
  const double step_x = bbox_.width() / static_cast<double>(n_ - 1);
  const double step_y = bbox_.height() / static_cast<double>(n_ - 1);
  return {bbox_.min.x + ix * step_x, bbox_.min.y + iy * step_y};
}

double lattice_cost(std::span<const double> obs, std::span<const double> pred, double gate_rad,
                    bool penalize_unpaired) {
  const double gate2 = gate_rad * gate_rad;
  const std::size_t m = pred.size();
  if (m == 0) return gate2 * static_cast<double>(obs.size());

  constexpr std::size_t kInline = 256;
  std::uint64_t inline_bits[kInline / 64] = {};
  std::vector<std::uint64_t> heap_bits;
  std::uint64_t* claimed = inline_bits;
  if (m > kInline) {
    heap_bits.assign((m + 63) / 64, 0);
    claimed = heap_bits.data();
  }
  std::size_t claimed_count = 0;

  double total = 0.0;
  std::size_t j = 0;
  for (double s : obs) {
    while (j < m && pred[j] < s) ++j;
    const std::size_t hi = j < m ? j : 0;
    const double hi_val = j < m ? pred[j] : pred[0] + kTwoPi;
    const std::size_t lo = j > 0 ? j - 1 : m - 1;
    const double lo_val = j > 0 ? pred[j - 1] : pred[m - 1] - kTwoPi;
    const double d_hi = hi_val - s;
    const double d_lo = s - lo_val;
    const std::size_t pick = d_lo <= d_hi ? lo : hi;
    const double d = std::min(d_lo, d_hi);
    const double d2 = d * d;
    if (d2 < gate2) {
      total += d2;
      std::uint64_t& word = claimed[pick / 64];
      const std::uint64_t bit = std::uint64_t{1} << (pick % 64);
      if ((word & bit) == 0) {
        word |= bit;
        ++claimed_count;
      }
    } else {
      total += gate2;
    }
  }
  if (penalize_unpaired) total += gate2 * static_cast<double>(m - claimed_count);
  return total;
}

namespace {

/// Lattice cost of every point; +inf where the lattice is singular.
std::vector<double> lattice_costs(const LatticeTable& table, const features::AdoaVector& observed,
                                  const BootstrapConfig& config) {
  if (observed.valid_count <= 0) throw NoFix("empty observation");
  std::vector<double> obs = observed_sweeps(observed);
  std::sort(obs.begin(), obs.end());
  const std::optional<HeadingArc> arc = heading_arc(observed);
  std::vector<double> costs(table.size(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (!table.valid(i)) continue;
    double c = lattice_cost(obs, table.sweeps(i), config.association_gate_rad, table.penalize_unpaired());
    if (arc) {
      const double off = heading_offset(table.reference_bearing(i), *arc);
      c += off * off;
    }
    costs[i] = c;
  }
  return costs;
}

GridResult best_of(const LatticeTable& table, const std::vector<double>& costs, const BootstrapConfig& config) {
  GridResult best;
  best.cost = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < costs.size(); ++i)
    if (costs[i] < best.cost) {
      best.cost = costs[i];
      best.lattice_index = i;
    }
  if (!std::isfinite(best.cost)) throw NoFix("every lattice point is singular");
  best.position = table.point(best.lattice_index);

  std::size_t valid = 0, near = 0;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    if (!table.valid(i)) continue;
    ++valid;
    if (costs[i] <= best.cost + config.ambiguity_tol) ++near;
  }
  best.ambiguous = static_cast<double>(near) > config.ambiguity_fraction * static_cast<double>(valid);
  return best;
}

}  // namespace

GridResult grid_search_rx(const LatticeTable& table, const features::AdoaVector& observed,
                          const BootstrapConfig& config) {
  return best_of(table, lattice_costs(table, observed, config), config);
}

std::vector<GridResult> grid_candidates(const LatticeTable& table, const features::AdoaVector& observed,
                                        const BootstrapConfig& config, int count, double separation) {
  const std::vector<double> costs = lattice_costs(table, observed, config);
  std::vector<GridResult> out{best_of(table, costs, config)};
  if (count <= 1) return out;

  // local minima over the 8-neighbourhood; ties go to the lower index
  const auto n = static_cast<std::ptrdiff_t>(table.points_per_axis());
  std::vector<std::size_t> minima;
  for (std::ptrdiff_t iy = 0; iy < n; ++iy)
    for (std::ptrdiff_t ix = 0; ix < n; ++ix) {
      const auto i = static_cast<std::size_t>(iy * n + ix);
      if (!std::isfinite(costs[i])) continue;
      bool is_min = true;
      for (std::ptrdiff_t dy = -1; dy <= 1 && is_min; ++dy)
        for (std::ptrdiff_t dx = -1; dx <= 1 && is_min; ++dx) {
          const std::ptrdiff_t jx = ix + dx, jy = iy + dy;
          if ((dx == 0 && dy == 0) || jx < 0 || jy < 0 || jx >= n || jy >= n) continue;
          const auto j = static_cast<std::size_t>(jy * n + jx);
          if (costs[j] < costs[i] || (costs[j] == costs[i] && j < i)) is_min = false;
        }
      if (is_min) minima.push_back(i);
    }
  std::sort(minima.begin(), minima.end(), [&](std::size_t a, std::size_t b) {
    return costs[a] != costs[b] ? costs[a] < costs[b] : a < b;
  });
  for (std::size_t i : minima) {
    if (static_cast<int>(out.size()) >= count) break;
    const Vec2 p = table.point(i);
    const bool far = std::all_of(out.begin(), out.end(),
                                 [&](const GridResult& g) { return distance(g.position, p) >= separation; });
    if (!far) continue;
    out.push_back({p, costs[i], i, out.front().ambiguous});
  }
  return out;
}

GridResult grid_search_rx(const AnchorMap& anchors, const features::AdoaVector& observed, const BoundingBox& bbox,
                          const BootstrapConfig& config, const RoomModel* room) {
  if (observed.valid_count <= 0) throw NoFix("empty observation");
  const LatticeTable table(anchors, bbox, config.grid_points_per_axis, room);
  return grid_search_rx(table, observed, config);
}

RefineResult refine_rx(Vec2 rx0, const AnchorMap& anchors, const features::AdoaVector& observed,
                       const Association& association, const BootstrapConfig& config) {
  const std::optional<HeadingArc> arc = heading_arc(observed);
  auto residual_at = [&](Vec2 p) {
    if (singular_at(p, anchors, association)) return std::numeric_limits<double>::infinity();
    return adoa_residual(p, anchors, observed, association) + heading_term(p, anchors, association, arc);
  };
  RefineResult out;
  out.position = rx0;
  out.residual = adoa_residual(rx0, anchors, observed, association) + heading_term(rx0, anchors, association, arc);

  for (int it = 0; it < config.max_refine_iterations; ++it) {
    const Vec2 rx = out.position;
    const Vec2 ref_pos = anchors[static_cast<std::size_t>(association.reference)].position;
    const double ref = bearing_rad(rx, ref_pos);
    const Vec2 g_ref = bearing_grad_rx(rx, ref_pos);
    Normal2 ne;
    for (int k = 0; k < observed.valid_count; ++k) {
      const int idx = association.feature_anchor[static_cast<std::size_t>(k)];
      if (idx < 0) continue;
      const Vec2 a = anchors[static_cast<std::size_t>(idx)].position;
      const double r = wrap_rad_pi(observed.values[static_cast<std::size_t>(k)] - (bearing_rad(rx, a) - ref));
      const Vec2 g = bearing_grad_rx(rx, a);
      ne.add({-(g.x - g_ref.x), -(g.y - g_ref.y)}, r);
    }
    if (arc) ne.add(g_ref, heading_offset(ref, *arc));
    Vec2 step = ne.solve();
    const double full = norm(step);
    if (!(full > config.refine_step_tol)) break;

    bool accepted = false;
    for (int h = 0; h < kMaxHalvings; ++h) {
      const Vec2 cand = rx + step;
      const double f = residual_at(cand);
      if (f < out.residual) {
        out.position = cand;
        out.residual = f;
        accepted = true;
        break;
      }
      step = 0.5 * step;
    }
    out.iterations = it + 1;
    if (!accepted) {
      if (it == 0 && full > config.convergence_tol) out.diverged = true;
      break;
    }
    if (norm(step) < config.refine_step_tol) break;
  }
  return out;
}

AnchorRefineResult refine_anchors(std::span<const AnchorObservation> observations, const AnchorMap& anchors0,
                                  const BootstrapConfig& config) {
  if (observations.size() < 2) throw std::invalid_argument("anchor refinement needs at least two estimates");
  AnchorRefineResult out{anchors0, {}};
  AnchorMap& anchors = out.anchors;

  auto is_gauge = [&](int id) {
    return std::any_of(config.gauge_anchors.begin(), config.gauge_anchors.end(),
                       [&](const GaugeAnchor& g) { return g.id == id; });
  };

  for (std::size_t ai = 0; ai < anchors.size(); ++ai) {
    if (is_gauge(anchors[ai].id)) continue;
    const int a_idx = static_cast<int>(ai);

    std::size_t observers = 0;
    for (const AnchorObservation& o : observations) {
      const auto& fa = o.association->feature_anchor;
      if (o.association->reference == a_idx || std::find(fa.begin(), fa.end(), a_idx) != fa.end()) ++observers;
    }
    if (observers < 2) {
      out.under_observed.push_back(anchors[ai].id);
      continue;
    }

    // stacked residual of every term that involves this anchor
    auto stacked = [&](Vec2 pos, Normal2* ne) {
      double total = 0.0;
      for (const AnchorObservation& o : observations) {
        const Association& as = *o.association;
        const bool is_ref = as.reference == a_idx;
        const Vec2 ref_pos = is_ref ? pos : anchors[static_cast<std::size_t>(as.reference)].position;
        if (is_ref && distance(o.rx, pos) < kSingularRadius) return std::numeric_limits<double>::infinity();
        const double ref = bearing_rad(o.rx, ref_pos);
        for (int k = 0; k < o.observed->valid_count; ++k) {
          const int idx = as.feature_anchor[static_cast<std::size_t>(k)];
          if (idx < 0 || (!is_ref && idx != a_idx)) continue;
          const Vec2 apos = idx == a_idx ? pos : anchors[static_cast<std::size_t>(idx)].position;
          if (distance(o.rx, apos) < kSingularRadius) return std::numeric_limits<double>::infinity();
          const double r =
              wrap_rad_pi(o.observed->values[static_cast<std::size_t>(k)] - (bearing_rad(o.rx, apos) - ref));
          total += r * r;
          if (ne != nullptr) {
            // d(bearing)/d(anchor) = -d(bearing)/d(rx)
            const Vec2 g = bearing_grad_rx(o.rx, pos);
            const Vec2 j = is_ref ? Vec2{-g.x, -g.y} : g;
            ne->add(j, r);
          }
        }
      }
      return total;
    };

    Vec2 pos = anchors[ai].position;
    double f = stacked(pos, nullptr);
    for (int it = 0; it < config.max_refine_iterations; ++it) {
      Normal2 ne;
      stacked(pos, &ne);
      Vec2 step = ne.solve();
      if (!(norm(step) > config.refine_step_tol)) break;
      bool accepted = false;
      for (int h = 0; h < kMaxHalvings; ++h) {
        const Vec2 cand = pos + step;
        const double fc = stacked(cand, nullptr);
        if (fc < f) {
          pos = cand;
          f = fc;
          accepted = true;
          break;
        }
        step = 0.5 * step;
      }
      if (!accepted || norm(step) < config.refine_step_tol) break;
    }
    anchors[ai].position = pos;
  }
  return out;
}

AnchorMap initial_anchor_map(const BootstrapConfig& config, const RoomModel* room) {
  std::vector<Anchor> anchors;
  for (const GaugeAnchor& g : config.gauge_anchors) anchors.push_back({g.id, g.position, true});
  if (room != nullptr) {
    for (const sim::Transmitter& tx : room->transmitters) {
      const int key = sim::anchor_key(tx.id, -1);
      if (std::none_of(anchors.begin(), anchors.end(), [&](const Anchor& a) { return a.id == key; }))
        anchors.push_back({key, tx.position, true});
    }
    for (const sim::Transmitter& tx : room->transmitters) {
      // mirror the gauge estimate of the transmitter when one is pinned
      Vec2 origin = tx.position;
      for (const GaugeAnchor& g : config.gauge_anchors)
        if (g.id == sim::anchor_key(tx.id, -1)) origin = g.position;
      for (std::size_t w = 0; w < room->room.walls().size(); ++w)
        anchors.push_back({sim::anchor_key(tx.id, static_cast<int>(w)), sim::mirror_anchor(origin, room->room.walls()[w]),
                           false});
    }
  }
  for (const Anchor& a : config.initial_anchors)
    if (std::none_of(anchors.begin(), anchors.end(), [&](const Anchor& b) { return b.id == a.id; }))
      anchors.push_back(a);
  return AnchorMap(std::move(anchors));
}

BoundingBox search_bbox(const BootstrapConfig& config, const RoomModel* room) {
  if (config.bbox) return *config.bbox;
  if (room != nullptr) return room->room.bounds();
  std::vector<Vec2> pts;
  for (const GaugeAnchor& g : config.gauge_anchors) pts.push_back(g.position);
  if (pts.size() < 2) throw std::invalid_argument("search box needs a room model or at least two gauge anchors");
  BoundingBox box = bounding_box(pts);
  const double mx = 0.25 * box.width();
  const double my = 0.25 * box.height();
  box.min = box.min - Vec2{mx, my};
  box.max = box.max + Vec2{mx, my};
  if (!(box.width() > 0.0 && box.height() > 0.0)) throw std::invalid_argument("gauge anchors are collinear on an axis");
  return box;
}

BootstrapResult jade_localize(std::span<const SnapshotFeatures> dataset, const BootstrapConfig& config,
                              const RoomModel* room) {
  if (dataset.empty()) throw NoFix("bootstrap dataset is empty");
  BootstrapResult result;
  result.anchors = initial_anchor_map(config, room);
  result.under_determined = dataset.size() < 2;
  const bool penalize = room != nullptr;
  const BoundingBox bbox = search_bbox(config, room);
  const LatticeTable table(result.anchors, bbox, config.grid_points_per_axis, room);

  const std::size_t n = dataset.size();
  std::vector<Association> assoc(n);
  std::vector<double> obj(n, 0.0);
  result.estimates.resize(n);

  // associate, refine, and repeat until the pairing stops changing
  auto settle = [&](const features::AdoaVector& f, Vec2 start, Association& a_out, RefineResult& r_out) {
    Vec2 pos = start;
    Association a = associate_anchors(f, result.anchors, pos, room, config.association_gate_rad);
    RefineResult r{pos, 0.0, 0, false};
    for (int round = 0; round < kAssociationRounds; ++round) {
      r = refine_rx(pos, result.anchors, f, a, config);
      pos = r.position;
      Association next;
      try {
        next = associate_anchors(f, result.anchors, pos, room, config.association_gate_rad);
      } catch (const AssociationError&) {
        // refined past a wall or onto an anchor; the current pairing stands
        break;
      }
      if (next.feature_anchor == a.feature_anchor && next.reference == a.reference) {
        a = std::move(next);
        break;
      }
      a = std::move(next);
      r.residual = adoa_residual(pos, result.anchors, f, a);
    }
    a_out = std::move(a);
    r_out = r;
  };

  for (std::size_t i = 0; i < n; ++i) {
    BootstrapEstimate& est = result.estimates[i];
    const features::AdoaVector& f = dataset[i].features;
    est.snapshot_id = dataset[i].snapshot_id;
    est.fixed = false;
    if (f.valid_count <= 0) continue;
    try {
      const auto starts =
          grid_candidates(table, f, config, std::max(1, config.start_candidates), config.candidate_separation);
      est.position = starts.front().position;
      est.ambiguous = starts.front().ambiguous || result.under_determined;
      double best = std::numeric_limits<double>::infinity();
      for (const GridResult& g : starts) {
        Association a;
        RefineResult r;
        try {
          settle(f, g.position, a, r);
        } catch (const AssociationError&) {
          continue;
        }
        const double o = safe_objective(r.position, result.anchors, f, a, config, penalize);
        if (o < best) {
          best = o;
          est.position = r.position;
          est.refine_diverged = r.diverged;
          assoc[i] = std::move(a);
        }
      }
      if (!std::isfinite(best)) continue;
      est.fixed = assoc[i].paired_count() >= 2;
      obj[i] = best;
    } catch (const NoFix&) {
      est.fixed = false;
    } catch (const AssociationError&) {
      est.fixed = false;
    } catch (const SingularGeometry&) {
      est.fixed = false;
    }
  }

  auto fixed_indices = [&] {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i)
      if (result.estimates[i].fixed) idx.push_back(i);
    return idx;
  };
  auto total_objective = [&] {
    double t = 0.0;
    for (std::size_t i : fixed_indices()) t += obj[i];
    return t;
  };

  if (fixed_indices().empty()) throw NoFix("no snapshot could be localized");
  result.objective_history.push_back(total_objective());

  if (!result.under_determined) {
    for (int it = 0; it < config.max_outer_iterations; ++it) {
      const auto fixed = fixed_indices();
      if (fixed.size() < 2) break;

      std::vector<AnchorObservation> views;
      views.reserve(fixed.size());
      for (std::size_t i : fixed) views.push_back({result.estimates[i].position, &dataset[i].features, &assoc[i]});
      AnchorRefineResult ar = refine_anchors(views, result.anchors, config);
      result.anchors = std::move(ar.anchors);
      result.under_observed_anchors = std::move(ar.under_observed);

      double moved = 0.0;
      for (std::size_t i : fixed) {
        const features::AdoaVector& f = dataset[i].features;
        BootstrapEstimate& est = result.estimates[i];
        const double current = safe_objective(est.position, result.anchors, f, assoc[i], config, penalize);
        obj[i] = current;
        try {
          Association a;
          RefineResult r;
          settle(f, est.position, a, r);
          const double candidate = objective(r.position, result.anchors, f, a, config, penalize);
          if (candidate <= current && a.paired_count() >= 2) {
            moved += distance(r.position, est.position);
            est.position = r.position;
            assoc[i] = std::move(a);
            obj[i] = candidate;
          }
        } catch (const AssociationError&) {
        } catch (const SingularGeometry&) {
        }
      }
      result.objective_history.push_back(total_objective());
      result.outer_iterations = it + 1;
      if (moved / static_cast<double>(fixed.size()) < config.convergence_tol) break;
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    BootstrapEstimate& est = result.estimates[i];
    if (!est.fixed) continue;
    const int paired = assoc[i].paired_count();
    est.residual = paired > 0 ? adoa_residual(est.position, result.anchors, dataset[i].features, assoc[i]) / paired : 0.0;
  }
  return result;
}

TrimResult trim_outliers(std::span<const BootstrapEstimate> estimates, double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw std::invalid_argument("trim fraction must lie in [0, 1)");
  TrimResult out;
  const std::size_t n = estimates.size();
  const auto drop = static_cast<std::size_t>(std::max(0.0, std::ceil(fraction * static_cast<double>(n) - 1e-9)));
  if (drop == 0 || n == 0) {
    out.kept.assign(estimates.begin(), estimates.end());
    return out;
  }

  double mx = 0.0, my = 0.0;
  for (const auto& e : estimates) {
    mx += e.position.x;
    my += e.position.y;
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& e : estimates) {
    const double dx = e.position.x - mx, dy = e.position.y - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  sxx /= static_cast<double>(n);
  sxy /= static_cast<double>(n);
  syy /= static_cast<double>(n);
  const double det = sxx * syy - sxy * sxy;
  const double scale = std::max(sxx + syy, std::numeric_limits<double>::min());
  out.euclidean_fallback = !(det > 1e-12 * scale * scale);

  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = estimates[i].position.x - mx, dy = estimates[i].position.y - my;
    dist[i] = out.euclidean_fallback ? dx * dx + dy * dy : (syy * dx * dx - 2.0 * sxy * dx * dy + sxx * dy * dy) / det;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dist[a] != dist[b]) return dist[a] > dist[b];
    return estimates[a].snapshot_id > estimates[b].snapshot_id;
  });
  std::vector<char> dropped(n, 0);
  for (std::size_t k = 0; k < std::min(drop, n); ++k) dropped[order[k]] = 1;
  for (std::size_t i = 0; i < n; ++i) (dropped[i] ? out.dropped : out.kept).push_back(estimates[i]);
  return out;
}

}  // namespace astnn::bootstrap
