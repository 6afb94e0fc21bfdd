#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "p2c/consistency.hpp"
#include "p2c/domain.hpp"
#include "p2c/error.hpp"

namespace p2c {

enum class CostMode { p2c, all_changes };

inline const char* to_string(CostMode m) { return m == CostMode::p2c ? "p2c" : "all-changes"; }

using WeightVector = std::vector<double>;

inline WeightVector config_weights(const DatasetConfig& cfg) {
  WeightVector w;
  for (const auto& f : cfg.features) w.push_back(f.weight);
  return w;
}

/// Per-feature difference: 0/1 for categorical values, range-normalised
/// absolute difference for numeric ones.
inline double feature_difference(const FeatureSpec& f, std::size_t a, std::size_t b) {
  if (a == b) return 0.0;
  if (!f.numeric()) return 1.0;
  double width = f.width();
  if (width <= 0) return 1.0;
  return std::fabs(f.domain[a].number - f.domain[b].number) / width;
}

/// Running weighted Lp sum. L0 counts features with positive weight and
/// positive difference; L2 takes the root only when read.
class LpSum {
 public:
  explicit LpSum(int p) : p_(p) {
    if (p < 0 || p > 2) throw ValidationError("norm must be 0, 1 or 2");
  }
  void add(double w, double d) {
    switch (p_) {
      case 0:
        if (w > 0 && d > 0) acc_ += 1.0;
        break;
      case 1:
        acc_ += w * d;
        break;
      default:
        acc_ += w * d * d;
    }
  }
  double raw() const { return acc_; }
  double value() const { return p_ == 2 ? std::sqrt(acc_) : acc_; }
  static double finish(int p, double raw) { return p == 2 ? std::sqrt(raw) : raw; }

 private:
  int p_;
  double acc_ = 0.0;
};

inline double compute_weighted_lp(const State& a, const State& b, const WeightVector& w, int p,
                                  const DatasetConfig& cfg) {
  if (a.size() != cfg.features.size() || b.size() != cfg.features.size() || w.size() != cfg.features.size())
    throw ValidationError("compute_weighted_lp: state, weights and config disagree on feature count");
  LpSum sum(p);
  for (std::size_t f = 0; f < a.size(); ++f) {
    if (a[f] >= cfg.features[f].domain.size() || b[f] >= cfg.features[f].domain.size())
      throw ValidationError("compute_weighted_lp: value index outside domain of '" + cfg.features[f].name + "'");
    sum.add(w[f], feature_difference(cfg.features[f], a[f], b[f]));
  }
  return sum.value();
}

struct AdjustedWeights {
  WeightVector weights;
  std::vector<std::size_t> causal_free;  // feature indices, ascending
};

/// True when changing `f` from source to target is compelled by the causal
/// rules given the target's other features.
inline bool causally_compelled(const CausalModel& causal, const State& source, const State& target, std::size_t f) {
  if (source[f] == target[f] || !causal.is_head(f)) return false;
  State probe = target;
  probe[f] = source[f];
  Entailment e = causal.entailment(f, probe);
  return e.kind == EntailmentKind::value && e.required == target[f];
}

/// Zeroes the weight of every changed feature whose new value the causal
/// rules compel.
inline AdjustedWeights adjust_weights(const State& source, const State& target, const CausalModel& causal,
                                      WeightVector w) {
  AdjustedWeights out;
  for (std::size_t f = 0; f < target.size(); ++f)
    if (causally_compelled(causal, source, target, f)) {
      w[f] = 0.0;
      out.causal_free.push_back(f);
    }
  out.weights = std::move(w);
  return out;
}

struct CostReport {
  State target;
  double cost = 0.0;
  int p = 1;
  CostMode mode = CostMode::p2c;
  WeightVector adjusted_weights;
  std::vector<std::size_t> causal_free;
};

/// Values each feature may take in a counterfactual of `i`: immutable and
/// frozen features stay put, monotone features move one way only.
inline std::vector<std::vector<std::size_t>> plausible_values(const Problem& prob, const State& i) {
  std::vector<std::vector<std::size_t>> box(prob.nfeatures());
  for (std::size_t f = 0; f < prob.nfeatures(); ++f) {
    const FeatureSpec& fs = prob.feature(f);
    if (!fs.is_mutable || (!fs.directly_actionable && !prob.causal.is_head(f))) {
      box[f] = {i[f]};
      continue;
    }
    for (std::size_t v = 0; v < fs.domain.size(); ++v) {
      double cur = fs.numeric() ? fs.domain[i[f]].number : static_cast<double>(i[f]);
      double nxt = fs.numeric() ? fs.domain[v].number : static_cast<double>(v);
      if (fs.monotone == Monotone::nondecreasing && nxt < cur) continue;
      if (fs.monotone == Monotone::nonincreasing && nxt > cur) continue;
      box[f].push_back(v);
    }
  }
  return box;
}

/// A changed feature that cannot be set directly must be a compelled change.
inline bool reachable_change(const Problem& prob, const State& i, const State& s, const AdjustedWeights& adj) {
  for (std::size_t f = 0; f < s.size(); ++f) {
    if (s[f] == i[f] || prob.feature(f).directly_actionable) continue;
    if (!std::binary_search(adj.causal_free.begin(), adj.causal_free.end(), f)) return false;
  }
  return true;
}

inline void check_initial_state(const Problem& prob, const State& i) {
  if (i.size() != prob.nfeatures()) throw ValidationError("initial state has the wrong number of features");
  if (!prob.causal.consistent(i))
    throw InvalidInitialState("initial state violates the causal rules: " + describe(prob.config, i));
  if (!prob.decision.rejects(i)) throw InvalidInitialState("initial state is already in the goal set");
}

/// Prices one goal state under `mode`, or nullopt when it is not a
/// plausible counterfactual of `i`.
inline std::optional<CostReport> price_candidate(const Problem& prob, const State& i, const State& s,
                                                 const WeightVector& w, int p, CostMode mode) {
  if (!prob.in_goal(s)) return std::nullopt;
  AdjustedWeights adj = adjust_weights(i, s, prob.causal, w);
  if (!reachable_change(prob, i, s, adj)) return std::nullopt;
  CostReport r;
  r.target = s;
  r.p = p;
  r.mode = mode;
  r.cost = compute_weighted_lp(i, s, mode == CostMode::p2c ? adj.weights : w, p, prob.config);
  r.adjusted_weights = mode == CostMode::p2c ? std::move(adj.weights) : w;
  r.causal_free = std::move(adj.causal_free);
  return r;
}

inline bool cost_order(const CostReport& a, const CostReport& b) {
  if (a.cost != b.cost) return a.cost < b.cost;
  return a.target < b.target;
}

/// The k cheapest plausible counterfactuals of `i`, ordered by cost then
/// lexicographic state order. Branch and bound over the plausibility box;
/// in p2c mode features that some causal rule governs contribute nothing to
/// the bound, since their change may turn out to be free.
inline std::vector<CostReport> min_cf_k(const Problem& prob, const State& i, const WeightVector& w, int p,
                                        CostMode mode, std::size_t k) {
  check_initial_state(prob, i);
  if (w.size() != prob.nfeatures()) throw ValidationError("weight vector does not cover every feature");
  if (k == 0) return {};
  auto box = plausible_values(prob, i);
  for (std::size_t f = 0; f < box.size(); ++f) {
    const FeatureSpec& fs = prob.feature(f);
    std::stable_sort(box[f].begin(), box[f].end(), [&](std::size_t a, std::size_t b) {
      return feature_difference(fs, i[f], a) < feature_difference(fs, i[f], b);
    });
  }
  std::vector<CostReport> best;
  State cur = i;
  const std::size_t n = prob.nfeatures();

  auto bound_exceeded = [&](double raw) {
    return best.size() == k && LpSum::finish(p, raw) > best.back().cost;
  };
  auto dfs = [&](auto&& self, std::size_t f, double raw) -> void {
    if (bound_exceeded(raw)) return;
    if (f == n) {
      auto r = price_candidate(prob, i, cur, w, p, mode);
      if (!r) return;
      if (best.size() == k && !cost_order(*r, best.back())) return;
      auto pos = std::upper_bound(best.begin(), best.end(), *r, cost_order);
      best.insert(pos, std::move(*r));
      if (best.size() > k) best.pop_back();
      return;
    }
    bool may_be_free = mode == CostMode::p2c && prob.causal.is_head(f);
    for (std::size_t v : box[f]) {
      cur[f] = v;
      double d = feature_difference(prob.feature(f), i[f], v);
      LpSum step(p);
      if (!may_be_free) step.add(w[f], d);
      self(self, f + 1, raw + step.raw());
    }
    cur[f] = i[f];
  };
  dfs(dfs, 0, 0.0);
  return best;
}

/// Minimal causally compliant counterfactual of `i`.
inline CostReport min_cf(const Problem& prob, const State& i, const WeightVector& w, int p, CostMode mode) {
  auto r = min_cf_k(prob, i, w, p, mode, 1);
  if (r.empty()) throw NoCounterfactual("no plausible counterfactual exists for " + describe(prob.config, i));
  return std::move(r.front());
}

// ---------------------------------------------------------------------------
// k nearest points of a product space

/// One dimension of a product space: distance of each coordinate value to
/// the query coordinate, and the dimension's weight.
struct Dimension {
  std::vector<double> dist;
  double weight = 1.0;
};

struct Neighbor {
  std::vector<std::size_t> point;  // value index per dimension
  double distance = 0.0;

  bool operator==(const Neighbor&) const = default;
};

namespace detail {

/// Value indices of each dimension ordered by closeness, then index.
inline std::vector<std::vector<std::size_t>> closeness_order(const std::vector<Dimension>& dims) {
  std::vector<std::vector<std::size_t>> out;
  for (const auto& d : dims) {
    std::vector<std::size_t> idx(d.dist.size());
    for (std::size_t j = 0; j < idx.size(); ++j) idx[j] = j;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return d.dist[a] < d.dist[b]; });
    out.push_back(std::move(idx));
  }
  return out;
}

inline std::vector<Neighbor> nearest_in_product(const std::vector<Dimension>& dims,
                                                const std::vector<std::vector<std::size_t>>& candidates,
                                                const std::vector<std::vector<std::size_t>>& rank, std::size_t k,
                                                int p) {
  std::vector<Neighbor> all;
  for (const auto& c : candidates)
    if (c.empty()) return {};
  std::vector<std::size_t> pos(dims.size(), 0);
  bool more = true;
  while (more) {
    Neighbor nb;
    LpSum sum(p);
    for (std::size_t i = 0; i < dims.size(); ++i) {
      std::size_t v = candidates[i][pos[i]];
      nb.point.push_back(v);
      sum.add(dims[i].weight, dims[i].dist[v]);
    }
    nb.distance = sum.value();
    all.push_back(std::move(nb));
    more = false;
    for (std::size_t i = dims.size(); i-- > 0;) {
      if (++pos[i] < candidates[i].size()) {
        more = true;
        break;
      }
      pos[i] = 0;
    }
  }
  auto less = [&](const Neighbor& a, const Neighbor& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    for (std::size_t i = 0; i < dims.size(); ++i)
      if (rank[i][a.point[i]] != rank[i][b.point[i]]) return rank[i][a.point[i]] < rank[i][b.point[i]];
    return false;
  };
  std::size_t keep = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), less);
  all.resize(keep);
  return all;
}

inline std::vector<std::vector<std::size_t>> ranks_of(const std::vector<std::vector<std::size_t>>& order) {
  std::vector<std::vector<std::size_t>> rank;
  for (const auto& o : order) {
    std::vector<std::size_t> r(o.size());
    for (std::size_t j = 0; j < o.size(); ++j) r[o[j]] = j;
    rank.push_back(std::move(r));
  }
  return rank;
}

}  // namespace detail

/// k nearest points of the product space. Each dimension is first trimmed
/// to its k closest values; ties are broken by per-dimension closeness
/// rank, which makes the trimmed and exhaustive answers identical.
inline std::vector<Neighbor> knearest_trimmed(const std::vector<Dimension>& dims, std::size_t k, int p) {
  if (k == 0) throw ValidationError("k must be at least 1");
  auto order = detail::closeness_order(dims);
  auto rank = detail::ranks_of(order);
  for (auto& o : order)
    if (o.size() > k) o.resize(k);
  return detail::nearest_in_product(dims, order, rank, k, p);
}

inline std::uint64_t oracle_cap_from_env() {
  if (const char* s = std::getenv("P2C_ORACLE_CAP")) {
    char* end = nullptr;
    unsigned long long v = std::strtoull(s, &end, 10);
    if (end && *end == '\0' && v > 0) return v;
  }
  return 100000;
}

/// Exhaustive scan with the same ordering contract as knearest_trimmed.
inline std::vector<Neighbor> brute_force_knearest(const std::vector<Dimension>& dims, std::size_t k, int p,
                                                  std::uint64_t cap = oracle_cap_from_env()) {
  if (k == 0) throw ValidationError("k must be at least 1");
  std::uint64_t size = 1;
  for (const auto& d : dims)
    if (__builtin_mul_overflow(size, static_cast<std::uint64_t>(d.dist.size()), &size) || size > cap)
      throw ValidationError("space too large for the brute-force oracle (cap " + std::to_string(cap) + ")");
  auto order = detail::closeness_order(dims);
  auto rank = detail::ranks_of(order);
  std::vector<std::vector<std::size_t>> all;
  for (const auto& d : dims) {
    std::vector<std::size_t> idx(d.dist.size());
    for (std::size_t j = 0; j < idx.size(); ++j) idx[j] = j;
    all.push_back(std::move(idx));
  }
  return detail::nearest_in_product(dims, all, rank, k, p);
}

/// Dimensions of `cfg` seen from query state `q`, restricted to `allowed`
/// values per feature when given.
inline std::vector<Dimension> state_dimensions(const DatasetConfig& cfg, const State& q, const WeightVector& w,
                                               const std::vector<std::vector<std::size_t>>* allowed = nullptr) {
  std::vector<Dimension> dims;
  for (std::size_t f = 0; f < cfg.features.size(); ++f) {
    Dimension d;
    d.weight = w[f];
    if (allowed)
      for (auto v : (*allowed)[f]) d.dist.push_back(feature_difference(cfg.features[f], q[f], v));
    else
      for (std::size_t v = 0; v < cfg.features[f].domain.size(); ++v)
        d.dist.push_back(feature_difference(cfg.features[f], q[f], v));
    dims.push_back(std::move(d));
  }
  return dims;
}

inline std::vector<std::pair<State, double>> to_states(const std::vector<Neighbor>& nbs,
                                                       const std::vector<std::vector<std::size_t>>* allowed) {
  std::vector<std::pair<State, double>> out;
  for (const auto& nb : nbs) {
    State s;
    for (std::size_t f = 0; f < nb.point.size(); ++f)
      s.values.push_back(allowed ? (*allowed)[f][nb.point[f]] : nb.point[f]);
    out.emplace_back(std::move(s), nb.distance);
  }
  return out;
}

inline std::vector<std::pair<State, double>> knearest_trimmed(const DatasetConfig& cfg, const State& q,
                                                              std::size_t k, int p) {
  return to_states(knearest_trimmed(state_dimensions(cfg, q, config_weights(cfg)), k, p), nullptr);
}

inline std::vector<std::pair<State, double>> brute_force_knearest(const DatasetConfig& cfg, const State& q,
                                                                  std::size_t k, int p,
                                                                  std::uint64_t cap = oracle_cap_from_env()) {
  return to_states(brute_force_knearest(state_dimensions(cfg, q, config_weights(cfg)), k, p, cap), nullptr);
}

/// The k cheapest counterfactuals. All-changes cost is separable, so it
/// runs the trimmed k-nearest search over the plausibility box with a
/// doubling k until k goal states appear; p2c cost is not separable and
/// uses branch and bound. Output is ordered by cost, then state.
inline std::vector<CostReport> k_counterfactuals(const Problem& prob, const State& i, const WeightVector& w, int p,
                                                 CostMode mode, std::size_t k) {
  if (mode == CostMode::p2c) return min_cf_k(prob, i, w, p, mode, k);
  check_initial_state(prob, i);
  auto box = plausible_values(prob, i);
  auto dims = state_dimensions(prob.config, i, w, &box);
  std::uint64_t box_size = 1;
  for (const auto& b : box) box_size = box_size * b.size();
  std::vector<CostReport> out;
  for (std::uint64_t probe = k;; probe *= 2) {
    out.clear();
    auto nbs = to_states(knearest_trimmed(dims, static_cast<std::size_t>(probe), p), &box);
    for (auto& [s, d] : nbs)
      if (auto r = price_candidate(prob, i, s, w, p, mode)) out.push_back(std::move(*r));
    std::stable_sort(out.begin(), out.end(), cost_order);
    if (probe >= box_size) break;
    // done once every state tied with the k-th goal state has been seen
    if (out.size() >= k && nbs.back().second > out[k - 1].cost) break;
  }
  if (out.size() > k) out.resize(k);
  return out;
}

}  // namespace p2c
