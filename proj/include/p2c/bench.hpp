#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "p2c/consistency.hpp"
#include "p2c/dataset.hpp"
#include "p2c/domain.hpp"
#include "p2c/planner.hpp"
#include "p2c/search.hpp"

namespace p2c {

struct BenchOptions {
  std::size_t instances = 20;
  std::uint64_t seed = 7;
  std::size_t repeats = 5;  // timing repeats per instance; the median is kept
  std::size_t max_dpl = 0;
};

inline constexpr std::array<CostMode, 2> kCostModes{CostMode::p2c, CostMode::all_changes};
inline constexpr std::array<int, 3> kNorms{0, 1, 2};

struct InstanceResult {
  std::size_t index = 0;
  RawInstance instance;
  std::string error;  // empty on success
  std::uint64_t space_size = 0;
  std::uint64_t reduced_size = 0;
  // cost[mode][norm] on the full and consolidated spaces
  std::array<std::array<double, 3>, 2> cost{};
  std::array<std::array<double, 3>, 2> reduced_cost{};
  bool cost_preserved = true;
  double time_ms = 0;
  double reduced_time_ms = 0;
  bool path_found = false;
  bool path_legal = false;
  std::size_t path_illegal_actions = 0;
  bool path_ends_at_target = false;
  std::string path_error;
  bool naive_legal = false;
  std::size_t naive_illegal_actions = 0;
};

struct DistanceStats {
  double nearest = 0;
  double furthest = 0;
  double average = 0;
};

struct BenchmarkRow {
  std::string dataset;
  std::size_t instances = 0;
  std::uint64_t seed = 0;
  std::uint64_t space_size = 0;
  std::uint64_t reduced_size = 0;
  double avg_time_ms = 0;
  double reduced_avg_time_ms = 0;
  std::array<std::array<DistanceStats, 3>, 2> distances{};
  double legality_rate = 0;        // causal planner, over found paths
  double naive_legality_rate = 0;  // naive planner
  std::size_t failures = 0;
  bool all_costs_preserved = true;
  bool all_spaces_reduced = true;
  std::vector<InstanceResult> results;
};

struct BenchmarkSummary {
  std::vector<BenchmarkRow> rows;
};

/// Seeded uniform sample of decision-positive, causally consistent states
/// of the anchor-free space. Enumerates when the space is small and falls
/// back to rejection sampling otherwise.
inline std::vector<State> sample_instances(const Problem& prob, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<State> pool;
  if (search_space_size(prob.config) <= 2'000'000) {
    for (const State& s : enumerate_states(prob.config))
      if (prob.causal.consistent(s) && prob.decision.rejects(s)) pool.push_back(s);
    for (std::size_t i = 0; i < std::min(n, pool.size()); ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(std::min(n, pool.size()));
    return pool;
  }
  std::size_t attempts = 0;
  while (pool.size() < n && attempts++ < 1000 * n) {
    State s;
    for (const auto& f : prob.config.features) {
      std::uniform_int_distribution<std::size_t> pick(0, f.domain.size() - 1);
      s.values.push_back(pick(rng));
    }
    if (prob.causal.consistent(s) && prob.decision.rejects(s) &&
        std::find(pool.begin(), pool.end(), s) == pool.end())
      pool.push_back(std::move(s));
  }
  return pool;
}

template <class F>
double median_ms(std::size_t repeats, F&& f) {
  std::vector<double> t;
  for (std::size_t r = 0; r < std::max<std::size_t>(repeats, 1); ++r) {
    auto start = std::chrono::steady_clock::now();
    f();
    t.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
  }
  std::sort(t.begin(), t.end());
  return t[t.size() / 2];
}

inline std::size_t illegal_action_count(const LegalityReport& r) {
  std::size_t n = 0;
  for (const auto& v : r.violations) n += v.step > 0;
  return n;
}

inline InstanceResult run_instance(const Bundle& b, const RawInstance& raw, std::size_t index,
                                   const BenchOptions& opt) {
  InstanceResult r;
  r.index = index;
  r.instance = raw;
  try {
    Problem full = make_problem(b, &raw, false);
    Problem reduced = make_problem(b, &raw, true);
    State i_full = validate_state(full.config, raw);
    State i_red = validate_state(reduced.config, raw);
    r.space_size = search_space_size(full.config);
    r.reduced_size = search_space_size(reduced.config);
    WeightVector w_full = config_weights(full.config);
    WeightVector w_red = config_weights(reduced.config);
    for (std::size_t m = 0; m < kCostModes.size(); ++m)
      for (std::size_t n = 0; n < kNorms.size(); ++n) {
        r.cost[m][n] = min_cf(full, i_full, w_full, kNorms[n], kCostModes[m]).cost;
        r.reduced_cost[m][n] = min_cf(reduced, i_red, w_red, kNorms[n], kCostModes[m]).cost;
        r.cost_preserved = r.cost_preserved && r.cost[m][n] == r.reduced_cost[m][n];
      }
    int p = b.config.norm_p;
    r.time_ms = median_ms(opt.repeats, [&] { (void)min_cf(full, i_full, w_full, p, CostMode::p2c); });
    r.reduced_time_ms = median_ms(opt.repeats, [&] { (void)min_cf(reduced, i_red, w_red, p, CostMode::p2c); });

    CostReport best = min_cf(full, i_full, w_full, p, CostMode::p2c);
    try {
      Path path = find_path(full, i_full, best.target, {opt.max_dpl, p});
      LegalityReport legal = path_is_legal(path, full);
      r.path_found = true;
      r.path_legal = legal.legal;
      r.path_illegal_actions = illegal_action_count(legal);
      r.path_ends_at_target = path.end() == best.target;
    } catch (const SearchExhausted& e) {
      r.path_error = e.what();
    }
    Path naive = naive_find_path(full, i_full, best.target);
    LegalityReport naive_legal = path_is_legal(naive, full);
    r.naive_legal = naive_legal.legal;
    r.naive_illegal_actions = illegal_action_count(naive_legal);
  } catch (const Error& e) {
    r.error = e.what();
  }
  return r;
}

inline BenchmarkRow run_benchmark(const Bundle& b, const BenchOptions& opt) {
  BenchmarkRow row;
  row.dataset = b.config.name.empty() ? b.config_path.parent_path().filename().string() : b.config.name;
  row.seed = opt.seed;
  Problem base = make_problem(b, nullptr, false);
  Problem base_reduced = make_problem(b, nullptr, true);
  row.space_size = search_space_size(base.config);
  row.reduced_size = search_space_size(base_reduced.config);

  std::vector<State> sample = sample_instances(base, opt.instances, opt.seed);
  for (std::size_t k = 0; k < sample.size(); ++k)
    row.results.push_back(run_instance(b, to_raw(base.config, sample[k]), k, opt));
  std::sort(row.results.begin(), row.results.end(),
            [](const InstanceResult& a, const InstanceResult& c) { return a.index < c.index; });

  std::size_t ok = 0, paths = 0, legal = 0, naive_legal = 0;
  std::array<std::array<std::vector<double>, 3>, 2> costs;
  for (const auto& r : row.results) {
    if (!r.error.empty()) {
      ++row.failures;
      continue;
    }
    ++ok;
    row.avg_time_ms += r.time_ms;
    row.reduced_avg_time_ms += r.reduced_time_ms;
    row.all_costs_preserved = row.all_costs_preserved && r.cost_preserved;
    row.all_spaces_reduced = row.all_spaces_reduced && r.reduced_size < r.space_size;
    if (r.path_found) {
      ++paths;
      legal += r.path_legal;
    }
    naive_legal += r.naive_legal;
    for (std::size_t m = 0; m < 2; ++m)
      for (std::size_t n = 0; n < 3; ++n) costs[m][n].push_back(r.cost[m][n]);
  }
  row.instances = ok;
  if (ok) {
    row.avg_time_ms /= static_cast<double>(ok);
    row.reduced_avg_time_ms /= static_cast<double>(ok);
    row.naive_legality_rate = static_cast<double>(naive_legal) / static_cast<double>(ok);
    for (std::size_t m = 0; m < 2; ++m)
      for (std::size_t n = 0; n < 3; ++n) {
        const auto& c = costs[m][n];
        DistanceStats& d = row.distances[m][n];
        d.nearest = *std::min_element(c.begin(), c.end());
        d.furthest = *std::max_element(c.begin(), c.end());
        double sum = 0;
        for (double x : c) sum += x;
        d.average = sum / static_cast<double>(c.size());
      }
  }
  if (paths) row.legality_rate = static_cast<double>(legal) / static_cast<double>(paths);
  return row;
}

}  // namespace p2c
