#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "p2c/bench.hpp"
#include "p2c/consistency.hpp"
#include "p2c/domain.hpp"
#include "p2c/planner.hpp"
#include "p2c/search.hpp"

namespace p2c {

using nlohmann::ordered_json;

inline std::string norm_name(int p) { return "l" + std::to_string(p); }

/// FNV-1a over the given texts, hex encoded.
inline std::string digest(const std::vector<std::string>& parts) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& s : parts) {
    for (unsigned char c : s) h = (h ^ c) * 1099511628211ull;
    h = (h ^ 0xff) * 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline ordered_json state_json(const DatasetConfig& cfg, const State& s) {
  ordered_json j = ordered_json::object();
  for (std::size_t f = 0; f < s.size(); ++f) j[cfg.features[f].name] = cfg.features[f].domain[s[f]].label;
  return j;
}

inline ordered_json cost_report_json(const Problem& prob, const State& source, const CostReport& r) {
  ordered_json j;
  j["target"] = state_json(prob.config, r.target);
  j["cost"] = r.cost;
  j["norm"] = norm_name(r.p);
  j["cost_mode"] = to_string(r.mode);
  ordered_json w = ordered_json::object();
  for (std::size_t f = 0; f < r.adjusted_weights.size(); ++f) w[prob.feature(f).name] = r.adjusted_weights[f];
  j["adjusted_weights"] = w;
  ordered_json changed = ordered_json::array(), free = ordered_json::array();
  for (std::size_t f = 0; f < source.size(); ++f)
    if (source[f] != r.target[f]) changed.push_back(prob.feature(f).name);
  for (auto f : r.causal_free) free.push_back(prob.feature(f).name);
  j["changed_features"] = changed;
  j["causal_free_features"] = free;
  return j;
}

inline ordered_json action_json(const Problem& prob, const Action& a) {
  ordered_json j;
  const FeatureSpec& f = prob.feature(a.feature);
  j["kind"] = to_string(a.kind);
  j["feature"] = f.name;
  j["old"] = f.domain[a.from].label;
  j["new"] = f.domain[a.to].label;
  if (a.kind == ActionKind::causal) {
    ordered_json rules = ordered_json::array();
    for (auto ri : a.rules) rules.push_back(unparse_rule(prob.causal_rules.rules[ri]));
    j["rules"] = rules;
  }
  return j;
}

inline ordered_json path_json(const Problem& prob, const Path& path) {
  ordered_json steps = ordered_json::array();
  for (const auto& s : path.steps) {
    ordered_json step;
    step["state"] = state_json(prob.config, s.state);
    ordered_json acts = ordered_json::array();
    for (const auto& a : s.actions) acts.push_back(action_json(prob, a));
    step["actions"] = acts;
    steps.push_back(step);
  }
  ordered_json j;
  j["states"] = path.steps.size();
  j["direct_actions"] = path.direct_actions();
  j["steps"] = steps;
  return j;
}

inline ordered_json legality_json(const Problem& prob, const LegalityReport& r) {
  ordered_json j;
  j["legal"] = r.legal;
  ordered_json v = ordered_json::array();
  for (const auto& x : r.violations) {
    ordered_json e;
    e["step"] = x.step;
    if (x.action.feature < prob.nfeatures() && x.action.to < prob.feature(x.action.feature).domain.size() &&
        x.action.from < prob.feature(x.action.feature).domain.size())
      e["action"] = action_json(prob, x.action);
    e["reason"] = x.reason;
    v.push_back(e);
  }
  j["violations"] = v;
  return j;
}

/// Output of one mincf or path run.
struct RunReport {
  std::string command;
  std::string config_digest;
  ordered_json instance;
  ordered_json s_star;
  ordered_json nearest;  // k > 1 listing
  ordered_json path;
  ordered_json legality;
  std::optional<bool> path_ends_at_s_star;
  std::string planner;
  std::uint64_t space_size = 0;
  std::uint64_t reduced_size = 0;
  std::map<std::string, double> timing_ms;
  std::vector<std::string> warnings;

  ordered_json to_json() const {
    ordered_json j;
    j["command"] = command;
    j["config_digest"] = config_digest;
    j["instance"] = instance;
    ordered_json sizes;
    sizes["full"] = space_size;
    sizes["consolidated"] = reduced_size;
    j["search_space"] = sizes;
    if (!s_star.is_null()) j["s_star"] = s_star;
    if (!nearest.is_null()) j["nearest_counterfactuals"] = nearest;
    if (!path.is_null()) {
      j["planner"] = planner;
      j["path"] = path;
      j["legality"] = legality;
      if (path_ends_at_s_star) j["path_ends_at_s_star"] = *path_ends_at_s_star;
    }
    ordered_json t = ordered_json::object();
    for (const auto& [k, v] : timing_ms) t[k] = v;
    j["timing_ms"] = t;
    j["warnings"] = warnings;
    return j;
  }

  std::string to_text() const {
    std::ostringstream out;
    out << "command      " << command << "\n";
    out << "config       " << config_digest << "\n";
    out << "instance     " << instance.dump() << "\n";
    out << "space        " << space_size << " states, " << reduced_size << " after consolidation\n";
    if (!s_star.is_null()) {
      out << "s*           " << s_star["target"].dump() << "\n";
      out << "cost         " << s_star["cost"].get<double>() << " (" << s_star["norm"].get<std::string>() << ", "
          << s_star["cost_mode"].get<std::string>() << ")\n";
      out << "changed      " << s_star["changed_features"].dump() << "\n";
      out << "causal-free  " << s_star["causal_free_features"].dump() << "\n";
    }
    if (!nearest.is_null())
      for (std::size_t k = 0; k < nearest.size(); ++k)
        out << "  #" << k + 1 << "  cost " << nearest[k]["cost"].get<double>() << "  "
            << nearest[k]["target"].dump() << "\n";
    if (!path.is_null()) {
      out << "planner      " << planner << "\n";
      std::size_t k = 0;
      for (const auto& step : path["steps"]) {
        for (const auto& a : step["actions"])
          out << "    " << a["kind"].get<std::string>() << " " << a["feature"].get<std::string>() << ": "
              << a["old"].get<std::string>() << " -> " << a["new"].get<std::string>() << "\n";
        out << "  s" << k++ << " " << step["state"].dump() << "\n";
      }
      out << "legal        " << (legality["legal"].get<bool>() ? "yes" : "no") << "\n";
      for (const auto& v : legality["violations"])
        out << "  violation at step " << v["step"].get<std::size_t>() << ": " << v["reason"].get<std::string>()
            << "\n";
      if (path_ends_at_s_star && !*path_ends_at_s_star) out << "note         path ends at a goal state other than s*\n";
    }
    for (const auto& [k, v] : timing_ms) out << "time " << k << " " << v << " ms\n";
    for (const auto& w : warnings) out << "warning: " << w << "\n";
    return out.str();
  }
};

inline ordered_json benchmark_json(const BenchmarkSummary& s) {
  ordered_json rows = ordered_json::array();
  for (const auto& r : s.rows) {
    ordered_json j;
    j["dataset"] = r.dataset;
    j["instances"] = r.instances;
    j["seed"] = r.seed;
    j["space_size"] = r.space_size;
    j["reduced_size"] = r.reduced_size;
    j["avg_time_ms"] = r.avg_time_ms;
    j["reduced_avg_time_ms"] = r.reduced_avg_time_ms;
    ordered_json dist;
    for (std::size_t m = 0; m < kCostModes.size(); ++m)
      for (std::size_t n = 0; n < kNorms.size(); ++n) {
        const DistanceStats& d = r.distances[m][n];
        ordered_json e;
        e["nearest"] = d.nearest;
        e["furthest"] = d.furthest;
        e["average"] = d.average;
        dist[to_string(kCostModes[m])][norm_name(kNorms[n])] = e;
      }
    j["distances"] = dist;
    j["legality_rate"] = r.legality_rate;
    j["naive_legality_rate"] = r.naive_legality_rate;
    j["costs_preserved"] = r.all_costs_preserved;
    j["spaces_reduced"] = r.all_spaces_reduced;
    j["failures"] = r.failures;
    ordered_json inst = ordered_json::array();
    for (const auto& x : r.results) {
      ordered_json e;
      e["index"] = x.index;
      ordered_json raw = ordered_json::object();
      for (const auto& [k, v] : x.instance) raw[k] = v;
      e["instance"] = raw;
      if (!x.error.empty()) {
        e["error"] = x.error;
        inst.push_back(e);
        continue;
      }
      e["space_size"] = x.space_size;
      e["reduced_size"] = x.reduced_size;
      e["cost_preserved"] = x.cost_preserved;
      e["time_ms"] = x.time_ms;
      e["reduced_time_ms"] = x.reduced_time_ms;
      e["path_found"] = x.path_found;
      e["path_legal"] = x.path_legal;
      e["path_ends_at_s_star"] = x.path_ends_at_target;
      if (!x.path_error.empty()) e["path_error"] = x.path_error;
      e["naive_legal"] = x.naive_legal;
      e["naive_illegal_actions"] = x.naive_illegal_actions;
      inst.push_back(e);
    }
    j["per_instance"] = inst;
    rows.push_back(j);
  }
  ordered_json out;
  out["benchmark"] = rows;
  return out;
}

inline std::string benchmark_text(const BenchmarkSummary& s) {
  std::ostringstream out;
  char line[512];
  std::snprintf(line, sizeof line, "%-10s %6s %12s %12s %12s %12s %8s %8s\n", "dataset", "inst", "space", "reduced",
                "time_ms", "red_time_ms", "legal", "naive");
  out << line;
  for (const auto& r : s.rows) {
    std::snprintf(line, sizeof line, "%-10s %6zu %12llu %12llu %12.4f %12.4f %8.2f %8.2f\n", r.dataset.c_str(),
                  r.instances, static_cast<unsigned long long>(r.space_size),
                  static_cast<unsigned long long>(r.reduced_size), r.avg_time_ms, r.reduced_avg_time_ms,
                  r.legality_rate, r.naive_legality_rate);
    out << line;
  }
  out << "\n";
  std::snprintf(line, sizeof line, "%-10s %-12s %-5s %12s %12s %12s\n", "dataset", "mode", "norm", "nearest",
                "furthest", "average");
  out << line;
  for (const auto& r : s.rows)
    for (std::size_t m = 0; m < kCostModes.size(); ++m)
      for (std::size_t n = 0; n < kNorms.size(); ++n) {
        const DistanceStats& d = r.distances[m][n];
        std::snprintf(line, sizeof line, "%-10s %-12s %-5s %12.6f %12.6f %12.6f\n", r.dataset.c_str(),
                      to_string(kCostModes[m]), norm_name(kNorms[n]).c_str(), d.nearest, d.furthest, d.average);
        out << line;
      }
  return out.str();
}

}  // namespace p2c
