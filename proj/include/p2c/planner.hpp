#pragma once

#include <algorithm>
#include <cstddef>
#include <deque>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "p2c/consistency.hpp"
#include "p2c/domain.hpp"
#include "p2c/error.hpp"
#include "p2c/search.hpp"

namespace p2c {

enum class ActionKind { direct, causal };

inline const char* to_string(ActionKind k) { return k == ActionKind::direct ? "direct" : "causal"; }

struct Action {
  ActionKind kind = ActionKind::direct;
  std::size_t feature = 0;
  std::size_t from = 0;
  std::size_t to = 0;
  std::vector<std::size_t> rules;  // causal provenance: firing rule indices

  bool operator==(const Action&) const = default;
};

struct PathStep {
  State state;
  std::vector<Action> actions;  // actions leading here from the previous step
};

struct Path {
  std::vector<PathStep> steps;

  bool empty() const { return steps.empty(); }
  const State& start() const { return steps.front().state; }
  const State& end() const { return steps.back().state; }
  std::size_t direct_actions() const {
    std::size_t n = 0;
    for (const auto& s : steps)
      for (const auto& a : s.actions) n += a.kind == ActionKind::direct;
    return n;
  }
};

/// Why a direct change of `f` from `from` to `to` is implausible, or empty.
inline std::string direct_action_violation(const FeatureSpec& f, std::size_t from, std::size_t to) {
  if (to >= f.domain.size()) return "value outside the domain of '" + f.name + "'";
  if (!f.is_mutable) return "'" + f.name + "' is immutable";
  if (!f.directly_actionable) return "'" + f.name + "' cannot be changed directly";
  double a = f.numeric() ? f.domain[from].number : static_cast<double>(from);
  double b = f.numeric() ? f.domain[to].number : static_cast<double>(to);
  if (f.monotone == Monotone::nondecreasing && b < a) return "'" + f.name + "' cannot decrease";
  if (f.monotone == Monotone::nonincreasing && b > a) return "'" + f.name + "' cannot increase";
  return {};
}

/// Applies one action after checking its plausibility.
inline State apply_action(const Problem& prob, const State& s, const Action& a) {
  if (a.feature >= prob.nfeatures()) throw ValidationError("action names an unknown feature");
  const FeatureSpec& f = prob.feature(a.feature);
  if (a.to >= f.domain.size()) throw ValidationError("value outside the domain of '" + f.name + "'");
  if (a.kind == ActionKind::direct) {
    std::string why = direct_action_violation(f, s[a.feature], a.to);
    if (!why.empty()) throw ValidationError("plausibility: " + why);
  } else {
    Entailment e = prob.causal.entailment(a.feature, s);
    if (e.kind != EntailmentKind::value || e.required != a.to)
      throw ValidationError("causal action on '" + f.name + "' is not entailed");
  }
  State t = s;
  t[a.feature] = a.to;
  return t;
}

struct LedgerEntry {
  State state;
  std::optional<Action> via;       // action that produced this entry
  std::size_t directs = 0;         // direct actions on the ledger so far
  std::vector<Action> candidates;  // generated on first use
  std::size_t tried = 0;           // candidates[0, tried) were attempted
  bool expanded = false;
};

/// Planner working list. Each state is admitted at most once per direct
/// budget level: a state comes back only when reached with fewer direct
/// actions than before.
struct Ledger {
  std::vector<LedgerEntry> entries;
  std::unordered_map<State, std::size_t, StateHash> best_directs;

  bool empty() const { return entries.empty(); }
  LedgerEntry& last() { return entries.back(); }
  const LedgerEntry& last() const { return entries.back(); }
  bool visited(const State& s) const { return best_directs.count(s) > 0; }
};

class SearchExhausted : public Error {
 public:
  SearchExhausted(const std::string& what, std::vector<State> deepest)
      : Error(what), deepest_(std::move(deepest)) {}
  const std::vector<State>& deepest_ledger() const { return deepest_; }

 private:
  std::vector<State> deepest_;
};

/// Removes causally inconsistent entries; their actions fold into the next
/// consistent step.
inline Path drop_inconsistent(const Ledger& ledger, const CausalModel& causal) {
  Path path;
  std::vector<Action> pending;
  for (const auto& e : ledger.entries) {
    if (e.via) pending.push_back(*e.via);
    if (!causal.consistent(e.state)) continue;
    path.steps.push_back({e.state, std::move(pending)});
    pending.clear();
  }
  return path;
}

struct PlannerOptions {
  std::size_t max_dpl = 0;  // 0: number of features
  int p = 1;
};

/// Backtracking planner. From a consistent state it tries direct actions;
/// from an inconsistent one it tries causal repairs first, then direct
/// actions. Direct actions are budgeted and the budget deepens from 1.
class Planner {
 public:
  Planner(const Problem& prob, State s_star, PlannerOptions opt = {})
      : prob_(prob), s_star_(std::move(s_star)), opt_(opt), w_(config_weights(prob.config)) {
    if (opt_.max_dpl == 0) opt_.max_dpl = prob.nfeatures();
  }

  std::size_t budget() const { return budget_; }
  void set_budget(std::size_t b) { budget_ = b; }

  /// Appends `s` unless it was already admitted with no more direct actions.
  bool update(Ledger& ledger, const State& s, std::optional<Action> via, std::size_t directs) {
    auto it = ledger.best_directs.find(s);
    if (it != ledger.best_directs.end() && it->second <= directs) return false;
    ledger.best_directs[s] = directs;
    LedgerEntry e;
    e.state = s;
    e.via = std::move(via);
    e.directs = directs;
    ledger.entries.push_back(std::move(e));
    note_depth(ledger);
    return true;
  }

  /// Drives the last entry to a causally consistent state, backtracking when
  /// its options run out.
  void make_consistent(Ledger& ledger) {
    while (!ledger.empty() && !prob_.causal.consistent(ledger.last().state)) {
      LedgerEntry& e = ledger.last();
      if (!e.expanded) {
        e.candidates = causal_actions(e.state);
        if (e.directs < budget_) {
          auto d = direct_actions(e.state);
          e.candidates.insert(e.candidates.end(), d.begin(), d.end());
        }
        e.expanded = true;
      }
      if (e.tried < e.candidates.size()) {
        Action a = e.candidates[e.tried++];
        std::size_t directs = e.directs + (a.kind == ActionKind::direct);
        State t = e.state;
        t[a.feature] = a.to;
        update(ledger, t, std::move(a), directs);
      } else {
        ledger.entries.pop_back();
      }
    }
    if (ledger.empty()) throw exhausted("no causally consistent state reachable");
  }

  /// One transition from the last (consistent) entry: try the next untried
  /// direct action and repair its effects, or backtrack.
  void intervene(Ledger& ledger) {
    if (ledger.empty()) throw exhausted("ledger is empty");
    LedgerEntry& e = ledger.last();
    if (!e.expanded) {
      if (e.directs < budget_) e.candidates = direct_actions(e.state);
      e.expanded = true;
    }
    if (e.tried < e.candidates.size()) {
      Action a = e.candidates[e.tried++];
      std::size_t directs = e.directs + 1;
      State t = e.state;
      t[a.feature] = a.to;
      if (update(ledger, t, std::move(a), directs)) make_consistent(ledger);
      return;
    }
    ledger.entries.pop_back();
    if (ledger.empty()) throw exhausted("every action from the initial state was tried");
  }

  /// Runs one search with the current direct budget.
  Path search(const State& i) {
    Ledger ledger;
    update(ledger, i, std::nullopt, 0);
    for (;;) {
      const State& s = ledger.last().state;
      if (prob_.causal.consistent(s)) {
        if (!prob_.decision.rejects(s)) return drop_inconsistent(ledger, prob_.causal);
        intervene(ledger);
      } else {
        make_consistent(ledger);
      }
    }
  }

  /// Iterative deepening on the direct-action budget.
  Path find_path(const State& i) {
    if (!prob_.causal.consistent(i))
      throw InvalidInitialState("initial state violates the causal rules: " + describe(prob_.config, i));
    if (prob_.in_goal(i)) return Path{{PathStep{i, {}}}};
    for (budget_ = 1; budget_ <= opt_.max_dpl; ++budget_) {
      try {
        return search(i);
      } catch (const SearchExhausted&) {
      }
    }
    throw exhausted("no path within " + std::to_string(opt_.max_dpl) + " direct actions");
  }

  /// Causal repairs of `s`: one per violated feature with an entailed value.
  std::vector<Action> causal_actions(const State& s) const {
    std::vector<Action> out;
    for (const auto& e : prob_.causal.violations(s)) {
      if (e.kind != EntailmentKind::value) continue;
      out.push_back({ActionKind::causal, e.feature, s[e.feature], e.required, e.rules});
    }
    return out;
  }

  /// Plausible direct actions of `s`. Moves onto the target's value come
  /// first, cheapest step first; the rest follow by remaining distance.
  std::vector<Action> direct_actions(const State& s) const {
    struct Scored {
      Action a;
      bool toward;
      double rest;
      double step;
    };
    std::vector<Scored> all;
    for (std::size_t f = 0; f < prob_.nfeatures(); ++f) {
      const FeatureSpec& fs = prob_.feature(f);
      for (std::size_t v = 0; v < fs.domain.size(); ++v) {
        if (v == s[f] || !direct_action_violation(fs, s[f], v).empty()) continue;
        State t = s;
        t[f] = v;
        all.push_back({{ActionKind::direct, f, s[f], v, {}},
                       v == s_star_[f],
                       compute_weighted_lp(t, s_star_, w_, opt_.p, prob_.config),
                       compute_weighted_lp(s, t, w_, opt_.p, prob_.config)});
      }
    }
    std::stable_sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
      if (a.toward != b.toward) return a.toward;
      if (a.toward) return a.step < b.step;
      if (a.rest != b.rest) return a.rest < b.rest;
      return a.step < b.step;
    });
    std::vector<Action> out;
    for (auto& x : all) out.push_back(std::move(x.a));
    return out;
  }

 private:
  void note_depth(const Ledger& ledger) {
    if (ledger.entries.size() <= deepest_.size()) return;
    deepest_.clear();
    for (const auto& e : ledger.entries) deepest_.push_back(e.state);
  }

  SearchExhausted exhausted(const std::string& why) const { return SearchExhausted(why, deepest_); }

  const Problem& prob_;
  State s_star_;
  PlannerOptions opt_;
  WeightVector w_;
  std::size_t budget_ = 1;
  std::vector<State> deepest_;
};

inline Path find_path(const Problem& prob, const State& i, const State& s_star, PlannerOptions opt = {}) {
  Planner planner(prob, s_star, opt);
  return planner.find_path(i);
}

/// Breadth-first search over single-feature changes that ignores the causal
/// rules and direct actionability. Immutable and monotone features are
/// still respected.
inline Path naive_find_path(const Problem& prob, const State& i, const State& s_star) {
  if (i == s_star) return Path{{PathStep{i, {}}}};
  struct Parent {
    State prev;
    Action via;
  };
  std::unordered_map<State, std::optional<Parent>, StateHash> seen;
  std::deque<State> queue{i};
  seen[i] = std::nullopt;
  while (!queue.empty()) {
    State s = std::move(queue.front());
    queue.pop_front();
    for (std::size_t f = 0; f < prob.nfeatures(); ++f) {
      FeatureSpec fs = prob.feature(f);
      fs.directly_actionable = true;
      for (std::size_t v = 0; v < fs.domain.size(); ++v) {
        if (v == s[f] || !direct_action_violation(fs, s[f], v).empty()) continue;
        State t = s;
        t[f] = v;
        if (seen.count(t)) continue;
        seen[t] = Parent{s, {ActionKind::direct, f, s[f], v, {}}};
        if (t == s_star) {
          std::vector<PathStep> rev;
          State cur = t;
          while (seen[cur]) {
            const Parent& par = *seen[cur];
            rev.push_back({cur, {par.via}});
            cur = par.prev;
          }
          rev.push_back({cur, {}});
          std::reverse(rev.begin(), rev.end());
          return Path{std::move(rev)};
        }
        queue.push_back(std::move(t));
      }
    }
  }
  throw SearchExhausted("target state unreachable by single-feature changes", {});
}

struct Violation {
  std::size_t step = 0;  // index into Path::steps
  Action action;
  std::string reason;
};

struct LegalityReport {
  bool legal = true;
  std::vector<Violation> violations;
};

/// Replays every step and flags direct actions that break plausibility and
/// causal actions whose value the rules do not entail.
inline LegalityReport path_is_legal(const Path& path, const Problem& prob) {
  LegalityReport out;
  auto flag = [&](std::size_t step, const Action& a, std::string why) {
    out.legal = false;
    out.violations.push_back({step, a, std::move(why)});
  };
  for (std::size_t k = 1; k < path.steps.size(); ++k) {
    State cur = path.steps[k - 1].state;
    for (const auto& a : path.steps[k].actions) {
      if (a.feature >= prob.nfeatures()) {
        flag(k, a, "unknown feature");
        continue;
      }
      const FeatureSpec& f = prob.feature(a.feature);
      if (a.from != cur[a.feature]) flag(k, a, "action on '" + f.name + "' starts from a stale value");
      if (a.kind == ActionKind::direct) {
        std::string why = direct_action_violation(f, cur[a.feature], a.to);
        if (!why.empty()) flag(k, a, why);
      } else {
        Entailment e = prob.causal.entailment(a.feature, cur);
        if (e.kind != EntailmentKind::value || e.required != a.to)
          flag(k, a, "causal change of '" + f.name + "' is not entailed");
      }
      if (a.to < f.domain.size()) cur[a.feature] = a.to;
    }
    if (cur != path.steps[k].state) flag(k, Action{}, "actions do not reproduce the recorded state");
  }
  return out;
}

}  // namespace p2c
