#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "p2c/domain.hpp"
#include "p2c/error.hpp"
#include "p2c/evaluate.hpp"
#include "p2c/rules.hpp"

namespace p2c {

/// The causal rules sharing one head feature, grouped by head value.
struct CausalGroup {
  struct Alternative {
    Constant value;
    std::vector<char> admissible;     // domain values satisfying the head
    std::vector<std::size_t> rules;   // main-rule indices
  };
  std::size_t feature = 0;
  std::vector<Alternative> alternatives;
  bool exhaustive = false;  // heads cover the whole domain
};

enum class EntailmentKind { unconstrained, value, contradiction };

struct Entailment {
  std::size_t feature = 0;
  EntailmentKind kind = EntailmentKind::unconstrained;
  std::size_t required = 0;                 // domain index, when kind == value
  std::vector<char> admissible;             // when kind == value
  std::vector<std::size_t> rules;           // firing rules, when kind == value

  bool satisfied_by(std::size_t v) const {
    return kind == EntailmentKind::unconstrained || (kind == EntailmentKind::value && admissible[v]);
  }
};

class CausalModel {
 public:
  CausalModel() = default;

  CausalModel(const RuleProgram& prog, const DatasetConfig& cfg) : prog_(prog, cfg) {
    if (prog.kind != ProgramKind::causal) throw ValidationError("causal model needs a causal program");
    nfeatures_ = cfg.features.size();
    group_of_.assign(nfeatures_, npos);
    for (const auto& f : cfg.features) {
      std::vector<double> nums;
      for (const auto& v : f.domain) nums.push_back(f.numeric() ? v.number : 0.0);
      numbers_.push_back(std::move(nums));
    }
    for (std::size_t i = 0; i < prog_.size(); ++i) {
      const auto& r = prog_.rule(i);
      std::size_t hf = *r.head_feature;
      if (prog_.body_features(i).count(hf))
        throw ValidationError("causal rule for '" + cfg.features[hf].name + "' (line " +
                              std::to_string(prog.rules[i].line) + ") reads its own head feature");
      if (group_of_[hf] == npos) {
        group_of_[hf] = groups_.size();
        groups_.emplace_back().feature = hf;
      }
      CausalGroup& g = groups_[group_of_[hf]];
      const Constant& value = prog.rules[i].head.value;
      auto alt = std::find_if(g.alternatives.begin(), g.alternatives.end(),
                              [&](const CausalGroup::Alternative& a) { return a.value == value; });
      if (alt == g.alternatives.end()) {
        g.alternatives.push_back({value, r.head_truth, {}});
        alt = g.alternatives.end() - 1;
      }
      alt->rules.push_back(i);
    }
    for (auto& g : groups_) {
      std::vector<char> cover(cfg.features[g.feature].domain.size(), 0);
      for (const auto& a : g.alternatives)
        for (std::size_t v = 0; v < cover.size(); ++v) cover[v] = cover[v] || a.admissible[v];
      g.exhaustive = std::all_of(cover.begin(), cover.end(), [](char c) { return c != 0; });
    }
    for (const auto& f : cfg.features) names_.push_back(f.name);
  }

  const BoundProgram& program() const { return prog_; }
  const std::vector<CausalGroup>& groups() const { return groups_; }
  bool empty() const { return groups_.empty(); }

  bool is_head(std::size_t f) const { return f < group_of_.size() && group_of_[f] != npos; }

  /// Entailment for one feature, evaluated on the other features of `s`.
  /// `required` is the admissible value nearest the current one.
  Entailment entailment(std::size_t f, const State& s) const {
    Entailment e;
    e.feature = f;
    if (!is_head(f)) return e;
    const CausalGroup& g = groups_[group_of_[f]];
    const CausalGroup::Alternative* hit = nullptr;
    std::vector<std::size_t> fired;
    for (const auto& a : g.alternatives) {
      bool alt_fires = false;
      for (auto ri : a.rules)
        if (prog_.rule_fires(ri, s)) {
          alt_fires = true;
          fired.push_back(ri);
        }
      if (!alt_fires) continue;
      if (hit)
        throw InconsistentCausalProgram("causal rules for '" + names_[f] + "' entail both " + hit->value.text +
                                        " and " + a.value.text + " (lines " +
                                        std::to_string(prog_.source().rules[hit->rules.front()].line) + ", " +
                                        std::to_string(prog_.source().rules[a.rules.front()].line) + ")");
      hit = &a;
    }
    if (!hit) {
      e.kind = g.exhaustive ? EntailmentKind::contradiction : EntailmentKind::unconstrained;
      return e;
    }
    e.kind = EntailmentKind::value;
    e.admissible = hit->admissible;
    e.rules = std::move(fired);
    e.required = nearest_admissible(f, s[f], e.admissible);
    return e;
  }

  std::vector<Entailment> entailed_assignments(const State& s) const {
    std::vector<Entailment> out;
    for (const auto& g : groups_) out.push_back(entailment(g.feature, s));
    return out;
  }

  bool consistent(const State& s) const {
    for (const auto& g : groups_)
      if (!entailment(g.feature, s).satisfied_by(s[g.feature])) return false;
    return true;
  }

  /// Entailments that `s` violates, in feature order.
  std::vector<Entailment> violations(const State& s) const {
    std::vector<Entailment> out;
    for (const auto& g : groups_) {
      Entailment e = entailment(g.feature, s);
      if (!e.satisfied_by(s[g.feature])) out.push_back(std::move(e));
    }
    std::sort(out.begin(), out.end(), [](const Entailment& a, const Entailment& b) { return a.feature < b.feature; });
    return out;
  }

  /// Repeatedly applies the first repairable violation. Throws when a
  /// contradiction blocks repair or the guard of |features|+1 rounds trips.
  State closure(State s) const {
    for (std::size_t round = 0; round <= nfeatures_; ++round) {
      auto v = violations(s);
      if (v.empty()) return s;
      const Entailment& e = v.front();
      if (e.kind == EntailmentKind::contradiction)
        throw InconsistentCausalProgram("no causal alternative holds for '" + names_[e.feature] + "'");
      s[e.feature] = e.required;
    }
    throw InconsistentCausalProgram("causal propagation did not converge within " + std::to_string(nfeatures_ + 1) +
                                    " rounds");
  }

 private:
  std::size_t nearest_admissible(std::size_t f, std::size_t cur, const std::vector<char>& adm) const {
    if (adm[cur]) return cur;
    std::size_t best = npos;
    double best_d = 0;
    for (std::size_t v = 0; v < adm.size(); ++v) {
      if (!adm[v]) continue;
      double d = std::fabs(numbers_[f][v] - numbers_[f][cur]);
      if (best == npos || d < best_d) {
        best = v;
        best_d = d;
      }
    }
    return best;
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  BoundProgram prog_;
  std::size_t nfeatures_ = 0;
  std::vector<CausalGroup> groups_;
  std::vector<std::size_t> group_of_;
  std::vector<std::vector<double>> numbers_;
  std::vector<std::string> names_;
};

inline std::vector<Entailment> entailed_assignments(const State& s, const CausalModel& causal) {
  return causal.entailed_assignments(s);
}

inline bool causally_consistent(const State& s, const CausalModel& causal) { return causal.consistent(s); }

/// Member of the goal set: satisfies every causal rule and escapes the
/// undesired decision.
inline bool is_counterfactual(const State& s, const CausalModel& causal, const DecisionModel& decision) {
  return causal.consistent(s) && !decision.rejects(s);
}

/// Everything search and planning need about one dataset: the resolved
/// config plus both programs compiled against it.
struct Problem {
  DatasetConfig config;
  RuleProgram decision_rules;
  RuleProgram causal_rules;
  DecisionModel decision;
  CausalModel causal;

  Problem(DatasetConfig cfg, RuleProgram dec, RuleProgram cau)
      : config(std::move(cfg)), decision_rules(std::move(dec)), causal_rules(std::move(cau)) {
    cross_check(config, decision_rules);
    cross_check(config, causal_rules);
    decision = DecisionModel(decision_rules, config);
    causal = CausalModel(causal_rules, config);
    for (const auto& f : config.features)
      if (!f.directly_actionable && f.is_mutable && !causal.is_head(*config.feature_index(f.name)))
        frozen_.push_back(f.name);
  }

  bool in_goal(const State& s) const { return is_counterfactual(s, causal, decision); }
  std::size_t nfeatures() const { return config.features.size(); }
  const FeatureSpec& feature(std::size_t f) const { return config.features[f]; }

  /// Features that cannot change at all: not directly actionable and
  /// governed by no causal rule.
  const std::vector<std::string>& frozen_features() const { return frozen_; }

 private:
  std::vector<std::string> frozen_;
};

}  // namespace p2c
