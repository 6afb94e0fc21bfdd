#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "p2c/domain.hpp"
#include "p2c/error.hpp"
#include "p2c/rules.hpp"

namespace p2c {

/// True when domain value `v` of `f` satisfies a test against constant `c`.
/// Numeric tests honour the feature's head direction.
inline bool value_matches(const FeatureSpec& f, const DomainValue& v, const Constant& c) {
  if (!f.numeric()) return v.stands_for(c.text);
  if (!c.is_number()) return false;
  double t = c.number();
  switch (f.head_direction) {
    case HeadDirection::ge:
      return v.number >= t;
    case HeadDirection::le:
      return v.number <= t;
    case HeadDirection::eq:
      break;
  }
  return v.number == t;
}

/// A rule program compiled against a resolved config: every literal becomes
/// a truth table over one feature's domain indices.
class BoundProgram {
 public:
  struct Literal {
    LiteralKind kind{};
    std::size_t feature = 0;  // tests and comparisons
    std::vector<char> truth;  // indexed by domain value
    std::size_t aux = 0;      // aux calls: index into aux_keys
  };
  struct CompiledRule {
    std::optional<std::size_t> head_feature;  // causal main rules
    std::vector<char> head_truth;             // admissible head values
    std::vector<Literal> body;
  };

  BoundProgram() = default;

  BoundProgram(const RuleProgram& prog, const DatasetConfig& cfg) : source_(prog) {
    check_resolved(cfg);
    for (const auto& r : prog.aux_rules) {
      auto key = std::make_pair(r.head.predicate, r.head.value.text);
      if (!aux_index_.count(key)) {
        aux_index_[key] = aux_keys_.size();
        aux_keys_.push_back(key);
        aux_rules_by_key_.emplace_back();
      }
    }
    for (const auto& r : prog.rules) rules_.push_back(compile(r, cfg));
    for (const auto& r : prog.aux_rules) {
      aux_rules_by_key_[aux_index_.at({r.head.predicate, r.head.value.text})].push_back(aux_.size());
      aux_.push_back(compile(r, cfg));
    }
  }

  const RuleProgram& source() const { return source_; }
  std::size_t size() const { return rules_.size(); }
  const CompiledRule& rule(std::size_t i) const { return rules_[i]; }

  bool rule_fires(std::size_t i, const State& s) const { return fires(rules_[i], s); }

  /// Features read by the body of rule `i`, aux calls expanded.
  std::set<std::size_t> body_features(std::size_t i) const {
    std::set<std::size_t> out;
    collect(rules_[i], out);
    return out;
  }

  bool any_fires(const State& s) const {
    for (const auto& r : rules_)
      if (fires(r, s)) return true;
    return false;
  }

 private:
  CompiledRule compile(const Rule& r, const DatasetConfig& cfg) const {
    CompiledRule out;
    auto feature_of = [&](const std::string& name) -> std::size_t {
      auto fi = cfg.feature_index(name);
      if (!fi) throw ValidationError("rule at line " + std::to_string(r.line) + " references unknown feature '" +
                                     name + "'");
      return *fi;
    };
    if (source_.kind == ProgramKind::causal && !r.is_aux()) {
      std::size_t hf = feature_of(r.head.predicate);
      const FeatureSpec& f = cfg.features[hf];
      out.head_feature = hf;
      bool any = false;
      for (const auto& v : f.domain) {
        out.head_truth.push_back(value_matches(f, v, r.head.value) ? 1 : 0);
        any = any || out.head_truth.back();
      }
      if (!any)
        throw ValidationError("causal head " + r.head.predicate + "=" + r.head.value.text +
                              " matches no value of the feature's domain");
    }
    for (const auto& lit : r.body) {
      Literal c;
      c.kind = lit.kind;
      switch (lit.kind) {
        case LiteralKind::feature_test:
        case LiteralKind::negated_feature_test: {
          c.feature = feature_of(lit.atom.predicate);
          const FeatureSpec& f = cfg.features[c.feature];
          for (const auto& v : f.domain) c.truth.push_back(value_matches(f, v, lit.atom.value) ? 1 : 0);
          break;
        }
        case LiteralKind::numeric_binding: {
          c.feature = feature_of(lit.atom.predicate);
          if (!cfg.features[c.feature].numeric())
            throw ValidationError("rule at line " + std::to_string(r.line) + " binds categorical feature '" +
                                  lit.atom.predicate + "' to a numeric variable");
          c.truth.assign(cfg.features[c.feature].domain.size(), 1);
          break;
        }
        case LiteralKind::comparison:
        case LiteralKind::negated_comparison: {
          c.feature = feature_of(r.binding_feature(lit.variable));
          double bound = lit.bound.number();
          for (const auto& v : cfg.features[c.feature].domain) c.truth.push_back(v.number <= bound ? 1 : 0);
          break;
        }
        case LiteralKind::aux_call:
        case LiteralKind::negated_aux_call: {
          auto it = aux_index_.find({lit.atom.predicate, lit.atom.value.text});
          c.aux = it == aux_index_.end() ? npos : it->second;
          break;
        }
      }
      out.body.push_back(std::move(c));
    }
    return out;
  }

  bool aux_holds(std::size_t key, const State& s) const {
    if (key == npos) return false;
    for (auto i : aux_rules_by_key_[key])
      if (fires(aux_[i], s)) return true;
    return false;
  }

  bool fires(const CompiledRule& r, const State& s) const {
    for (const auto& lit : r.body) {
      bool ok;
      switch (lit.kind) {
        case LiteralKind::aux_call:
          ok = aux_holds(lit.aux, s);
          break;
        case LiteralKind::negated_aux_call:
          ok = !aux_holds(lit.aux, s);
          break;
        case LiteralKind::negated_feature_test:
        case LiteralKind::negated_comparison:
          ok = !lit.truth[s[lit.feature]];
          break;
        default:
          ok = lit.truth[s[lit.feature]];
      }
      if (!ok) return false;
    }
    return true;
  }

  void collect(const CompiledRule& r, std::set<std::size_t>& out) const {
    for (const auto& lit : r.body) {
      if (lit.kind == LiteralKind::aux_call || lit.kind == LiteralKind::negated_aux_call) {
        if (lit.aux != npos)
          for (auto i : aux_rules_by_key_[lit.aux]) collect(aux_[i], out);
      } else {
        out.insert(lit.feature);
      }
    }
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  RuleProgram source_;
  std::vector<CompiledRule> rules_;
  std::vector<CompiledRule> aux_;
  std::map<std::pair<std::string, std::string>, std::size_t> aux_index_;
  std::vector<std::pair<std::string, std::string>> aux_keys_;
  std::vector<std::vector<std::size_t>> aux_rules_by_key_;
};

/// Truth of main rule `i` on a total state. Negation is a complement test.
inline bool rule_fires(const BoundProgram& prog, std::size_t i, const State& s) { return prog.rule_fires(i, s); }

/// True iff at least one main rule fires.
inline bool program_decides(const BoundProgram& prog, const State& s) { return prog.any_fires(s); }

/// Decision program plus polarity. `rejects` is true for the undesired
/// outcome whether the rules describe it or its complement.
class DecisionModel {
 public:
  DecisionModel() = default;
  DecisionModel(const RuleProgram& prog, const DatasetConfig& cfg) : prog_(prog, cfg) {
    if (prog.kind != ProgramKind::decision) throw ValidationError("decision model needs a decision program");
    const Atom* head = prog.decision_head();
    if (head && !cfg.undesired_decision.empty()) fires_means_reject_ = head->value.text == cfg.undesired_decision;
  }

  bool rejects(const State& s) const { return prog_.any_fires(s) == fires_means_reject_; }
  bool fires_means_reject() const { return fires_means_reject_; }
  const BoundProgram& program() const { return prog_; }

 private:
  BoundProgram prog_;
  bool fires_means_reject_ = true;
};

/// Checks that every feature the programs mention exists in the config.
inline void cross_check(const DatasetConfig& cfg, const RuleProgram& prog) {
  for (const auto& name : referenced_features(prog))
    if (!cfg.feature_index(name))
      throw ValidationError(std::string(prog.kind == ProgramKind::causal ? "causal" : "decision") +
                            " rules reference unknown feature '" + name + "'");
}

}  // namespace p2c
