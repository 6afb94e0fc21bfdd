#pragma once

// Shared test helpers: dataset paths, an independent rule interpreter that
// works on the parsed syntax tree, a random config generator and the
// exhaustive oracles built on them.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "p2c/p2c.hpp"

namespace testing {

using namespace p2c;

inline std::filesystem::path data_dir(const std::string& name) { return std::filesystem::path(P2C_DATA_DIR) / name; }
inline std::filesystem::path config_path(const std::string& name) { return data_dir(name) / "config.json"; }
inline std::filesystem::path corpus_path(const std::string& name) {
  return std::filesystem::path(P2C_CORPUS_DIR) / name;
}

inline Bundle bundle(const std::string& name) { return load_bundle(config_path(name)); }

/// Resolved problem for a shipped dataset anchored at `raw`.
inline Problem problem(const std::string& name, const RawInstance& raw, bool consolidate = false) {
  return make_problem(bundle(name), &raw, consolidate);
}

// Canonical text built without the parser: comments dropped, whitespace
// outside quotes removed, then ` :- `, `, ` at depth 0 and `not ` before
// an atom restored; one clause per line.
inline std::string canonicalize(const std::string& text) {
  std::string squeezed;
  bool quoted = false, comment = false;
  for (char c : text) {
    if (comment) {
      if (c == '\n') comment = false;
      continue;
    }
    if (c == '\'') quoted = !quoted;
    if (!quoted && c == '%') {
      comment = true;
      continue;
    }
    if (!quoted && std::isspace(static_cast<unsigned char>(c))) {
      // keep a marker where `not` is followed by an atom
      if (squeezed.size() >= 3 && squeezed.compare(squeezed.size() - 3, 3, "not") == 0) squeezed += ' ';
      continue;
    }
    if (!squeezed.empty() && squeezed.back() == ' ' && c == '(') squeezed.pop_back();
    squeezed += c;
  }
  std::string out;
  int depth = 0;
  quoted = false;
  for (std::size_t i = 0; i < squeezed.size(); ++i) {
    char c = squeezed[i];
    if (c == '\'') quoted = !quoted;
    if (!quoted) {
      if (c == '(') ++depth;
      if (c == ')') --depth;
      if (c == ':' && i + 1 < squeezed.size() && squeezed[i + 1] == '-') {
        out += " :- ";
        ++i;
        continue;
      }
      if (c == ',' && depth == 0) {
        out += ", ";
        continue;
      }
      if (c == '.' && depth == 0 && (i + 1 == squeezed.size() || !std::isdigit(static_cast<unsigned char>(squeezed[i + 1])))) {
        out += ".\n";
        continue;
      }
    }
    out += c;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Independent interpreter: walks Rule syntax directly against domain values.

namespace oracle {

inline bool value_is(const FeatureSpec& f, const DomainValue& v, const Constant& c) {
  if (!f.numeric()) {
    if (v.placeholder) return std::find(v.merged.begin(), v.merged.end(), c.text) != v.merged.end();
    return v.label == c.text;
  }
  double x = v.number, t = std::stod(c.text);
  if (f.head_direction == HeadDirection::ge) return x >= t;
  if (f.head_direction == HeadDirection::le) return x <= t;
  return x == t;
}

inline const DomainValue& value_of(const DatasetConfig& cfg, const State& s, const std::string& feature) {
  for (std::size_t f = 0; f < cfg.features.size(); ++f)
    if (cfg.features[f].name == feature) return cfg.features[f].domain[s[f]];
  throw std::runtime_error("oracle: unknown feature " + feature);
}

inline const FeatureSpec& spec_of(const DatasetConfig& cfg, const std::string& feature) {
  for (const auto& f : cfg.features)
    if (f.name == feature) return f;
  throw std::runtime_error("oracle: unknown feature " + feature);
}

inline bool body_holds(const Rule& r, const RuleProgram& prog, const DatasetConfig& cfg, const State& s);

inline bool aux_holds(const std::string& pred, const std::string& value, const RuleProgram& prog,
                      const DatasetConfig& cfg, const State& s) {
  for (const auto& r : prog.aux_rules)
    if (r.head.predicate == pred && r.head.value.text == value && body_holds(r, prog, cfg, s)) return true;
  return false;
}

inline bool body_holds(const Rule& r, const RuleProgram& prog, const DatasetConfig& cfg, const State& s) {
  std::map<std::string, double> vars;
  for (const auto& lit : r.body) {
    bool ok = true;
    switch (lit.kind) {
      case LiteralKind::feature_test:
        ok = value_is(spec_of(cfg, lit.atom.predicate), value_of(cfg, s, lit.atom.predicate), lit.atom.value);
        break;
      case LiteralKind::negated_feature_test:
        ok = !value_is(spec_of(cfg, lit.atom.predicate), value_of(cfg, s, lit.atom.predicate), lit.atom.value);
        break;
      case LiteralKind::numeric_binding:
        vars[lit.atom.variable] = value_of(cfg, s, lit.atom.predicate).number;
        break;
      case LiteralKind::comparison:
        ok = vars.at(lit.variable) <= std::stod(lit.bound.text);
        break;
      case LiteralKind::negated_comparison:
        ok = !(vars.at(lit.variable) <= std::stod(lit.bound.text));
        break;
      case LiteralKind::aux_call:
        ok = aux_holds(lit.atom.predicate, lit.atom.value.text, prog, cfg, s);
        break;
      case LiteralKind::negated_aux_call:
        ok = !aux_holds(lit.atom.predicate, lit.atom.value.text, prog, cfg, s);
        break;
    }
    if (!ok) return false;
  }
  return true;
}

inline bool decides(const RuleProgram& prog, const DatasetConfig& cfg, const State& s) {
  for (const auto& r : prog.rules)
    if (body_holds(r, prog, cfg, s)) return true;
  return false;
}

/// Undesired outcome, with the config's polarity.
inline bool rejected(const RuleProgram& dec, const DatasetConfig& cfg, const State& s) {
  bool fires = decides(dec, cfg, s);
  if (dec.rules.empty() || cfg.undesired_decision.empty()) return fires;
  return dec.rules.front().head.value.text == cfg.undesired_decision ? fires : !fires;
}

struct Verdict {
  bool constrained = false;        // some head of the feature fires
  bool contradiction = false;      // exhaustive heads, none fires
  std::vector<char> admissible;    // when constrained
};

/// Completion reading of the rules heading `feature`.
inline Verdict verdict(const RuleProgram& causal, const DatasetConfig& cfg, const State& s, std::size_t feature) {
  const FeatureSpec& f = cfg.features[feature];
  Verdict out;
  std::vector<char> cover(f.domain.size(), 0);
  std::optional<std::string> fired_value;
  bool any_rule = false;
  for (const auto& r : causal.rules) {
    if (r.head.predicate != f.name) continue;
    any_rule = true;
    for (std::size_t v = 0; v < f.domain.size(); ++v) cover[v] = cover[v] || value_is(f, f.domain[v], r.head.value);
    if (!body_holds(r, causal, cfg, s)) continue;
    if (fired_value && *fired_value != r.head.value.text)
      throw std::runtime_error("oracle: two alternatives fire for " + f.name);
    fired_value = r.head.value.text;
  }
  if (!any_rule) return out;
  if (fired_value) {
    out.constrained = true;
    for (std::size_t v = 0; v < f.domain.size(); ++v)
      out.admissible.push_back(value_is(f, f.domain[v], Constant{*fired_value, false}) ? 1 : 0);
    return out;
  }
  out.contradiction = std::all_of(cover.begin(), cover.end(), [](char c) { return c != 0; });
  return out;
}

inline bool consistent(const RuleProgram& causal, const DatasetConfig& cfg, const State& s) {
  for (std::size_t f = 0; f < cfg.features.size(); ++f) {
    Verdict v = verdict(causal, cfg, s, f);
    if (v.contradiction) return false;
    if (v.constrained && !v.admissible[s[f]]) return false;
  }
  return true;
}

inline bool goal(const RuleProgram& dec, const RuleProgram& causal, const DatasetConfig& cfg, const State& s) {
  return consistent(causal, cfg, s) && !rejected(dec, cfg, s);
}

inline double coordinate(const FeatureSpec& f, std::size_t v) {
  return f.numeric() ? f.domain[v].number : static_cast<double>(v);
}

/// Admissible value closest to `from`, lowest index on ties.
inline std::size_t nearest(const FeatureSpec& f, const std::vector<char>& adm, std::size_t from) {
  if (adm[from]) return from;
  std::size_t best = adm.size();
  for (std::size_t v = 0; v < adm.size(); ++v) {
    if (!adm[v]) continue;
    if (best == adm.size() ||
        std::fabs(coordinate(f, v) - coordinate(f, from)) < std::fabs(coordinate(f, best) - coordinate(f, from)))
      best = v;
  }
  return best;
}

inline bool compelled(const RuleProgram& causal, const DatasetConfig& cfg, const State& src, const State& tgt,
                      std::size_t f) {
  if (src[f] == tgt[f]) return false;
  State probe = tgt;
  probe[f] = src[f];
  Verdict v = verdict(causal, cfg, probe, f);
  return v.constrained && nearest(cfg.features[f], v.admissible, src[f]) == tgt[f];
}

inline bool heads(const RuleProgram& causal, const std::string& feature) {
  for (const auto& r : causal.rules)
    if (r.head.predicate == feature) return true;
  return false;
}

inline double difference(const FeatureSpec& f, std::size_t a, std::size_t b) {
  if (a == b) return 0;
  if (!f.numeric()) return 1;
  double w = f.range_max - f.range_min;
  return w > 0 ? std::fabs(f.domain[a].number - f.domain[b].number) / w : 1;
}

inline double lp(const std::vector<double>& w, const std::vector<double>& d, int p) {
  double acc = 0;
  for (std::size_t f = 0; f < w.size(); ++f) {
    if (p == 0)
      acc += (w[f] > 0 && d[f] > 0) ? 1.0 : 0.0;
    else if (p == 1)
      acc += w[f] * d[f];
    else
      acc += w[f] * d[f] * d[f];
  }
  return p == 2 ? std::sqrt(acc) : acc;
}

/// Monotone direction check on one coordinate.
inline bool monotone_ok(const FeatureSpec& f, std::size_t from, std::size_t to) {
  if (f.monotone == Monotone::nondecreasing) return coordinate(f, to) >= coordinate(f, from);
  if (f.monotone == Monotone::nonincreasing) return coordinate(f, to) <= coordinate(f, from);
  return true;
}

struct Best {
  double cost = std::numeric_limits<double>::infinity();
  std::optional<State> target;
};

/// Exhaustive minimum over every plausible goal state.
inline Best exhaustive_min_cf(const Problem& prob, const State& i, int p, bool p2c_mode) {
  const DatasetConfig& cfg = prob.config;
  Best best;
  for (const State& s : enumerate_states(cfg)) {
    if (!goal(prob.decision_rules, prob.causal_rules, cfg, s)) continue;
    std::vector<double> w, d;
    bool ok = true;
    for (std::size_t f = 0; f < cfg.features.size() && ok; ++f) {
      const FeatureSpec& fs = cfg.features[f];
      bool free = compelled(prob.causal_rules, cfg, i, s, f);
      if (s[f] != i[f]) {
        if (!fs.is_mutable) ok = false;
        if (!fs.directly_actionable && !free) ok = false;
        if (!monotone_ok(fs, i[f], s[f])) ok = false;
      }
      w.push_back(p2c_mode && free ? 0.0 : fs.weight);
      d.push_back(difference(fs, i[f], s[f]));
    }
    if (!ok) continue;
    double c = lp(w, d, p);
    if (c < best.cost || (c == best.cost && best.target && s < *best.target)) {
      best.cost = c;
      best.target = s;
    }
  }
  return best;
}

/// Direct change allowed by the feature's plausibility flags.
inline bool direct_ok(const FeatureSpec& f, std::size_t from, std::size_t to) {
  return f.is_mutable && f.directly_actionable && to < f.domain.size() && monotone_ok(f, from, to);
}

/// Re-checks the five solution-path clauses and replays every transition.
/// Returns an empty string when the path is sound, otherwise the reason.
inline std::string check_solution_path(const Problem& prob, const State& i, const Path& path) {
  const DatasetConfig& cfg = prob.config;
  const RuleProgram& dec = prob.decision_rules;
  const RuleProgram& cau = prob.causal_rules;
  if (path.steps.empty()) return "empty path";
  if (!(path.start() == i)) return "path does not start at the instance";
  if (!goal(dec, cau, cfg, path.end())) return "last state is not a goal state";
  for (std::size_t k = 0; k + 1 < path.steps.size(); ++k)
    if (goal(dec, cau, cfg, path.steps[k].state)) return "interior state " + std::to_string(k) + " is a goal state";
  for (std::size_t k = 0; k < path.steps.size(); ++k)
    if (!consistent(cau, cfg, path.steps[k].state)) return "state " + std::to_string(k) + " is inconsistent";
  for (std::size_t k = 1; k < path.steps.size(); ++k) {
    State cur = path.steps[k - 1].state;
    const auto& acts = path.steps[k].actions;
    if (acts.empty()) return "step " + std::to_string(k) + " has no actions";
    for (std::size_t a = 0; a < acts.size(); ++a) {
      const Action& act = acts[a];
      const FeatureSpec& f = cfg.features.at(act.feature);
      if (act.kind == ActionKind::direct) {
        if (!direct_ok(f, cur[act.feature], act.to)) return "step " + std::to_string(k) + ": implausible direct action";
      } else {
        Verdict v = verdict(cau, cfg, cur, act.feature);
        if (!v.constrained || !v.admissible[act.to] || v.admissible[cur[act.feature]])
          return "step " + std::to_string(k) + ": causal action not entailed";
      }
      cur[act.feature] = act.to;
      if (a + 1 < acts.size() && consistent(cau, cfg, cur))
        return "step " + std::to_string(k) + ": transition passes through a consistent state";
    }
    if (!(cur == path.steps[k].state)) return "step " + std::to_string(k) + ": replay diverges";
  }
  return {};
}

}  // namespace oracle

// ---------------------------------------------------------------------------
// Random configs

struct RandomCase {
  nlohmann::json config_json;
  std::string decision_text;
  std::string causal_text;
  DatasetConfig config;
  RuleProgram decision;
  RuleProgram causal;
};

inline std::size_t pick(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}
inline bool chance(std::mt19937_64& rng, double p) { return std::uniform_real_distribution<double>(0, 1)(rng) < p; }

/// Random config with at most `max_features` features and at most
/// `max_values` values per feature, a random stratified decision program
/// and a causal program whose alternatives are mutually exclusive.
inline RandomCase random_case(std::mt19937_64& rng, std::size_t max_features = 5, std::size_t max_values = 6) {
  RandomCase rc;
  std::size_t nf = 2 + pick(rng, max_features - 1);
  struct Feat {
    std::string name;
    bool numeric;
    std::vector<std::string> values;
    std::vector<int> thresholds;
  };
  std::vector<Feat> feats;
  nlohmann::json features = nlohmann::json::array();
  for (std::size_t f = 0; f < nf; ++f) {
    Feat ft;
    ft.name = "f" + std::to_string(f);
    ft.numeric = chance(rng, 0.25);
    nlohmann::json jf;
    jf["name"] = ft.name;
    if (ft.numeric) {
      jf["kind"] = "numeric";
      jf["numeric_range"] = {0, 100};
      std::size_t nt = 1 + pick(rng, std::min<std::size_t>(3, max_values - 1));
      std::set<int> ts;
      while (ts.size() < nt) ts.insert(10 * static_cast<int>(1 + pick(rng, 9)));
      ft.thresholds.assign(ts.begin(), ts.end());
      if (chance(rng, 0.2)) jf["monotone"] = "nondecreasing";
    } else {
      std::size_t nv = 2 + pick(rng, max_values - 1);
      for (std::size_t v = 0; v < nv; ++v) ft.values.push_back("v" + std::to_string(v));
      jf["domain"] = ft.values;
      if (chance(rng, 0.1)) jf["monotone"] = "nondecreasing";
    }
    if (chance(rng, 0.08)) jf["mutable"] = false;
    if (chance(rng, 0.2)) jf["directly_actionable"] = false;
    if (chance(rng, 0.3)) jf["weight"] = 0.5 + static_cast<double>(pick(rng, 4));
    features.push_back(jf);
    feats.push_back(std::move(ft));
  }

  int var = 0;
  auto literal = [&](std::size_t f) {
    const Feat& ft = feats[f];
    if (ft.numeric) {
      std::string n = "N" + std::to_string(++var);
      int t = ft.thresholds[pick(rng, ft.thresholds.size())];
      std::string cmp = chance(rng, 0.5) ? n + "=<" + std::to_string(t) : "not(" + n + "=<" + std::to_string(t) + ")";
      return ft.name + "(X," + n + "), " + cmp;
    }
    std::string v = ft.values[pick(rng, ft.values.size())];
    return std::string(chance(rng, 0.3) ? "not " : "") + ft.name + "(X,'" + v + "')";
  };
  auto body = [&](std::size_t len, std::optional<std::size_t> avoid) {
    std::string out;
    for (std::size_t l = 0; l < len; ++l) {
      std::size_t f = pick(rng, nf);
      if (avoid && f == *avoid) f = (f + 1) % nf;
      if (!out.empty()) out += ", ";
      out += literal(f);
    }
    return out;
  };

  bool flip = chance(rng, 0.2);
  std::string head = flip ? "label(X,'accept')" : "label(X,'reject')";
  std::size_t nr = 1 + pick(rng, 3);
  bool aux = chance(rng, 0.3);
  for (std::size_t r = 0; r < nr; ++r) {
    var = 0;
    rc.decision_text += head + " :- " + body(1 + pick(rng, 2), std::nullopt);
    if (aux && r == 0) rc.decision_text += ", not ab1(X,'True')";
    rc.decision_text += ".\n";
  }
  if (aux) {
    var = 0;
    rc.decision_text += "ab1(X,'True') :- " + body(1 + pick(rng, 2), std::nullopt) + ".\n";
  }

  std::vector<std::size_t> categorical;
  for (std::size_t f = 0; f < nf; ++f)
    if (!feats[f].numeric) categorical.push_back(f);
  std::shuffle(categorical.begin(), categorical.end(), rng);
  std::size_t nheads = std::min<std::size_t>(categorical.size(), pick(rng, 3));
  for (std::size_t h = 0; h < nheads; ++h) {
    std::size_t f = categorical[h];
    std::size_t g = pick(rng, nf);
    if (g == f) g = (g + 1) % nf;
    const Feat& head_f = feats[f];
    const Feat& driver = feats[g];
    auto head_atom = [&] { return head_f.name + "(X,'" + head_f.values[pick(rng, head_f.values.size())] + "')"; };
    auto extra = [&]() -> std::string {
      if (nf < 3 || !chance(rng, 0.3)) return "";
      std::size_t e = pick(rng, nf);
      while (e == f || e == g) e = (e + 1) % nf;
      var = 5;
      return ", " + literal(e);
    };
    if (driver.numeric) {
      int t = driver.thresholds[pick(rng, driver.thresholds.size())];
      rc.causal_text += head_atom() + " :- " + driver.name + "(X,N1), N1=<" + std::to_string(t) + extra() + ".\n";
      if (chance(rng, 0.7))
        rc.causal_text +=
            head_atom() + " :- " + driver.name + "(X,N1), not(N1=<" + std::to_string(t) + ")" + extra() + ".\n";
    } else {
      for (const auto& u : driver.values)
        if (chance(rng, 0.6)) rc.causal_text += head_atom() + " :- " + driver.name + "(X,'" + u + "')" + extra() + ".\n";
    }
  }

  nlohmann::json j;
  j["name"] = "random";
  j["undesired_decision"] = "reject";
  j["features"] = features;
  rc.config_json = j;
  rc.decision = parse_rule_program(rc.decision_text, ProgramKind::decision);
  rc.causal = parse_rule_program(rc.causal_text, ProgramKind::causal);
  rc.config = resolve_domains(config_from_json(j), {&rc.decision, &rc.causal}, nullptr);
  return rc;
}

inline Problem random_problem(const RandomCase& rc) { return Problem(rc.config, rc.decision, rc.causal); }

/// Instances the search operations accept: consistent and rejected.
inline std::vector<State> valid_instances(const Problem& prob) {
  std::vector<State> out;
  for (const State& s : enumerate_states(prob.config))
    if (prob.causal.consistent(s) && prob.decision.rejects(s)) out.push_back(s);
  return out;
}

}  // namespace testing
