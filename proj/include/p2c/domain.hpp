#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include <json.hpp>

#include "p2c/error.hpp"
#include "p2c/rules.hpp"

namespace p2c {

enum class FeatureKind { categorical, numeric };
enum class Monotone { none, nondecreasing, nonincreasing };

/// How a numeric constant in a head or feature test constrains the value.
enum class HeadDirection { eq, ge, le };

/// Shortest decimal text that round-trips `x`.
inline std::string format_number(double x) {
  if (x == 0) return "0";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

struct DomainValue {
  std::string label;  // categorical constant, or formatted representative
  double number = 0;  // numeric representative
  double lower = 0;   // numeric interval (lower, upper], closed when !lower_open
  double upper = 0;
  bool lower_open = false;
  bool placeholder = false;
  std::vector<std::string> merged;  // raw values a placeholder stands for

  bool contains(double x) const { return (lower_open ? x > lower : x >= lower) && x <= upper; }
  bool stands_for(const std::string& raw) const {
    if (!placeholder) return label == raw;
    return std::find(merged.begin(), merged.end(), raw) != merged.end();
  }
};

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::categorical;
  std::vector<DomainValue> domain;  // resolved domain used by search
  std::vector<std::string> values;  // declared categorical values
  double weight = 1.0;
  bool is_mutable = true;
  Monotone monotone = Monotone::none;
  bool directly_actionable = true;
  double range_min = 0;
  double range_max = 0;
  double step = 1;
  HeadDirection head_direction = HeadDirection::eq;
  std::vector<double> cuts;  // extra numeric cut points

  bool numeric() const { return kind == FeatureKind::numeric; }
  double width() const { return range_max - range_min; }

  std::optional<std::size_t> index_of(const std::string& label) const {
    for (std::size_t i = 0; i < domain.size(); ++i)
      if (domain[i].label == label) return i;
    return std::nullopt;
  }
};

/// Raw instance: feature name to textual value.
using RawInstance = std::map<std::string, std::string>;

struct DatasetConfig {
  std::string name;
  std::vector<FeatureSpec> features;
  std::string decision_rules;
  std::string causal_rules;
  std::string undesired_decision;
  int norm_p = 1;
  std::optional<RawInstance> instance_defaults;
  std::string label_column;
  std::map<std::string, std::string> label_map;
  std::filesystem::path base_dir;

  std::optional<std::size_t> feature_index(const std::string& name) const {
    for (std::size_t i = 0; i < features.size(); ++i)
      if (features[i].name == name) return i;
    return std::nullopt;
  }
  const FeatureSpec& feature(const std::string& name) const {
    auto i = feature_index(name);
    if (!i) throw ValidationError("unknown feature '" + name + "'");
    return features[*i];
  }
};

/// One domain index per feature, in config order.
struct State {
  std::vector<std::size_t> values;

  std::size_t size() const { return values.size(); }
  std::size_t operator[](std::size_t f) const { return values[f]; }
  std::size_t& operator[](std::size_t f) { return values[f]; }
  auto operator<=>(const State&) const = default;
  bool operator==(const State&) const = default;
};

struct StateHash {
  std::size_t operator()(const State& s) const noexcept {
    std::size_t h = 1469598103934665603ull;
    for (auto v : s.values) h = (h ^ v) * 1099511628211ull;
    return h;
  }
};

inline std::string describe(const DatasetConfig& cfg, const State& s) {
  std::string out = "(";
  for (std::size_t f = 0; f < s.size(); ++f) {
    if (f) out += ", ";
    out += cfg.features[f].name + "=" + cfg.features[f].domain[s[f]].label;
  }
  return out + ")";
}

inline RawInstance to_raw(const DatasetConfig& cfg, const State& s) {
  RawInstance raw;
  for (std::size_t f = 0; f < s.size(); ++f) {
    const DomainValue& v = cfg.features[f].domain[s[f]];
    raw[cfg.features[f].name] = v.placeholder ? v.merged.front() : v.label;
  }
  return raw;
}

// ---------------------------------------------------------------------------
// Config loading

namespace detail {

inline Monotone parse_monotone(const std::string& s) {
  if (s == "none") return Monotone::none;
  if (s == "nondecreasing") return Monotone::nondecreasing;
  if (s == "nonincreasing") return Monotone::nonincreasing;
  throw ValidationError("unknown monotone '" + s + "'");
}

inline HeadDirection parse_direction(const std::string& s) {
  if (s == "eq") return HeadDirection::eq;
  if (s == "ge") return HeadDirection::ge;
  if (s == "le") return HeadDirection::le;
  throw ValidationError("unknown causal_head_direction '" + s + "'");
}

inline std::string json_scalar_text(const nlohmann::json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return std::to_string(j.get<long long>());
  if (j.is_number()) return format_number(j.get<double>());
  if (j.is_boolean()) return j.get<bool>() ? "True" : "False";
  throw ValidationError("expected a scalar value, got " + j.dump());
}

}  // namespace detail

inline DatasetConfig config_from_json(const nlohmann::json& j, std::filesystem::path base_dir = {}) {
  DatasetConfig cfg;
  cfg.base_dir = std::move(base_dir);
  try {
    cfg.name = j.value("name", std::string{});
    cfg.decision_rules = j.value("decision_rules", std::string{});
    cfg.causal_rules = j.value("causal_rules", std::string{});
    cfg.undesired_decision = j.value("undesired_decision", std::string{});
    cfg.norm_p = j.value("norm_p", 1);
    cfg.label_column = j.value("label_column", std::string{});
    if (j.contains("label_map"))
      for (auto& [k, v] : j.at("label_map").items()) cfg.label_map[k] = v.get<std::string>();
    if (j.contains("instance_defaults")) {
      RawInstance raw;
      for (auto& [k, v] : j.at("instance_defaults").items()) raw[k] = detail::json_scalar_text(v);
      cfg.instance_defaults = std::move(raw);
    }
    for (const auto& jf : j.at("features")) {
      FeatureSpec f;
      f.name = jf.at("name").get<std::string>();
      std::string kind = jf.value("kind", std::string("categorical"));
      if (kind == "numeric") {
        f.kind = FeatureKind::numeric;
        auto range = jf.at("numeric_range");
        if (!range.is_array() || range.size() != 2)
          throw ValidationError("feature '" + f.name + "': numeric_range must be [min, max]");
        f.range_min = range[0].get<double>();
        f.range_max = range[1].get<double>();
        f.step = jf.value("step", 1.0);
        if (jf.contains("cuts")) f.cuts = jf.at("cuts").get<std::vector<double>>();
        f.head_direction = detail::parse_direction(jf.value("causal_head_direction", std::string("eq")));
      } else if (kind == "categorical") {
        for (const auto& v : jf.at("domain")) f.values.push_back(detail::json_scalar_text(v));
      } else {
        throw ValidationError("feature '" + f.name + "': unknown kind '" + kind + "'");
      }
      f.weight = jf.value("weight", 1.0);
      f.is_mutable = jf.value("mutable", true);
      f.monotone = detail::parse_monotone(jf.value("monotone", std::string("none")));
      f.directly_actionable = jf.value("directly_actionable", true);
      cfg.features.push_back(std::move(f));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }

  std::set<std::string> names;
  for (const auto& f : cfg.features) {
    if (!names.insert(f.name).second) throw ValidationError("duplicate feature '" + f.name + "'");
    if (f.weight < 0 || !std::isfinite(f.weight))
      throw ValidationError("feature '" + f.name + "': weight must be nonnegative");
    if (f.numeric()) {
      if (!(f.range_min <= f.range_max)) throw ValidationError("feature '" + f.name + "': empty numeric_range");
      if (!(f.step > 0)) throw ValidationError("feature '" + f.name + "': step must be positive");
    } else {
      if (f.values.empty()) throw ValidationError("feature '" + f.name + "': empty domain");
      std::set<std::string> seen(f.values.begin(), f.values.end());
      if (seen.size() != f.values.size()) throw ValidationError("feature '" + f.name + "': duplicate domain value");
    }
  }
  if (cfg.norm_p < 0 || cfg.norm_p > 2) throw ValidationError("norm_p must be 0, 1 or 2");
  return cfg;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline DatasetConfig load_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Domain resolution

/// Numeric cut points contributed by one constant under a head direction.
inline void add_constant_cuts(const FeatureSpec& f, double t, std::vector<double>& cuts) {
  switch (f.head_direction) {
    case HeadDirection::ge:
      cuts.push_back(t - f.step);
      break;
    case HeadDirection::le:
      cuts.push_back(t);
      break;
    case HeadDirection::eq:
      cuts.push_back(t - f.step);
      cuts.push_back(t);
      break;
  }
}

/// Partitions [min, max] at `cuts` into [min,c1], (c1,c2], ..., (cm,max].
/// Intervals at or below the anchor are represented by their upper end,
/// intervals above it by lower end + step.
inline std::vector<DomainValue> numeric_domain(const FeatureSpec& f, std::vector<double> cuts, double anchor) {
  cuts.push_back(anchor);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  std::vector<double> inner;
  for (double c : cuts)
    if (c >= f.range_min && c < f.range_max) inner.push_back(c);

  std::vector<DomainValue> out;
  double lo = f.range_min;
  bool open = false;
  for (std::size_t i = 0; i <= inner.size(); ++i) {
    double hi = i < inner.size() ? inner[i] : f.range_max;
    DomainValue v;
    v.lower = lo;
    v.upper = hi;
    v.lower_open = open;
    if (hi <= anchor)
      v.number = hi;
    else
      v.number = open ? std::min(lo + f.step, hi) : lo;
    v.label = format_number(v.number);
    out.push_back(std::move(v));
    lo = hi;
    open = true;
  }
  return out;
}

/// Builds every feature's search domain. Categorical domains come from the
/// declared values; numeric domains are cut at every threshold the programs
/// apply to the feature plus the anchor value (range minimum if absent).
inline DatasetConfig resolve_domains(DatasetConfig cfg, const std::vector<const RuleProgram*>& programs,
                                     const RawInstance* anchor = nullptr) {
  for (auto& f : cfg.features) {
    if (!f.numeric()) {
      f.domain.clear();
      for (const auto& v : f.values) f.domain.emplace_back().label = v;
      continue;
    }
    std::vector<double> cuts = f.cuts;
    for (const RuleProgram* p : programs) {
      MentionedValues m = mentioned_values(*p, f.name);
      cuts.insert(cuts.end(), m.thresholds.begin(), m.thresholds.end());
      for (const auto& c : m.constants) {
        Constant k{c, false};
        if (!k.is_number())
          throw ValidationError("numeric feature '" + f.name + "' tested against non-numeric constant '" + c + "'");
        add_constant_cuts(f, k.number(), cuts);
      }
    }
    double a = f.range_min;
    if (anchor) {
      auto it = anchor->find(f.name);
      if (it != anchor->end()) {
        Constant k{it->second, false};
        if (!k.is_number())
          throw ValidationError("feature '" + f.name + "': '" + it->second + "' is not a number");
        a = k.number();
        if (a < f.range_min || a > f.range_max)
          throw ValidationError("feature '" + f.name + "': " + it->second + " outside numeric_range [" +
                                format_number(f.range_min) + ", " + format_number(f.range_max) + "]");
      }
    }
    f.domain = numeric_domain(f, std::move(cuts), a);
  }
  return cfg;
}

inline void check_resolved(const DatasetConfig& cfg) {
  for (const auto& f : cfg.features)
    if (f.domain.empty()) throw ValidationError("feature '" + f.name + "' has no resolved domain");
}

/// Resolves raw values to domain indices. Numeric values snap to the
/// interval that contains them.
inline State validate_state(const DatasetConfig& cfg, const RawInstance& raw) {
  check_resolved(cfg);
  State s;
  s.values.resize(cfg.features.size());
  for (std::size_t i = 0; i < cfg.features.size(); ++i) {
    const FeatureSpec& f = cfg.features[i];
    auto it = raw.find(f.name);
    if (it == raw.end()) throw ValidationError("missing feature '" + f.name + "'");
    const std::string& text = it->second;
    if (f.numeric()) {
      Constant k{text, false};
      if (!k.is_number()) throw ValidationError("feature '" + f.name + "': '" + text + "' is not a number");
      double x = k.number();
      if (x < f.range_min || x > f.range_max)
        throw ValidationError("feature '" + f.name + "': " + text + " out of range [" + format_number(f.range_min) +
                              ", " + format_number(f.range_max) + "]");
      auto d = std::find_if(f.domain.begin(), f.domain.end(), [&](const DomainValue& v) { return v.contains(x); });
      s[i] = static_cast<std::size_t>(d - f.domain.begin());
    } else {
      auto d = std::find_if(f.domain.begin(), f.domain.end(),
                            [&](const DomainValue& v) { return v.stands_for(text); });
      if (d == f.domain.end()) throw ValidationError("feature '" + f.name + "': unknown value '" + text + "'");
      s[i] = static_cast<std::size_t>(d - f.domain.begin());
    }
  }
  for (const auto& [k, _] : raw)
    if (!cfg.feature_index(k)) throw ValidationError("unknown feature '" + k + "'");
  return s;
}

/// Exact product of domain sizes.
inline std::uint64_t search_space_size(const DatasetConfig& cfg) {
  std::uint64_t n = 1;
  for (const auto& f : cfg.features)
    if (__builtin_mul_overflow(n, static_cast<std::uint64_t>(f.domain.size()), &n))
      throw ValidationError("search space exceeds 2^64 states");
  return n;
}

/// Lazy lexicographic enumeration of S, first feature slowest.
class StateRange {
 public:
  class iterator {
   public:
    using value_type = State;
    using difference_type = std::ptrdiff_t;
    using reference = const State&;
    using pointer = const State*;
    using iterator_category = std::input_iterator_tag;

    iterator() = default;
    iterator(const std::vector<std::size_t>* sizes, bool end) : sizes_(sizes), done_(end) {
      if (!end) {
        cur_.values.assign(sizes->size(), 0);
        for (auto n : *sizes)
          if (n == 0) done_ = true;
      }
    }
    const State& operator*() const { return cur_; }
    const State* operator->() const { return &cur_; }
    iterator& operator++() {
      std::size_t f = cur_.size();
      while (f > 0) {
        --f;
        if (++cur_[f] < (*sizes_)[f]) return *this;
        cur_[f] = 0;
      }
      done_ = true;
      return *this;
    }
    bool operator==(const iterator& o) const { return done_ == o.done_ && (done_ || cur_ == o.cur_); }

   private:
    const std::vector<std::size_t>* sizes_ = nullptr;
    State cur_;
    bool done_ = true;
  };

  explicit StateRange(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {}
  explicit StateRange(const DatasetConfig& cfg) {
    for (const auto& f : cfg.features) sizes_.push_back(f.domain.size());
  }
  iterator begin() const { return iterator(&sizes_, false); }
  iterator end() const { return iterator(&sizes_, true); }

 private:
  std::vector<std::size_t> sizes_;
};

inline StateRange enumerate_states(const DatasetConfig& cfg) { return StateRange(cfg); }

// ---------------------------------------------------------------------------
// Placeholder consolidation

/// Merges categorical values that no program mentions, other than the
/// instance's own value, into one `ph_<feature>` value. Only merges of two
/// or more values happen, so the operation is idempotent.
inline DatasetConfig consolidate_placeholders(const DatasetConfig& cfg, const std::vector<const RuleProgram*>& programs,
                                              const State* instance = nullptr) {
  check_resolved(cfg);
  DatasetConfig out = cfg;
  std::vector<std::size_t> new_index;
  for (std::size_t fi = 0; fi < cfg.features.size(); ++fi) {
    const FeatureSpec& f = cfg.features[fi];
    if (f.numeric()) continue;
    std::set<std::string> mentioned;
    for (const RuleProgram* p : programs) {
      auto m = mentioned_values(*p, f.name);
      mentioned.insert(m.constants.begin(), m.constants.end());
    }
    std::vector<std::size_t> merge;
    for (std::size_t i = 0; i < f.domain.size(); ++i) {
      const DomainValue& v = f.domain[i];
      bool is_mentioned = v.placeholder ? std::any_of(v.merged.begin(), v.merged.end(),
                                                      [&](const std::string& r) { return mentioned.count(r) > 0; })
                                        : mentioned.count(v.label) > 0;
      bool is_instance = instance && (*instance)[fi] == i;
      if (!is_mentioned && !is_instance) merge.push_back(i);
    }
    if (merge.size() < 2) continue;
    DomainValue ph;
    ph.label = "ph_" + f.name;
    ph.placeholder = true;
    for (auto i : merge) {
      const DomainValue& v = f.domain[i];
      if (v.placeholder)
        ph.merged.insert(ph.merged.end(), v.merged.begin(), v.merged.end());
      else
        ph.merged.push_back(v.label);
    }
    std::vector<DomainValue> dom;
    for (std::size_t i = 0; i < f.domain.size(); ++i) {
      if (i == merge.front())
        dom.push_back(ph);
      else if (!std::binary_search(merge.begin(), merge.end(), i))
        dom.push_back(f.domain[i]);
    }
    out.features[fi].domain = std::move(dom);
  }
  return out;
}

/// Maps a state of `from` to the state of `to` holding the same raw values
/// (placeholders resolve to their first merged value).
inline State translate_state(const DatasetConfig& from, const DatasetConfig& to, const State& s) {
  return validate_state(to, to_raw(from, s));
}

// ---------------------------------------------------------------------------
// CSV ingestion

/// RFC-4180 reader. Throws on unterminated quotes or stray characters
/// after a closing quote.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  std::size_t i = 0, line = 1;
  bool any = false;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
    any = false;
  };
  while (i < text.size()) {
    char c = text[i];
    if (c == '"' && field.empty()) {
      ++i;
      for (;;) {
        if (i >= text.size()) throw ValidationError("csv line " + std::to_string(line) + ": unterminated quote");
        if (text[i] == '"') {
          if (i + 1 < text.size() && text[i + 1] == '"') {
            field += '"';
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        if (text[i] == '\n') ++line;
        field += text[i++];
      }
      any = true;
      if (i < text.size() && text[i] != ',' && text[i] != '\n' && text[i] != '\r')
        throw ValidationError("csv line " + std::to_string(line) + ": text after closing quote");
      continue;
    }
    if (c == ',') {
      end_field();
      any = true;
      ++i;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      ++i;
      ++line;
      if (any || !field.empty() || !row.empty()) end_row();
    } else if (c == '"') {
      throw ValidationError("csv line " + std::to_string(line) + ": quote inside unquoted field");
    } else {
      field += c;
      any = true;
      ++i;
    }
  }
  if (any || !field.empty() || !row.empty()) end_row();
  return rows;
}

struct RowError {
  std::size_t row;  // 1-based data row
  std::string message;
};

struct IngestResult {
  std::vector<State> states;
  std::vector<std::string> labels;  // label column, when present
  std::vector<std::size_t> rows;    // source row of each state
  std::vector<RowError> errors;
};

inline IngestResult ingest_csv_text(const DatasetConfig& cfg, const std::string& text) {
  auto rows = parse_csv(text);
  if (rows.empty()) throw ValidationError("csv: missing header row");
  const auto& header = rows.front();
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const auto& f : cfg.features)
    if (!col.count(f.name)) throw ValidationError("csv: header lacks feature column '" + f.name + "'");
  std::optional<std::size_t> label_col;
  if (!cfg.label_column.empty() && col.count(cfg.label_column)) label_col = col[cfg.label_column];

  IngestResult out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != header.size())
      throw ValidationError("csv row " + std::to_string(r) + ": expected " + std::to_string(header.size()) +
                            " fields, got " + std::to_string(row.size()));
    RawInstance raw;
    for (const auto& f : cfg.features) raw[f.name] = row[col[f.name]];
    try {
      out.states.push_back(validate_state(cfg, raw));
      out.rows.push_back(r);
      if (label_col) out.labels.push_back(row[*label_col]);
    } catch (const ValidationError& e) {
      out.errors.push_back({r, "row " + std::to_string(r) + ": " + e.what()});
    }
  }
  return out;
}

inline IngestResult ingest_csv(const DatasetConfig& cfg, const std::filesystem::path& path) {
  return ingest_csv_text(cfg, read_text_file(path));
}

}  // namespace p2c
