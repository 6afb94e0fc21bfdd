#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "p2c/consistency.hpp"
#include "p2c/domain.hpp"
#include "p2c/error.hpp"
#include "p2c/rules.hpp"

namespace p2c {

/// A config plus its two rule programs, domains not yet resolved.
struct Bundle {
  DatasetConfig config;
  RuleProgram decision;
  RuleProgram causal;
  std::filesystem::path config_path;
  std::filesystem::path decision_path;
  std::filesystem::path causal_path;
  std::vector<std::string> warnings;

  std::vector<const RuleProgram*> programs() const { return {&decision, &causal}; }
};

inline bool has_verified_header(const std::string& text) {
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    std::string line = text.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
    std::size_t first = line.find_first_not_of(" \t\r");
    if (first != std::string::npos) {
      if (line[first] != '%') return false;
      if (line.find("verified:", first) != std::string::npos) return true;
    }
    if (end == std::string::npos) break;
    pos = end + 1;
  }
  return false;
}

inline RuleProgram load_rules(const std::filesystem::path& path, ProgramKind kind) {
  std::string text = read_text_file(path);
  try {
    return parse_rule_program(text, kind);
  } catch (const ParseError& e) {
    throw e.in_file(path.string());
  }
}

/// Loads a config and its rule files. Relative rule paths resolve against
/// the config's directory; explicit overrides win over the config's paths.
inline Bundle load_bundle(const std::filesystem::path& config_path,
                          const std::optional<std::filesystem::path>& decision_override = std::nullopt,
                          const std::optional<std::filesystem::path>& causal_override = std::nullopt) {
  Bundle b;
  b.config_path = config_path;
  b.config = load_config(config_path);
  auto locate = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : b.config.base_dir / path;
  };
  if (decision_override)
    b.decision_path = *decision_override;
  else if (!b.config.decision_rules.empty())
    b.decision_path = locate(b.config.decision_rules);
  else
    throw ValidationError(config_path.string() + ": no decision_rules given");
  b.decision = load_rules(b.decision_path, ProgramKind::decision);

  if (causal_override)
    b.causal_path = *causal_override;
  else if (!b.config.causal_rules.empty())
    b.causal_path = locate(b.config.causal_rules);
  if (!b.causal_path.empty()) {
    std::string text = read_text_file(b.causal_path);
    if (!has_verified_header(text))
      b.warnings.push_back(b.causal_path.string() + ": causal rules lack a '% verified:' header");
    try {
      b.causal = parse_rule_program(text, ProgramKind::causal);
    } catch (const ParseError& e) {
      throw e.in_file(b.causal_path.string());
    }
  } else {
    b.causal.kind = ProgramKind::causal;
  }
  cross_check(b.config, b.decision);
  cross_check(b.config, b.causal);
  return b;
}

/// Resolves domains around `anchor` (if any) and compiles both programs.
/// With `consolidate`, unmentioned categorical values other than the
/// anchor's merge into placeholders.
inline Problem make_problem(const Bundle& b, const RawInstance* anchor = nullptr, bool consolidate = false) {
  DatasetConfig cfg = resolve_domains(b.config, b.programs(), anchor);
  if (consolidate) {
    std::optional<State> inst;
    if (anchor) inst = validate_state(cfg, *anchor);
    cfg = consolidate_placeholders(cfg, b.programs(), inst ? &*inst : nullptr);
  }
  return Problem(std::move(cfg), b.decision, b.causal);
}

/// Parses `KEY=VALUE,KEY=VALUE`.
inline RawInstance parse_instance(const std::string& text) {
  RawInstance raw;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find(',', pos);
    std::string item = text.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
    if (!item.empty()) {
      std::size_t eq = item.find('=');
      if (eq == std::string::npos || eq == 0)
        throw ValidationError("instance item '" + item + "' is not KEY=VALUE");
      std::string key = item.substr(0, eq);
      if (raw.count(key)) throw ValidationError("instance sets '" + key + "' twice");
      raw[key] = item.substr(eq + 1);
    }
    if (end == std::string::npos) break;
    pos = end + 1;
  }
  return raw;
}

}  // namespace p2c
