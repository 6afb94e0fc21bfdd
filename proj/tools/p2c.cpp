#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "p2c/p2c.hpp"

namespace fs = std::filesystem;
using namespace p2c;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitNoSolution = 2;

struct Options {
  std::string config;
  std::string rules;
  std::string causal;
  std::string instance;
  std::string norm;
  std::string cost_mode = "p2c";
  std::string planner = "causal";
  std::size_t k = 1;
  std::size_t max_dpl = 0;
  std::size_t instances = 20;
  std::uint64_t seed = 7;
  std::size_t repeats = 5;
  std::string output = "text";
  std::string report;
  bool no_consolidate = false;
  std::vector<std::string> datasets;
  std::string command_line;
};

class Stopwatch {
 public:
  double lap() {
    auto now = std::chrono::steady_clock::now();
    double ms = std::chrono::duration<double, std::milli>(now - last_).count();
    last_ = now;
    return ms;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

int parse_norm(const std::string& s, int fallback) {
  if (s.empty()) return fallback;
  if (s == "l0") return 0;
  if (s == "l1") return 1;
  if (s == "l2") return 2;
  throw ValidationError("--norm must be l0, l1 or l2");
}

CostMode parse_mode(const std::string& s) {
  if (s == "p2c") return CostMode::p2c;
  if (s == "all-changes" || s == "all_changes") return CostMode::all_changes;
  throw ValidationError("--cost-mode must be p2c or all-changes");
}

Bundle bundle_for(const Options& o) {
  std::optional<fs::path> rules, causal;
  if (!o.rules.empty()) rules = o.rules;
  if (!o.causal.empty()) causal = o.causal;
  return load_bundle(o.config, rules, causal);
}

RawInstance instance_for(const Options& o, const Bundle& b) {
  RawInstance raw = b.config.instance_defaults.value_or(RawInstance{});
  if (!o.instance.empty())
    for (auto& [k, v] : parse_instance(o.instance)) raw[k] = v;
  if (raw.empty()) throw ValidationError("no --instance given and the config has no instance_defaults");
  return raw;
}

void emit(const Options& o, const ordered_json& json, const std::string& text) {
  if (o.output == "json")
    std::cout << json.dump(2) << "\n";
  else
    std::cout << text;
  if (!o.report.empty()) {
    std::ofstream out(o.report);
    if (!out) throw Error("cannot write report to " + o.report);
    out << json.dump(2) << "\n";
  }
}

void warn(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

int cmd_validate(const Options& o) {
  ordered_json diag;
  diag["config"] = o.config;
  std::vector<std::string> errors;
  std::optional<DatasetConfig> cfg;
  try {
    cfg = load_config(o.config);
  } catch (const Error& e) {
    errors.push_back(o.config + ": " + e.what());
  }
  auto locate = [&](const std::string& given, const std::string& from_cfg) -> std::optional<fs::path> {
    if (!given.empty()) return fs::path(given);
    if (!cfg || from_cfg.empty()) return std::nullopt;
    fs::path p(from_cfg);
    return p.is_absolute() ? p : cfg->base_dir / p;
  };
  std::vector<std::string> warnings;
  std::vector<std::pair<fs::path, ProgramKind>> files;
  if (auto p = locate(o.rules, cfg ? cfg->decision_rules : "")) files.emplace_back(*p, ProgramKind::decision);
  else if (cfg) errors.push_back(o.config + ": no decision_rules given");
  if (auto p = locate(o.causal, cfg ? cfg->causal_rules : "")) files.emplace_back(*p, ProgramKind::causal);
  std::vector<RuleProgram> programs;
  for (const auto& [path, kind] : files) {
    try {
      std::string text = read_text_file(path);
      if (kind == ProgramKind::causal && !has_verified_header(text))
        warnings.push_back(path.string() + ": causal rules lack a '% verified:' header");
      RuleProgram prog = parse_rule_program(text, kind);
      if (cfg) cross_check(*cfg, prog);
      programs.push_back(std::move(prog));
    } catch (const ParseError& e) {
      errors.push_back(e.in_file(path.string()).what());
    } catch (const Error& e) {
      errors.push_back(path.string() + ": " + e.what());
    }
  }
  if (errors.empty() && cfg) {
    try {
      std::vector<const RuleProgram*> ptrs;
      for (const auto& p : programs) ptrs.push_back(&p);
      DatasetConfig resolved = resolve_domains(*cfg, ptrs, nullptr);
      RuleProgram causal;
      causal.kind = ProgramKind::causal;
      Problem prob(resolved, programs[0], programs.size() > 1 ? programs[1] : causal);
      diag["search_space"] = search_space_size(resolved);
      if (cfg->instance_defaults) (void)validate_state(resolved, *cfg->instance_defaults);
    } catch (const Error& e) {
      errors.push_back(e.what());
    }
  }
  diag["ok"] = errors.empty();
  diag["errors"] = errors;
  diag["warnings"] = warnings;
  std::string text;
  for (const auto& e : errors) text += "error: " + e + "\n";
  for (const auto& w : warnings) text += "warning: " + w + "\n";
  if (errors.empty()) text += "ok\n";
  emit(o, diag, text);
  return errors.empty() ? kExitOk : kExitInvalid;
}

RunReport base_report(const Options& o, const Bundle& b, const RawInstance& raw) {
  RunReport r;
  r.command = o.command_line;
  r.config_digest = digest({read_text_file(b.config_path), unparse(b.decision), unparse(b.causal)});
  for (const auto& f : b.config.features)
    if (raw.count(f.name)) r.instance[f.name] = raw.at(f.name);
  r.warnings = b.warnings;
  return r;
}

int cmd_mincf(const Options& o, bool with_path) {
  Stopwatch clock;
  Bundle b = bundle_for(o);
  warn(b.warnings);
  RawInstance raw = instance_for(o, b);
  RunReport report = base_report(o, b, raw);
  Problem full = make_problem(b, &raw, false);
  report.space_size = search_space_size(full.config);
  Problem reduced = make_problem(b, &raw, true);
  report.reduced_size = search_space_size(reduced.config);
  const Problem& prob = o.no_consolidate ? full : reduced;
  State i = validate_state(prob.config, raw);
  report.timing_ms["load"] = clock.lap();

  int p = parse_norm(o.norm, b.config.norm_p);
  CostMode mode = parse_mode(o.cost_mode);
  WeightVector w = config_weights(prob.config);
  CostReport best = min_cf(prob, i, w, p, mode);
  report.timing_ms["min_cf"] = clock.lap();
  report.s_star = cost_report_json(prob, i, best);
  if (!with_path && o.k > 1) {
    report.nearest = ordered_json::array();
    for (const auto& r : k_counterfactuals(prob, i, w, p, mode, o.k)) report.nearest.push_back(cost_report_json(prob, i, r));
    report.timing_ms["k_nearest"] = clock.lap();
  }

  if (with_path) {
    Path path;
    report.planner = o.planner;
    if (o.planner == "causal")
      path = find_path(prob, i, best.target, {o.max_dpl, p});
    else if (o.planner == "naive")
      path = naive_find_path(prob, i, best.target);
    else
      throw ValidationError("--planner must be causal or naive");
    report.timing_ms["find_path"] = clock.lap();
    LegalityReport legal = path_is_legal(path, prob);
    report.timing_ms["legality"] = clock.lap();
    report.path = path_json(prob, path);
    report.legality = legality_json(prob, legal);
    report.path_ends_at_s_star = path.end() == best.target;
    if (!*report.path_ends_at_s_star)
      std::cerr << "note: path ends at a goal state other than s*\n";
  }
  emit(o, report.to_json(), report.to_text());
  return kExitOk;
}

int cmd_bench(const Options& o) {
  BenchmarkSummary summary;
  BenchOptions opt;
  opt.instances = o.instances;
  opt.seed = o.seed;
  opt.repeats = o.repeats;
  opt.max_dpl = o.max_dpl;
  std::vector<std::string> targets = o.datasets;
  if (!o.config.empty()) targets.insert(targets.begin(), o.config);
  if (targets.empty()) throw ValidationError("bench needs at least one dataset config");
  for (const auto& t : targets) {
    fs::path path(t);
    if (fs::is_directory(path)) path /= "config.json";
    Bundle b = load_bundle(path);
    warn(b.warnings);
    summary.rows.push_back(run_benchmark(b, opt));
  }
  emit(o, benchmark_json(summary), benchmark_text(summary));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Causally compliant counterfactuals and recourse paths over rule-based models"};
  app.require_subcommand(1);
  Options o;
  for (int a = 0; a < argc; ++a) o.command_line += (a ? " " : "") + std::string(argv[a]);

  auto common = [&](CLI::App* sub) {
    sub->add_option("--rules", o.rules, "Decision rule file (overrides the config)");
    sub->add_option("--causal", o.causal, "Causal rule file (overrides the config)");
    sub->add_option("--output", o.output, "Output format")->check(CLI::IsMember({"json", "text"}));
    sub->add_option("--report", o.report, "Also write the JSON report to FILE");
  };
  auto search = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Dataset config JSON")->required();
    sub->add_option("--instance", o.instance, "KEY=VALUE,... (defaults from the config)");
    sub->add_option("--norm", o.norm, "l0, l1 or l2 (defaults to the config's norm_p)");
    sub->add_option("--cost-mode", o.cost_mode, "p2c or all-changes");
    sub->add_flag("--no-consolidate", o.no_consolidate, "Search the unconsolidated space");
    common(sub);
  };

  auto* validate = app.add_subcommand("validate", "Parse and cross-check a config and its rule files");
  validate->add_option("--config", o.config, "Dataset config JSON")->required();
  common(validate);

  auto* mincf = app.add_subcommand("mincf", "Minimal causally compliant counterfactual");
  search(mincf);
  mincf->add_option("--k", o.k, "Also list the k cheapest counterfactuals")->check(CLI::PositiveNumber);

  auto* path = app.add_subcommand("path", "Counterfactual plus a recourse path");
  search(path);
  path->add_option("--planner", o.planner, "causal or naive")->check(CLI::IsMember({"causal", "naive"}));
  path->add_option("--max-dpl", o.max_dpl, "Direct-action budget ceiling (0: number of features)");

  auto* bench = app.add_subcommand("bench", "Seeded benchmark over one or more datasets");
  bench->add_option("datasets", o.datasets, "Config files or dataset directories");
  bench->add_option("--config", o.config, "Dataset config JSON");
  bench->add_option("--instances", o.instances, "Instances per dataset");
  bench->add_option("--seed", o.seed, "Sampling seed");
  bench->add_option("--repeats", o.repeats, "Timing repeats per instance");
  bench->add_option("--max-dpl", o.max_dpl, "Direct-action budget ceiling (0: number of features)");
  bench->add_option("--output", o.output, "Output format")->check(CLI::IsMember({"json", "text"}));
  bench->add_option("--report", o.report, "Also write the JSON report to FILE");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (validate->parsed()) return cmd_validate(o);
    if (mincf->parsed()) return cmd_mincf(o, false);
    if (path->parsed()) return cmd_mincf(o, true);
    if (bench->parsed()) return cmd_bench(o);
  } catch (const NoCounterfactual& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNoSolution;
  } catch (const SearchExhausted& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNoSolution;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  return kExitInvalid;
}
