#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>

#include "support.hpp"

using namespace p2c;
using namespace testing;

namespace {

struct Run {
  int status = -1;
  std::string out;
};

// Runs the CLI with stderr folded into stdout.
Run cli(const std::string& args) {
  std::string cmd = std::string("'") + P2C_CLI + "' " + args + " 2>&1";
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  int st = ::pclose(pipe);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string config_arg(const std::string& name) { return "--config '" + config_path(name).string() + "'"; }

void strip_timing(nlohmann::json& j) {
  if (j.is_object()) {
    for (const char* key : {"avg_time_ms", "reduced_avg_time_ms", "time_ms", "reduced_time_ms", "timing_ms"})
      j.erase(key);
    for (auto& [k, v] : j.items()) strip_timing(v);
  } else if (j.is_array()) {
    for (auto& v : j) strip_timing(v);
  }
}

std::filesystem::path scratch(const std::string& name, const std::string& text) {
  auto dir = std::filesystem::temp_directory_path() / "p2c_test_bench";
  std::filesystem::create_directories(dir);
  auto p = dir / name;
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST_CASE("benchmark reports are reproducible") {
  BenchOptions opt;
  opt.instances = 5;
  opt.repeats = 1;
  BenchmarkSummary a, b;
  for (const char* ds : {"cars", "german"}) {
    a.rows.push_back(run_benchmark(bundle(ds), opt));
    b.rows.push_back(run_benchmark(bundle(ds), opt));
  }
  nlohmann::json ja = benchmark_json(a), jb = benchmark_json(b);
  strip_timing(ja);
  strip_timing(jb);
  CHECK(ja == jb);
  opt.seed = 8;
  BenchmarkSummary c;
  c.rows.push_back(run_benchmark(bundle("cars"), opt));
  c.rows.push_back(run_benchmark(bundle("german"), opt));
  nlohmann::json jc = benchmark_json(c);
  strip_timing(jc);
  CHECK(jc != ja);
}

TEST_CASE("sampled instances are rejected and consistent") {
  Problem prob = make_problem(bundle("german"));
  auto sample = sample_instances(prob, 20, 7);
  REQUIRE(sample.size() == 20);
  std::set<State> unique(sample.begin(), sample.end());
  CHECK(unique.size() == 20);
  for (const auto& s : sample) {
    CHECK(prob.decision.rejects(s));
    CHECK(prob.causal.consistent(s));
  }
  CHECK(sample_instances(prob, 20, 7) == sample);
}

TEST_CASE("benchmark row on cars") {
  BenchOptions opt;
  opt.instances = 20;
  opt.repeats = 1;
  BenchmarkRow row = run_benchmark(bundle("cars"), opt);
  CHECK(row.instances == 20);
  CHECK(row.failures == 0);
  CHECK(row.space_size == 1728);
  CHECK(row.reduced_size < 1728);
  CHECK(row.all_costs_preserved);
  CHECK(row.legality_rate == 1.0);
  CHECK(row.naive_legality_rate == 1.0);
  std::string text = benchmark_text(BenchmarkSummary{{row}});
  CHECK_THAT(text, Catch::Matchers::ContainsSubstring("cars"));
}

TEST_CASE("cli exit codes") {
  CHECK(cli("validate " + config_arg("cars")).status == 0);

  auto broken = scratch("broken.rules", "label(X,'negative') :- safety(X,'low')\n");
  Run r = cli("validate " + config_arg("cars") + " --rules '" + broken.string() + "'");
  CHECK(r.status == 1);
  CHECK_THAT(r.out, Catch::Matchers::ContainsSubstring("broken.rules:"));

  auto unknown = scratch("unknown.rules", "label(X,'negative') :- wheels(X,'3').\n");
  r = cli("validate " + config_arg("cars") + " --rules '" + unknown.string() + "'");
  CHECK(r.status == 1);
  CHECK_THAT(r.out, Catch::Matchers::ContainsSubstring("wheels"));

  r = cli("mincf " + config_arg("example1") + " --instance bank_balance=70000");
  CHECK(r.status == 1);
  r = cli("mincf " + config_arg("example1") + " --instance bank_balance=abc");
  CHECK(r.status == 1);
  r = cli("mincf " + config_arg("example1") + " --norm l7");
  CHECK(r.status == 1);
  r = cli("frobnicate");
  CHECK(r.status != 0);
}

TEST_CASE("cli cost modes on example two") {
  Run p = cli("mincf " + config_arg("example2") + " --norm l0 --output json");
  Run a = cli("mincf " + config_arg("example2") + " --norm l0 --cost-mode all-changes --output json");
  REQUIRE(p.status == 0);
  REQUIRE(a.status == 0);
  auto jp = nlohmann::json::parse(p.out.substr(p.out.find('{')));
  auto ja = nlohmann::json::parse(a.out.substr(a.out.find('{')));
  CHECK(jp["s_star"]["cost"] == 2.0);
  CHECK(ja["s_star"]["cost"] == 3.0);
  CHECK(jp["s_star"]["causal_free_features"] == nlohmann::json::array({"credit_score"}));
}

TEST_CASE("cli path report") {
  auto report = std::filesystem::temp_directory_path() / "p2c_test_bench" / "path.json";
  std::filesystem::create_directories(report.parent_path());
  Run r = cli("path " + config_arg("example2") + " --report '" + report.string() + "'");
  REQUIRE(r.status == 0);
  std::ifstream in(report);
  auto j = nlohmann::json::parse(in);
  CHECK_THAT(j["command"].get<std::string>(), Catch::Matchers::ContainsSubstring(" path "));
  CHECK(j["legality"]["legal"] == true);
  CHECK(j["path"]["states"] == 3);
  CHECK(j["path"]["steps"].size() == 3);
  CHECK(j["path_ends_at_s_star"] == true);

  Run naive = cli("path " + config_arg("example2") + " --planner naive");
  CHECK(naive.status == 0);
  CHECK_THAT(naive.out, Catch::Matchers::ContainsSubstring("cannot be changed directly"));
}
