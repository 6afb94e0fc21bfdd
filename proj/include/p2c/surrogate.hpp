#pragma once

#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cctype>
#include <cerrno>
#include <csignal>
#include <cstddef>
#include <cstring>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "p2c/domain.hpp"
#include "p2c/error.hpp"
#include "p2c/evaluate.hpp"
#include "p2c/rules.hpp"

namespace p2c {

/// Black-box classifier: state to label.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::string predict(const State& s) const = 0;
};

/// Memorised (state, label) pairs with an optional fallback label.
class TableModel : public Predictor {
 public:
  TableModel() = default;
  explicit TableModel(std::string fallback) : fallback_(std::move(fallback)) {}

  void add(const State& s, std::string label) { table_[s] = std::move(label); }

  std::string predict(const State& s) const override {
    auto it = table_.find(s);
    if (it != table_.end()) return it->second;
    if (fallback_.empty()) throw Error("table model has no label for this state");
    return fallback_;
  }

 private:
  std::map<State, std::string> table_;
  std::string fallback_;
};

/// A decision program used as a predictor: head label when a rule fires,
/// `otherwise` when none does.
class RuleModel : public Predictor {
 public:
  RuleModel(const RuleProgram& prog, const DatasetConfig& cfg, std::string otherwise)
      : prog_(prog, cfg), otherwise_(std::move(otherwise)) {
    if (const Atom* h = prog.decision_head()) label_ = h->value.text;
  }

  std::string predict(const State& s) const override { return prog_.any_fires(s) ? label_ : otherwise_; }

 private:
  BoundProgram prog_;
  std::string label_;
  std::string otherwise_;
};

/// Runs `/bin/sh -c command` once per state, writes one CSV row in config
/// feature order to its stdin and reads the label from its stdout.
class ExternalCommandModel : public Predictor {
 public:
  ExternalCommandModel(std::string command, DatasetConfig cfg) : command_(std::move(command)), cfg_(std::move(cfg)) {}

  std::string predict(const State& s) const override {
    std::string row;
    RawInstance raw = to_raw(cfg_, s);
    for (std::size_t f = 0; f < cfg_.features.size(); ++f) {
      if (f) row += ',';
      row += csv_field(raw.at(cfg_.features[f].name));
    }
    row += '\n';
    return run(row);
  }

 private:
  static std::string csv_field(const std::string& v) {
    if (v.find_first_of(",\"\r\n") == std::string::npos) return v;
    std::string out = "\"";
    for (char c : v) {
      if (c == '"') out += '"';
      out += c;
    }
    return out + "\"";
  }

  std::string run(const std::string& input) const {
    int in_pipe[2], out_pipe[2];
    if (pipe(in_pipe) != 0) throw Error(std::string("pipe: ") + std::strerror(errno));
    if (pipe(out_pipe) != 0) {
      close(in_pipe[0]);
      close(in_pipe[1]);
      throw Error(std::string("pipe: ") + std::strerror(errno));
    }
    pid_t pid = fork();
    if (pid < 0) throw Error(std::string("fork: ") + std::strerror(errno));
    if (pid == 0) {
      dup2(in_pipe[0], STDIN_FILENO);
      dup2(out_pipe[1], STDOUT_FILENO);
      close(in_pipe[0]);
      close(in_pipe[1]);
      close(out_pipe[0]);
      close(out_pipe[1]);
      execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(in_pipe[0]);
    close(out_pipe[1]);
    auto old = std::signal(SIGPIPE, SIG_IGN);
    std::size_t off = 0;
    while (off < input.size()) {
      ssize_t n = write(in_pipe[1], input.data() + off, input.size() - off);
      if (n <= 0) break;
      off += static_cast<std::size_t>(n);
    }
    close(in_pipe[1]);
    std::string out;
    char buf[512];
    for (;;) {
      ssize_t n = read(out_pipe[0], buf, sizeof buf);
      if (n <= 0) break;
      out.append(buf, static_cast<std::size_t>(n));
    }
    close(out_pipe[0]);
    int status = 0;
    waitpid(pid, &status, 0);
    std::signal(SIGPIPE, old);
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
      throw Error("predictor command exited with status " +
                  std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1));
    while (!out.empty() && std::isspace(static_cast<unsigned char>(out.back()))) out.pop_back();
    std::size_t start = 0;
    while (start < out.size() && std::isspace(static_cast<unsigned char>(out[start]))) ++start;
    out.erase(0, start);
    if (out.empty() || out.find_first_of(" \t\r\n") != std::string::npos)
      throw Error("predictor command must print exactly one label token");
    return out;
  }

  std::string command_;
  DatasetConfig cfg_;
};

struct LabeledDataset {
  std::vector<State> states;
  std::vector<std::string> labels;

  std::set<std::string> label_set() const { return {labels.begin(), labels.end()}; }
};

/// Labels every state with the predictor; failures name the 1-based row.
inline LabeledDataset label_dataset(const Predictor& model, const std::vector<State>& data) {
  LabeledDataset out;
  out.states = data;
  out.labels.reserve(data.size());
  for (std::size_t r = 0; r < data.size(); ++r) {
    try {
      out.labels.push_back(model.predict(data[r]));
    } catch (const Error& e) {
      throw Error("row " + std::to_string(r + 1) + ": " + e.what());
    }
  }
  return out;
}

/// Rule induction from labelled data.
class Learner {
 public:
  virtual ~Learner() = default;
  virtual RuleProgram train(const LabeledDataset& data) const = 0;
};

/// Returns an expert-verified rule file instead of inducing rules.
class RuleFileLearner : public Learner {
 public:
  explicit RuleFileLearner(std::filesystem::path path) : path_(std::move(path)) {}

  RuleProgram train(const LabeledDataset&) const override {
    return parse_rule_program(read_text_file(path_), ProgramKind::decision);
  }

 private:
  std::filesystem::path path_;
};

using ModelSource = std::variant<RuleProgram, const Predictor*>;

/// A rule-based model is returned as is; anything else is labelled on
/// `data` and handed to the learner.
inline RuleProgram extract_logic(const ModelSource& model, const std::vector<State>& data, const Learner& learner) {
  if (const auto* prog = std::get_if<RuleProgram>(&model)) return *prog;
  const Predictor* pred = std::get<const Predictor*>(model);
  if (!pred) throw ValidationError("extract_logic: null predictor");
  LabeledDataset labelled = label_dataset(*pred, data);
  if (labelled.label_set().size() > 2)
    throw ValidationError("extract_logic: predictor produced " + std::to_string(labelled.label_set().size()) +
                          " distinct labels, expected a binary label set");
  try {
    return learner.train(labelled);
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw Error(std::string("learner failed: ") + e.what());
  }
}

/// Fraction of states on which the two predictors agree.
inline double agreement(const Predictor& a, const Predictor& b, const std::vector<State>& data) {
  if (data.empty()) return 1.0;
  std::size_t same = 0;
  for (const auto& s : data) same += a.predict(s) == b.predict(s);
  return static_cast<double>(same) / static_cast<double>(data.size());
}

}  // namespace p2c
