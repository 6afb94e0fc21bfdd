#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstdlib>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "p2c/error.hpp"

namespace p2c {

enum class ProgramKind { decision, causal };

/// Exception predicates are `ab` followed by digits (ab1, ab2, ...).
inline bool is_aux_predicate(std::string_view name) {
  if (name.size() < 3 || name.substr(0, 2) != "ab") return false;
  for (std::size_t i = 2; i < name.size(); ++i)
    if (!std::isdigit(static_cast<unsigned char>(name[i]))) return false;
  return true;
}

/// A constant as written in the source. `text` is the unquoted payload;
/// numeric constants keep their original spelling so unparse is exact.
struct Constant {
  std::string text;
  bool quoted = false;

  bool is_number() const {
    if (quoted || text.empty()) return false;
    char* end = nullptr;
    std::strtod(text.c_str(), &end);
    return end == text.c_str() + text.size();
  }
  double number() const { return std::strtod(text.c_str(), nullptr); }

  bool operator==(const Constant&) const = default;
};

struct Atom {
  std::string predicate;
  std::string subject = "X";
  bool is_variable = false;  // value is a numeric variable binding
  Constant value;            // constant, when !is_variable
  std::string variable;      // variable name, when is_variable
};

enum class LiteralKind {
  feature_test,
  negated_feature_test,
  numeric_binding,
  comparison,
  negated_comparison,
  aux_call,
  negated_aux_call,
};

struct BodyLiteral {
  LiteralKind kind = LiteralKind::feature_test;
  Atom atom;             // tests, bindings, aux calls
  std::string variable;  // comparisons
  Constant bound;        // comparisons (always numeric)

  bool negated() const {
    return kind == LiteralKind::negated_feature_test || kind == LiteralKind::negated_comparison ||
           kind == LiteralKind::negated_aux_call;
  }
  bool is_comparison() const {
    return kind == LiteralKind::comparison || kind == LiteralKind::negated_comparison;
  }
};

struct Rule {
  Atom head;
  std::vector<BodyLiteral> body;
  std::size_t line = 0;

  bool is_aux() const { return is_aux_predicate(head.predicate); }

  /// Feature whose value is bound to `var` in this body, or empty.
  std::string binding_feature(const std::string& var) const {
    for (const auto& lit : body)
      if (lit.kind == LiteralKind::numeric_binding && lit.atom.variable == var)
        return lit.atom.predicate;
    return {};
  }
};

struct RuleProgram {
  ProgramKind kind = ProgramKind::decision;
  std::vector<Rule> rules;      // main rules, source order
  std::vector<Rule> aux_rules;  // exception rules, source order

  bool empty() const { return rules.empty() && aux_rules.empty(); }

  /// Head (predicate, value) shared by every decision rule; empty program
  /// yields nullptr.
  const Atom* decision_head() const { return rules.empty() ? nullptr : &rules.front().head; }
};

namespace detail {

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) {}

  void skip_space() {
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == '%') {
        while (pos_ < text_.size() && text_[pos_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  bool at_end() {
    skip_space();
    return pos_ >= text_.size();
  }

  char peek() {
    skip_space();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }

  bool try_consume(std::string_view tok) {
    skip_space();
    if (text_.substr(pos_, tok.size()) != tok) return false;
    for (std::size_t i = 0; i < tok.size(); ++i) advance();
    return true;
  }

  void expect(std::string_view tok) {
    if (!try_consume(tok)) fail("expected '" + std::string(tok) + "'" + found());
  }

  static bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
  static bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

  std::string identifier() {
    skip_space();
    if (pos_ >= text_.size() || !ident_start(text_[pos_])) fail("expected identifier" + found());
    std::size_t start = pos_;
    while (pos_ < text_.size() && ident_char(text_[pos_])) advance();
    return std::string(text_.substr(start, pos_ - start));
  }

  /// Peeks at the identifier at the cursor without consuming it.
  std::string peek_identifier() {
    skip_space();
    std::size_t p = pos_;
    if (p >= text_.size() || !ident_start(text_[p])) return {};
    while (p < text_.size() && ident_char(text_[p])) ++p;
    return std::string(text_.substr(pos_, p - pos_));
  }

  std::string number() {
    skip_space();
    std::size_t start = pos_;
    if (pos_ < text_.size() && (text_[pos_] == '-' || text_[pos_] == '+')) advance();
    std::size_t digits = 0;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      advance();
      ++digits;
    }
    // a '.' not followed by a digit ends the clause
    if (pos_ + 1 < text_.size() && text_[pos_] == '.' && std::isdigit(static_cast<unsigned char>(text_[pos_ + 1]))) {
      advance();
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) advance();
    }
    if (digits == 0) fail("expected number" + found());
    return std::string(text_.substr(start, pos_ - start));
  }

  std::string quoted() {
    expect("'");
    std::size_t start = pos_;
    while (pos_ < text_.size() && text_[pos_] != '\'') {
      if (text_[pos_] == '\n') fail("unterminated quoted constant");
      advance();
    }
    if (pos_ >= text_.size()) fail("unterminated quoted constant");
    std::string out(text_.substr(start, pos_ - start));
    advance();
    return out;
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(line_, col_, what); }

  std::string found() {
    if (pos_ >= text_.size()) return ", found end of input";
    return std::string(", found '") + text_[pos_] + "'";
  }

  std::size_t line() {
    skip_space();
    return line_;
  }

 private:
  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t col_ = 1;
};

inline bool is_variable_name(const std::string& s) {
  return !s.empty() && std::isupper(static_cast<unsigned char>(s[0]));
}

inline Atom parse_atom(Lexer& lx, const std::string& predicate) {
  Atom a;
  a.predicate = predicate;
  lx.expect("(");
  a.subject = lx.identifier();
  if (!is_variable_name(a.subject)) lx.fail("subject of '" + predicate + "' must be a variable");
  lx.expect(",");
  char c = lx.peek();
  if (c == '\'') {
    a.value = Constant{lx.quoted(), true};
  } else if (c == '-' || c == '+' || std::isdigit(static_cast<unsigned char>(c))) {
    a.value = Constant{lx.number(), false};
  } else {
    std::string id = lx.identifier();
    if (is_variable_name(id)) {
      a.is_variable = true;
      a.variable = id;
    } else {
      a.value = Constant{id, false};
    }
  }
  lx.expect(")");
  return a;
}

inline BodyLiteral parse_comparison(Lexer& lx, bool negated) {
  BodyLiteral lit;
  lit.kind = negated ? LiteralKind::negated_comparison : LiteralKind::comparison;
  lit.variable = lx.identifier();
  if (!is_variable_name(lit.variable)) lx.fail("comparison operand must be a variable");
  lx.expect("=<");
  lit.bound = Constant{lx.number(), false};
  return lit;
}

inline BodyLiteral parse_literal(Lexer& lx) {
  std::string id = lx.peek_identifier();
  if (id == "not") {
    lx.identifier();
    if (lx.peek() == '(') {
      lx.expect("(");
      BodyLiteral lit = parse_comparison(lx, true);
      lx.expect(")");
      return lit;
    }
    std::string pred = lx.identifier();
    if (is_variable_name(pred)) lx.fail("'not' must wrap an atom or a comparison");
    BodyLiteral lit;
    lit.atom = parse_atom(lx, pred);
    if (lit.atom.is_variable) lx.fail("negated atom '" + pred + "' cannot bind a variable");
    lit.kind = is_aux_predicate(pred) ? LiteralKind::negated_aux_call : LiteralKind::negated_feature_test;
    return lit;
  }
  if (id.empty()) lx.fail("expected literal" + lx.found());
  if (is_variable_name(id)) return parse_comparison(lx, false);
  lx.identifier();
  BodyLiteral lit;
  lit.atom = parse_atom(lx, id);
  if (is_aux_predicate(id)) {
    if (lit.atom.is_variable) lx.fail("exception predicate '" + id + "' cannot bind a variable");
    lit.kind = LiteralKind::aux_call;
  } else {
    lit.kind = lit.atom.is_variable ? LiteralKind::numeric_binding : LiteralKind::feature_test;
  }
  return lit;
}

inline void check_rule(Lexer& lx, const Rule& r) {
  if (r.head.is_variable) lx.fail("rule head '" + r.head.predicate + "' must have a constant value");
  std::set<std::string> bound;
  for (const auto& lit : r.body) {
    if (!lit.is_comparison() && lit.atom.subject != r.head.subject)
      lx.fail("literal '" + lit.atom.predicate + "' uses subject " + lit.atom.subject + ", head uses " +
              r.head.subject);
    if (lit.kind == LiteralKind::numeric_binding) {
      if (!bound.insert(lit.atom.variable).second)
        lx.fail("variable " + lit.atom.variable + " bound twice");
    } else if (lit.is_comparison() && !bound.count(lit.variable)) {
      lx.fail("unbound numeric variable " + lit.variable);
    }
  }
}

/// Rejects recursion among exception predicates and any reference to the
/// decision label from a body.
inline void check_stratified(const RuleProgram& p) {
  std::set<std::string> heads;
  for (const auto& r : p.rules) heads.insert(r.head.predicate);
  auto no_head_refs = [&](const Rule& r) {
    for (const auto& lit : r.body)
      if (!lit.is_comparison() && p.kind == ProgramKind::decision && heads.count(lit.atom.predicate))
        throw ParseError(r.line, 1, "stratification violation: body references decision predicate '" +
                                        lit.atom.predicate + "'");
  };
  for (const auto& r : p.rules) no_head_refs(r);
  for (const auto& r : p.aux_rules) no_head_refs(r);

  std::map<std::string, std::set<std::string>> calls;
  std::map<std::string, std::size_t> first_line;
  for (const auto& r : p.aux_rules) {
    first_line.emplace(r.head.predicate, r.line);
    auto& out = calls[r.head.predicate];
    for (const auto& lit : r.body)
      if (lit.kind == LiteralKind::aux_call || lit.kind == LiteralKind::negated_aux_call)
        out.insert(lit.atom.predicate);
  }
  // Colour DFS; any back edge is a cycle.
  std::map<std::string, int> colour;
  auto visit = [&](auto&& self, const std::string& n) -> void {
    colour[n] = 1;
    for (const auto& m : calls[n]) {
      if (colour[m] == 1)
        throw ParseError(first_line[n], 1, "stratification violation: recursion through '" + m + "'");
      if (colour[m] == 0) self(self, m);
    }
    colour[n] = 2;
  };
  for (const auto& [n, _] : calls)
    if (colour[n] == 0) visit(visit, n);
}

inline std::string unparse_constant(const Constant& c) {
  return c.quoted ? "'" + c.text + "'" : c.text;
}

inline std::string unparse_atom(const Atom& a) {
  return a.predicate + "(" + a.subject + "," + (a.is_variable ? a.variable : unparse_constant(a.value)) + ")";
}

}  // namespace detail

/// Parses rule text. Aux rules go to `aux_rules`; decision programs must
/// have one shared head.
inline RuleProgram parse_rule_program(std::string_view text, ProgramKind kind) {
  detail::Lexer lx(text);
  RuleProgram prog;
  prog.kind = kind;
  while (!lx.at_end()) {
    Rule r;
    r.line = lx.line();
    std::string pred = lx.identifier();
    if (pred == "not" || detail::is_variable_name(pred)) lx.fail("rule head must be an atom");
    r.head = detail::parse_atom(lx, pred);
    if (lx.try_consume(":-")) {
      do {
        r.body.push_back(detail::parse_literal(lx));
      } while (lx.try_consume(","));
    }
    lx.expect(".");
    detail::check_rule(lx, r);
    if (r.is_aux()) {
      prog.aux_rules.push_back(std::move(r));
    } else {
      if (kind == ProgramKind::decision && !prog.rules.empty()) {
        const Atom& h = prog.rules.front().head;
        if (h.predicate != r.head.predicate || !(h.value == r.head.value))
          throw ParseError(r.line, 1, "decision rules must share one head, got " +
                                          detail::unparse_atom(r.head) + " after " + detail::unparse_atom(h));
      }
      prog.rules.push_back(std::move(r));
    }
  }
  detail::check_stratified(prog);
  return prog;
}

inline std::string unparse_rule(const Rule& r) {
  std::string out = detail::unparse_atom(r.head);
  for (std::size_t i = 0; i < r.body.size(); ++i) {
    const BodyLiteral& lit = r.body[i];
    out += i == 0 ? " :- " : ", ";
    switch (lit.kind) {
      case LiteralKind::feature_test:
      case LiteralKind::numeric_binding:
      case LiteralKind::aux_call:
        out += detail::unparse_atom(lit.atom);
        break;
      case LiteralKind::negated_feature_test:
      case LiteralKind::negated_aux_call:
        out += "not " + detail::unparse_atom(lit.atom);
        break;
      case LiteralKind::comparison:
        out += lit.variable + "=<" + lit.bound.text;
        break;
      case LiteralKind::negated_comparison:
        out += "not(" + lit.variable + "=<" + lit.bound.text + ")";
        break;
    }
  }
  return out + ".";
}

/// Canonical text: one rule per line, main and aux rules each in source
/// order, interleaved back by original line.
inline std::string unparse(const RuleProgram& p) {
  std::vector<const Rule*> all;
  for (const auto& r : p.rules) all.push_back(&r);
  for (const auto& r : p.aux_rules) all.push_back(&r);
  std::stable_sort(all.begin(), all.end(), [](const Rule* a, const Rule* b) { return a->line < b->line; });
  std::string out;
  for (const Rule* r : all) out += unparse_rule(*r) + "\n";
  return out;
}

struct MentionedValues {
  std::set<std::string> constants;
  std::set<double> thresholds;

  bool empty() const { return constants.empty() && thresholds.empty(); }
  bool operator==(const MentionedValues&) const = default;
};

/// Every constant and comparison bound the program applies to `feature`,
/// heads and exception rules included.
inline MentionedValues mentioned_values(const RuleProgram& p, const std::string& feature) {
  MentionedValues out;
  auto scan = [&](const Rule& r) {
    if (r.head.predicate == feature) out.constants.insert(r.head.value.text);
    for (const auto& lit : r.body) {
      if (lit.kind == LiteralKind::feature_test || lit.kind == LiteralKind::negated_feature_test) {
        if (lit.atom.predicate == feature) out.constants.insert(lit.atom.value.text);
      } else if (lit.is_comparison()) {
        if (r.binding_feature(lit.variable) == feature) out.thresholds.insert(lit.bound.number());
      }
    }
  };
  for (const auto& r : p.rules) scan(r);
  for (const auto& r : p.aux_rules) scan(r);
  return out;
}

/// Feature predicates read by bodies and (for causal programs) heads.
inline std::set<std::string> referenced_features(const RuleProgram& p) {
  std::set<std::string> out;
  auto scan = [&](const Rule& r) {
    if (p.kind == ProgramKind::causal && !r.is_aux()) out.insert(r.head.predicate);
    for (const auto& lit : r.body)
      if (!lit.is_comparison() && !is_aux_predicate(lit.atom.predicate)) out.insert(lit.atom.predicate);
  };
  for (const auto& r : p.rules) scan(r);
  for (const auto& r : p.aux_rules) scan(r);
  return out;
}

}  // namespace p2c
