#pragma once

// Templated rule language: facts, rules with optionally negated conditions,
// and queries, plus conversion between surface text and symbolic form.
//
//   fact  := ENTITY "is" ATTR "."
//   rule  := "If" cond ("and" cond)* "then" concl "."
//   cond  := SUBJ "is" ["not"] ATTR
//   concl := SUBJ "is" ATTR
//   query := ENTITY "is" ["not"] ATTR "."
//   SUBJ  := ENTITY | "someone"

#include <algorithm>
#include <cctype>
#include <compare>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "proofpgm/error.hpp"

namespace proofpgm {

inline constexpr std::string_view kVariableWord = "someone";

struct Atom {
  std::string entity;
  std::string attribute;

  auto operator<=>(const Atom&) const = default;
  bool operator==(const Atom&) const = default;
};

/// A condition or conclusion of a rule. An empty `entity` stands for the
/// shared rule variable ("someone").
struct Literal {
  std::optional<std::string> entity;
  std::string attribute;
  bool negated = false;

  bool is_variable() const { return !entity.has_value(); }
  /// Instantiates the literal for a binding of the rule variable.
  Atom ground(const std::string& binding) const {
    return Atom{entity.value_or(binding), attribute};
  }

  auto operator<=>(const Literal&) const = default;
  bool operator==(const Literal&) const = default;
};

enum class StatementKind { fact, rule };

struct Statement {
  std::string id;
  StatementKind kind = StatementKind::fact;
  Atom fact;                  // kind == fact
  std::vector<Literal> body;  // kind == rule
  Literal head;               // kind == rule
  std::string text;

  bool is_fact() const { return kind == StatementKind::fact; }
  bool is_rule() const { return kind == StatementKind::rule; }

  bool operator==(const Statement&) const = default;
};

struct Theory {
  std::vector<Statement> statements;

  std::size_t size() const { return statements.size(); }
  bool empty() const { return statements.empty(); }

  /// Index of the statement with `id`, or nullopt.
  std::optional<std::size_t> find(std::string_view id) const {
    for (std::size_t i = 0; i < statements.size(); ++i)
      if (statements[i].id == id) return i;
    return std::nullopt;
  }

  bool operator==(const Theory&) const = default;
};

struct Query {
  Atom atom;
  bool negated = false;
  std::string text;

  bool operator==(const Query&) const = default;
};

namespace detail {

struct Token {
  std::string text;
  std::size_t offset;
};

inline bool is_entity_word(std::string_view w) {
  if (w.empty() || !std::isupper(static_cast<unsigned char>(w[0]))) return false;
  return std::all_of(w.begin() + 1, w.end(),
                     [](char c) { return std::islower(static_cast<unsigned char>(c)); });
}

inline bool is_lower_word(std::string_view w) {
  return !w.empty() && std::all_of(w.begin(), w.end(), [](char c) {
    return std::islower(static_cast<unsigned char>(c));
  });
}

inline bool is_keyword(std::string_view w) {
  return w == "is" || w == "not" || w == "and" || w == "then" || w == kVariableWord ||
         w == "If";
}

inline std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
    } else if (c == '.') {
      out.push_back({".", i});
      ++i;
    } else if (std::isalpha(c)) {
      std::size_t j = i;
      while (j < text.size() && std::isalpha(static_cast<unsigned char>(text[j]))) ++j;
      out.push_back({std::string(text.substr(i, j - i)), i});
      i = j;
    } else {
      throw ParseError("unexpected character '" + std::string(1, text[i]) + "'", i);
    }
  }
  return out;
}

class Cursor {
 public:
  Cursor(std::vector<Token> tokens, std::size_t end_offset)
      : tokens_(std::move(tokens)), end_(end_offset) {}

  bool done() const { return pos_ >= tokens_.size(); }
  const std::string& peek() const {
    static const std::string kEnd;
    return done() ? kEnd : tokens_[pos_].text;
  }
  std::size_t offset() const { return done() ? end_ : tokens_[pos_].offset; }

  void expect(std::string_view word) {
    if (peek() != word) fail("expected '" + std::string(word) + "'");
    ++pos_;
  }
  bool accept(std::string_view word) {
    if (!done() && peek() == word) {
      ++pos_;
      return true;
    }
    return false;
  }
  std::string entity() {
    const std::string w = peek();
    if (!is_entity_word(w) || is_keyword(w)) fail("expected entity");
    ++pos_;
    return w;
  }
  std::string attribute() {
    const std::string w = peek();
    if (!is_lower_word(w) || is_keyword(w)) fail("expected attribute");
    ++pos_;
    return w;
  }
  std::optional<std::string> subject() {
    if (accept(kVariableWord)) return std::nullopt;
    return entity();
  }
  void finish() {
    expect(".");
    if (!done()) fail("trailing input");
  }
  [[noreturn]] void fail(const std::string& what) const {
    const std::string got = done() ? "end of input" : "'" + peek() + "'";
    throw ParseError(what + ", got " + got, offset());
  }

 private:
  std::vector<Token> tokens_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

inline std::string subject_text(const Literal& l) {
  return l.entity ? *l.entity : std::string(kVariableWord);
}

}  // namespace detail

inline std::string render_literal(const Literal& l) {
  return detail::subject_text(l) + (l.negated ? " is not " : " is ") + l.attribute;
}

inline std::string render_statement(const Statement& s) {
  if (s.is_fact()) return s.fact.entity + " is " + s.fact.attribute + ".";
  std::string out = "If ";
  for (std::size_t i = 0; i < s.body.size(); ++i) {
    if (i) out += " and ";
    out += render_literal(s.body[i]);
  }
  return out + " then " + render_literal(s.head) + ".";
}

inline std::string render_query(const Query& q) {
  return q.atom.entity + (q.negated ? " is not " : " is ") + q.atom.attribute + ".";
}

inline Statement make_fact(std::string id, Atom atom) {
  Statement s;
  s.id = std::move(id);
  s.kind = StatementKind::fact;
  s.fact = std::move(atom);
  s.text = render_statement(s);
  return s;
}

inline Statement make_rule(std::string id, std::vector<Literal> body, Literal head) {
  Statement s;
  s.id = std::move(id);
  s.kind = StatementKind::rule;
  s.body = std::move(body);
  s.head = std::move(head);
  s.text = render_statement(s);
  return s;
}

inline Query make_query(Atom atom, bool negated) {
  Query q{std::move(atom), negated, {}};
  q.text = render_query(q);
  return q;
}

inline Statement parse_statement(std::string_view text, std::string id) {
  detail::Cursor cur(detail::tokenize(text), text.size());
  if (cur.accept("If")) {
    std::vector<Literal> body;
    do {
      Literal l;
      l.entity = cur.subject();
      cur.expect("is");
      l.negated = cur.accept("not");
      l.attribute = cur.attribute();
      body.push_back(std::move(l));
    } while (cur.accept("and"));
    cur.expect("then");
    Literal head;
    head.entity = cur.subject();
    cur.expect("is");
    head.attribute = cur.attribute();
    cur.finish();
    return make_rule(std::move(id), std::move(body), std::move(head));
  }
  Atom atom;
  atom.entity = cur.entity();
  cur.expect("is");
  atom.attribute = cur.attribute();
  cur.finish();
  return make_fact(std::move(id), std::move(atom));
}

inline Query parse_query(std::string_view text) {
  detail::Cursor cur(detail::tokenize(text), text.size());
  if (cur.peek() == kVariableWord) cur.fail("variables are not allowed in queries");
  Atom atom;
  atom.entity = cur.entity();
  cur.expect("is");
  const bool negated = cur.accept("not");
  atom.attribute = cur.attribute();
  cur.finish();
  return make_query(std::move(atom), negated);
}

/// Whitespace-normalized form of a grammar-valid statement.
inline std::string canonical(std::string_view text) {
  return render_statement(parse_statement(text, ""));
}

/// Checks id uniqueness and rule body bounds.
inline void validate_theory(const Theory& t, std::size_t max_body = 0) {
  std::unordered_set<std::string> seen;
  for (const auto& s : t.statements) {
    if (s.id.empty() || s.id == "NAF") throw Error("invalid statement id '" + s.id + "'");
    if (!seen.insert(s.id).second) throw Error("duplicate statement id '" + s.id + "'");
    if (s.is_rule()) {
      if (s.body.empty()) throw Error("rule " + s.id + " has an empty body");
      if (max_body && s.body.size() > max_body)
        throw Error("rule " + s.id + " exceeds the body length limit");
      if (s.head.negated) throw Error("rule " + s.id + " has a negated head");
    }
  }
}

/// Entities mentioned anywhere in the theory, sorted.
inline std::vector<std::string> theory_entities(const Theory& t) {
  std::set<std::string> out;
  for (const auto& s : t.statements) {
    if (s.is_fact()) {
      out.insert(s.fact.entity);
      continue;
    }
    for (const auto& l : s.body)
      if (l.entity) out.insert(*l.entity);
    if (s.head.entity) out.insert(*s.head.entity);
  }
  return {out.begin(), out.end()};
}

}  // namespace proofpgm
