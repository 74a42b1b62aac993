#pragma once

// Synthetic depth-controlled rule-reasoning examples and their JSONL form.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "proofpgm/error.hpp"
#include "proofpgm/proof_graph.hpp"
#include "proofpgm/reasoner.hpp"
#include "proofpgm/rng.hpp"
#include "proofpgm/theory.hpp"

namespace proofpgm {

struct Example {
  std::string id;
  Theory theory;
  Query query;
  bool answer = false;
  int depth = 0;
  std::vector<ProofGraph> gold_proofs;

  bool operator==(const Example&) const = default;
};

/// Labels `theory`/`query` with the reasoner: answer, up to `cap` minimal
/// gold proofs and the reasoning depth.
inline Example label_example(std::string id, Theory theory, Query query, std::size_t cap = 8) {
  const auto ds = forward_chain(theory);
  Example ex;
  ex.id = std::move(id);
  ex.answer = answer_query(ds, query);
  ex.gold_proofs = extract_proofs(ds, query, cap);
  if (!ex.gold_proofs.empty()) ex.depth = query_depth(ex.gold_proofs);
  ex.theory = std::move(theory);
  ex.query = std::move(query);
  return ex;
}

struct GenConfig {
  std::size_t num_examples = 1000;
  int max_depth = 1;
  std::size_t num_entities = 2;
  std::size_t num_attributes = 8;
  std::pair<std::size_t, std::size_t> facts_range{2, 5};
  std::pair<std::size_t, std::size_t> rules_range{3, 8};
  std::size_t max_body = 2;
  double naf_rule_fraction = 0.25;
  std::uint64_t seed = 0;
  std::size_t proof_cap = 8;

  void validate() const {
    if (max_depth < 0) throw Error("max depth must be non-negative");
    if (num_entities == 0 || num_attributes < 2) throw Error("entity/attribute counts too small");
    if (facts_range.first > facts_range.second || rules_range.first > rules_range.second)
      throw Error("empty statement count range");
    if (max_body == 0) throw Error("max body length must be positive");
    if (naf_rule_fraction < 0.0 || naf_rule_fraction > 1.0)
      throw Error("NAF rule fraction must lie in [0, 1]");
    if (proof_cap == 0) throw Error("proof cap must be positive");
  }
};

inline const std::vector<std::string>& entity_pool() {
  static const std::vector<std::string> pool{"Anne", "Bob",   "Charlie", "Dave",
                                             "Erin", "Fiona", "Gary",    "Harry"};
  return pool;
}

inline const std::vector<std::string>& attribute_pool() {
  static const std::vector<std::string> pool{"big",   "blue",  "cold",  "furry", "green", "kind",
                                             "nice",  "quiet", "red",   "rough", "round", "smart",
                                             "white", "young", "happy", "strong"};
  return pool;
}

namespace detail {

inline std::vector<std::string> sample_distinct(const std::vector<std::string>& pool,
                                                std::size_t n, Rng& rng) {
  std::vector<std::string> v = pool;
  rng.shuffle(v);
  v.resize(std::min(n, v.size()));
  return v;
}

/// A random theory whose negated attributes never occur in a rule head.
inline Theory sample_theory(const GenConfig& cfg, Rng& rng) {
  const auto entities = sample_distinct(entity_pool(), cfg.num_entities, rng);
  const auto attributes = sample_distinct(attribute_pool(), cfg.num_attributes, rng);
  // The first few attributes may be negated and are never concluded.
  const std::size_t num_negatable = std::max<std::size_t>(1, attributes.size() / 4);

  Theory t;
  std::set<Atom> facts;
  const auto num_facts = static_cast<std::size_t>(
      rng.uniform_int(cfg.facts_range.first, cfg.facts_range.second));
  for (std::size_t tries = 0; facts.size() < num_facts && tries < 100; ++tries)
    facts.insert(Atom{entities[rng.index(entities.size())],
                      attributes[rng.index(attributes.size())]});
  std::vector<Atom> ordered(facts.begin(), facts.end());
  rng.shuffle(ordered);
  for (const auto& a : ordered)
    t.statements.push_back(make_fact("F" + std::to_string(t.size() + 1), a));

  const auto num_rules = static_cast<std::size_t>(
      rng.uniform_int(cfg.rules_range.first, cfg.rules_range.second));
  std::set<std::pair<std::vector<Literal>, Literal>> rules;
  for (std::size_t tries = 0; rules.size() < num_rules && tries < 200; ++tries) {
    const std::string head =
        attributes[num_negatable + rng.index(attributes.size() - num_negatable)];
    const auto len = static_cast<std::size_t>(rng.uniform_int(1, cfg.max_body));
    const bool with_naf = rng.bernoulli(cfg.naf_rule_fraction);
    std::set<std::string> used{head};
    std::vector<Literal> body;
    if (with_naf) {
      const std::string a = attributes[rng.index(num_negatable)];
      used.insert(a);
      body.push_back(Literal{std::nullopt, a, true});
    }
    for (int guard = 0; body.size() < len && guard < 100; ++guard) {
      const std::string a = attributes[rng.index(attributes.size())];
      if (!used.insert(a).second) continue;
      body.push_back(Literal{std::nullopt, a, false});
    }
    rng.shuffle(body);
    rules.insert({std::move(body), Literal{std::nullopt, head, false}});
  }
  std::vector<std::pair<std::vector<Literal>, Literal>> rule_list(rules.begin(), rules.end());
  rng.shuffle(rule_list);
  std::size_t r = 0;
  for (auto& [body, head] : rule_list)
    t.statements.push_back(make_rule("R" + std::to_string(++r), std::move(body), head));
  return t;
}

}  // namespace detail

/// Samples one labelled example. `want_answer` and `want_depth` restrict the
/// accepted queries; theories without an acceptable query are resampled.
inline Example generate_example(const GenConfig& cfg, Rng& rng,
                                std::optional<bool> want_answer = std::nullopt,
                                std::optional<int> want_depth = std::nullopt,
                                std::string id = "") {
  cfg.validate();
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Theory theory = detail::sample_theory(cfg, rng);
    const auto ds = forward_chain(theory);
    const auto entities = theory_entities(theory);
    std::set<std::string> attr_set;
    for (const auto& s : theory.statements) {
      if (s.is_fact()) {
        attr_set.insert(s.fact.attribute);
        continue;
      }
      for (const auto& l : s.body) attr_set.insert(l.attribute);
      attr_set.insert(s.head.attribute);
    }

    std::vector<Example> accepted;
    for (const auto& e : entities) {
      for (const auto& a : attr_set) {
        for (const bool negated : {false, true}) {
          Query q = make_query(Atom{e, a}, negated);
          Example ex;
          ex.answer = answer_query(ds, q);
          if (want_answer && ex.answer != *want_answer) continue;
          ex.gold_proofs = extract_proofs(ds, q, cfg.proof_cap);
          if (ex.gold_proofs.empty()) continue;
          ex.depth = query_depth(ex.gold_proofs);
          if (ex.depth > cfg.max_depth) continue;
          if (want_depth && ex.depth != *want_depth) continue;
          ex.query = std::move(q);
          accepted.push_back(std::move(ex));
        }
      }
    }
    if (accepted.empty()) continue;
    Example ex = std::move(accepted[rng.index(accepted.size())]);
    ex.id = std::move(id);
    ex.theory = std::move(theory);
    return ex;
  }
  throw ResampleExhausted("no acceptable theory after 1000 samples");
}

/// Deterministic dataset: example i uses its own stream of `cfg.seed`,
/// answers alternate true/false and target depths cycle through 0..max_depth.
inline std::vector<Example> generate_dataset(const GenConfig& cfg) {
  cfg.validate();
  std::vector<Example> out;
  out.reserve(cfg.num_examples);
  for (std::size_t i = 0; i < cfg.num_examples; ++i) {
    Rng rng = Rng::stream(cfg.seed, i);
    const bool want_answer = i % 2 == 0;
    const int want_depth = static_cast<int>((i / 2) % (cfg.max_depth + 1));
    char id[32];
    std::snprintf(id, sizeof id, "ex%06zu", i);
    out.push_back(generate_example(cfg, rng, want_answer, want_depth, id));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSONL serialization

inline nlohmann::ordered_json to_json(const ProofGraph& g) {
  nlohmann::ordered_json j;
  j["nodes"] = nlohmann::ordered_json::array();
  for (const auto& n : g.nodes) j["nodes"].push_back(n);
  j["edges"] = nlohmann::ordered_json::array();
  for (const auto& [s, d] : g.edges) j["edges"].push_back({s, d});
  return j;
}

inline nlohmann::ordered_json to_json(const Example& ex) {
  nlohmann::ordered_json j;
  j["id"] = ex.id;
  j["context"] = nlohmann::ordered_json::array();
  for (const auto& s : ex.theory.statements)
    j["context"].push_back(
        {{"id", s.id}, {"kind", s.is_fact() ? "fact" : "rule"}, {"text", s.text}});
  j["query"] = ex.query.text;
  j["answer"] = ex.answer;
  j["depth"] = ex.depth;
  j["proofs"] = nlohmann::ordered_json::array();
  for (const auto& p : ex.gold_proofs) j["proofs"].push_back(to_json(p));
  return j;
}

inline std::string to_jsonl_line(const Example& ex) { return to_json(ex).dump(); }

namespace detail {

inline void expect_keys(const nlohmann::json& j, std::initializer_list<const char*> keys,
                        const std::string& where, std::size_t line) {
  if (!j.is_object()) throw SchemaError(where + " must be an object", line);
  for (const char* k : keys)
    if (!j.contains(k)) throw SchemaError("missing field \"" + std::string(k) + "\" in " + where, line);
  for (const auto& [k, v] : j.items())
    if (std::find_if(keys.begin(), keys.end(), [&](const char* key) { return k == key; }) ==
        keys.end())
      throw SchemaError("unknown field \"" + k + "\" in " + where, line);
}

inline ProofGraph proof_from_json(const nlohmann::json& j, std::size_t line) {
  expect_keys(j, {"nodes", "edges"}, "proof", line);
  ProofGraph g;
  for (const auto& n : j.at("nodes")) g.nodes.insert(n.get<std::string>());
  for (const auto& e : j.at("edges")) {
    if (!e.is_array() || e.size() != 2) throw SchemaError("edge must be a pair", line);
    g.edges.insert({e[0].get<std::string>(), e[1].get<std::string>()});
  }
  return g;
}

}  // namespace detail

inline Example example_from_json_line(const std::string& text, std::size_t line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed JSON: ") + e.what(), line);
  }
  detail::expect_keys(j, {"id", "context", "query", "answer", "depth", "proofs"}, "example", line);
  try {
    Example ex;
    ex.id = j.at("id").get<std::string>();
    for (const auto& c : j.at("context")) {
      detail::expect_keys(c, {"id", "kind", "text"}, "context entry", line);
      Statement s = parse_statement(c.at("text").get<std::string>(), c.at("id").get<std::string>());
      const auto kind = c.at("kind").get<std::string>();
      if (kind != (s.is_fact() ? "fact" : "rule"))
        throw SchemaError("kind \"" + kind + "\" does not match statement " + s.id, line);
      ex.theory.statements.push_back(std::move(s));
    }
    ex.query = parse_query(j.at("query").get<std::string>());
    ex.answer = j.at("answer").get<bool>();
    ex.depth = j.at("depth").get<int>();
    for (const auto& p : j.at("proofs")) ex.gold_proofs.push_back(detail::proof_from_json(p, line));
    return ex;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad field type: ") + e.what(), line);
  } catch (const ParseError& e) {
    throw SchemaError(e.what(), line);
  }
}

inline void write_examples(const std::string& path, const std::vector<Example>& examples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (const auto& ex : examples) out << to_jsonl_line(ex) << '\n';
  if (!out) throw IoError("write to '" + path + "' failed");
}

inline std::vector<Example> read_examples(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<Example> out;
  std::string text;
  for (std::size_t line = 1; std::getline(in, text); ++line) {
    if (text.empty()) continue;
    out.push_back(example_from_json_line(text, line));
  }
  return out;
}

}  // namespace proofpgm
