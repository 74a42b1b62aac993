#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "proofpgm/data.hpp"

using namespace proofpgm;

namespace {

std::string temp_path(const std::string& name) { return ::testing::TempDir() + name; }

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Example t0_example() {
  Theory t{{parse_statement("Alan is young.", "F1"), parse_statement("Alan is kind.", "F2"),
            parse_statement("If someone is young and someone is kind then someone is green.", "R1"),
            parse_statement("If someone is green then someone is big.", "R2"),
            parse_statement("If someone is not blue then someone is round.", "R3")}};
  return label_example("t0", t, parse_query("Alan is big."));
}

}  // namespace

TEST(data, depth_zero_examples_have_single_node_proofs) {
  GenConfig cfg;
  cfg.num_examples = 100;
  cfg.max_depth = 0;
  cfg.seed = 3;
  for (const auto& ex : generate_dataset(cfg)) {
    EXPECT_EQ(ex.depth, 0);
    for (const auto& p : ex.gold_proofs) {
      EXPECT_EQ(p.nodes.size(), 1u) << ex.id;
      EXPECT_TRUE(p.edges.empty());
    }
  }
}

TEST(data, balanced_and_valid_at_depth_two) {
  GenConfig cfg;
  cfg.num_examples = 1000;
  cfg.max_depth = 2;
  cfg.seed = 11;
  const auto data = generate_dataset(cfg);
  std::size_t positive = 0;
  std::map<int, std::size_t> depths;
  for (const auto& ex : data) {
    positive += ex.answer;
    ++depths[ex.depth];
    const auto kinds = node_kinds(ex.theory);
    ASSERT_FALSE(ex.gold_proofs.empty());
    for (const auto& p : ex.gold_proofs) EXPECT_EQ(check_proof(p, kinds), std::nullopt) << ex.id;
    EXPECT_LE(ex.gold_proofs.size(), cfg.proof_cap);
  }
  EXPECT_GE(positive, 450u);
  EXPECT_LE(positive, 550u);
  EXPECT_EQ(depths.size(), 3u);
}

TEST(data, theories_are_stratified) {
  GenConfig cfg;
  cfg.num_examples = 200;
  cfg.seed = 5;
  for (const auto& ex : generate_dataset(cfg)) {
    std::set<std::string> heads, negated;
    for (const auto& s : ex.theory.statements) {
      if (!s.is_rule()) continue;
      heads.insert(s.head.attribute);
      for (const auto& l : s.body)
        if (l.negated) negated.insert(l.attribute);
    }
    for (const auto& a : negated) EXPECT_FALSE(heads.contains(a)) << ex.id;
  }
}

TEST(data, examples_revalidate) {
  GenConfig cfg;
  cfg.num_examples = 300;
  cfg.max_depth = 2;
  cfg.seed = 8;
  for (const auto& ex : generate_dataset(cfg)) {
    const auto again = label_example(ex.id, ex.theory, ex.query, cfg.proof_cap);
    EXPECT_EQ(again, ex) << ex.id;
  }
}

TEST(data, generation_is_deterministic) {
  GenConfig cfg;
  cfg.num_examples = 50;
  cfg.seed = 7;
  const auto a = temp_path("gen_a.jsonl"), b = temp_path("gen_b.jsonl");
  write_examples(a, generate_dataset(cfg));
  write_examples(b, generate_dataset(cfg));
  EXPECT_EQ(slurp(a), slurp(b));
  cfg.seed = 8;
  write_examples(b, generate_dataset(cfg));
  EXPECT_NE(slurp(a), slurp(b));
  std::remove(a.c_str());
  std::remove(b.c_str());
}

TEST(data, round_trip) {
  const auto path = temp_path("rt.jsonl");
  GenConfig cfg;
  cfg.num_examples = 40;
  cfg.seed = 1;
  auto data = generate_dataset(cfg);
  data.push_back(t0_example());
  write_examples(path, data);
  EXPECT_EQ(read_examples(path), data);
  std::remove(path.c_str());
}

TEST(data, serialized_field_order) {
  const auto line = to_jsonl_line(t0_example());
  EXPECT_EQ(line.rfind("{\"id\":\"t0\",\"context\":[{\"id\":\"F1\",\"kind\":\"fact\",\"text\":\"Alan is young.\"}", 0),
            0u);
  EXPECT_NE(line.find("\"query\":\"Alan is big.\",\"answer\":true,\"depth\":2,\"proofs\":"), std::string::npos);
}

TEST(data, schema_errors_report_lines) {
  const auto path = temp_path("bad.jsonl");
  auto good = to_json(t0_example());
  auto missing = good;
  missing.erase("answer");
  auto extra = good;
  extra["extra"] = 1;
  {
    std::ofstream out(path, std::ios::binary);
    out << good.dump() << '\n' << missing.dump() << '\n';
  }
  try {
    read_examples(path);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("answer"), std::string::npos);
  }
  {
    std::ofstream out(path, std::ios::binary);
    out << extra.dump() << '\n';
  }
  EXPECT_THROW(read_examples(path), SchemaError);
  std::remove(path.c_str());
}

TEST(data, empty_file_and_missing_file) {
  const auto path = temp_path("empty.jsonl");
  { std::ofstream out(path); }
  EXPECT_TRUE(read_examples(path).empty());
  std::remove(path.c_str());
  EXPECT_THROW(read_examples(temp_path("does_not_exist.jsonl")), IoError);
}

TEST(data, invalid_config) {
  GenConfig cfg;
  cfg.facts_range = {3, 2};
  EXPECT_THROW(generate_dataset(cfg), Error);
  cfg = GenConfig{};
  cfg.max_depth = -1;
  EXPECT_THROW(generate_dataset(cfg), Error);
}
