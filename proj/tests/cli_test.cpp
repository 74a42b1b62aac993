#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

namespace {

struct Result {
  int code;
  std::string out;
};

Result run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + PROOFPGM_CLI_PATH + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  std::string out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string tmp(const std::string& name) { return ::testing::TempDir() + "cli_" + name; }

}  // namespace

TEST(cli, help_and_usage_errors) {
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  const auto r = run("generate --num 5 --bogus 1 --out x.jsonl");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("--bogus"), std::string::npos);
  EXPECT_EQ(run("generate --num 5").code, 1);
  EXPECT_EQ(run("train --train a --out b --variant fancy").code, 1);
  EXPECT_EQ(run("eval --model a --test b --threshold 1.5").code, 1);
  EXPECT_EQ(run("oracle --m 2 --trials 1", "PROOFPGM_LOG=loud").code, 1);
}

TEST(cli, generate_is_deterministic) {
  const auto a = tmp("a.jsonl"), b = tmp("b.jsonl");
  EXPECT_EQ(run("generate --depth 1 --num 40 --seed 7 --out " + a).code, 0);
  EXPECT_EQ(run("generate --depth 1 --num 40 --seed 7 --out " + b).code, 0);
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_FALSE(slurp(a).empty());
}

TEST(cli, missing_input_is_a_runtime_error) {
  const auto r = run("train --train " + tmp("missing.jsonl") + " --out " + tmp("m.json"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("cannot open"), std::string::npos);
}

TEST(cli, oracle_reports_small_errors) {
  const auto r = run("oracle --m 3 --trials 100 --seed 7");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("max conditional error"), std::string::npos);
}

TEST(cli, train_eval_infer_pipeline) {
  const auto data = tmp("train.jsonl"), model = tmp("model.json"), theory = tmp("theory.txt");
  ASSERT_EQ(run("generate --depth 0 --num 60 --seed 3 --out " + data).code, 0);
  const auto tr = run("train --train " + data + " --dev " + data + " --epochs 2 --seed 1 --out " + model,
                      "PROOFPGM_LOG=error");
  ASSERT_EQ(tr.code, 0) << tr.out;
  EXPECT_NE(slurp(model + ".log").find("\"epoch\":2"), std::string::npos);

  const auto ev = run("eval --model " + model + " --test " + data, "PROOFPGM_LOG=error");
  ASSERT_EQ(ev.code, 0) << ev.out;
  EXPECT_NE(ev.out.find("\"per_depth\""), std::string::npos);
  const auto table = run("eval --per-depth --model " + model + " --test " + data, "PROOFPGM_LOG=error");
  EXPECT_NE(table.out.find("Cnt"), std::string::npos);

  {
    std::ofstream out(theory);
    out << "# toy theory\nF1: Alan is big.\nIf someone is big then someone is red.\n";
  }
  const auto inf = run("infer --model " + model + " " + theory + " \"Alan is red.\"", "PROOFPGM_LOG=error");
  ASSERT_EQ(inf.code, 0) << inf.out;
  EXPECT_NE(inf.out.find("answer: "), std::string::npos);
  EXPECT_NE(inf.out.find("edges:"), std::string::npos);
  EXPECT_EQ(run("infer --model " + model + " " + theory + " \"someone is red.\"", "PROOFPGM_LOG=error").code, 2);
}
