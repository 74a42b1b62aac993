#pragma once

// Command-line front end: generate | train | eval | infer | oracle.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "proofpgm/check.hpp"
#include "proofpgm/data.hpp"
#include "proofpgm/decode.hpp"
#include "proofpgm/eval.hpp"
#include "proofpgm/model.hpp"
#include "proofpgm/train.hpp"

namespace proofpgm::cli {

enum class LogLevel { error = 0, info = 1, debug = 2 };

class Logger {
 public:
  Logger(LogLevel level, std::ostream& sink) : level_(level), sink_(sink) {}
  void info(const std::string& msg) const { write(LogLevel::info, "info", msg); }
  void debug(const std::string& msg) const { write(LogLevel::debug, "debug", msg); }
  void error(const std::string& msg) const { write(LogLevel::error, "error", msg); }

 private:
  void write(LogLevel l, const char* tag, const std::string& msg) const {
    if (static_cast<int>(l) <= static_cast<int>(level_)) sink_ << "[" << tag << "] " << msg << '\n';
  }
  LogLevel level_;
  std::ostream& sink_;
};

class UsageError : public Error {
  using Error::Error;
};

inline LogLevel log_level_from_env() {
  const char* v = std::getenv("PROOFPGM_LOG");
  if (!v || !*v) return LogLevel::info;
  const std::string s(v);
  if (s == "error") return LogLevel::error;
  if (s == "info") return LogLevel::info;
  if (s == "debug") return LogLevel::debug;
  throw UsageError("PROOFPGM_LOG must be one of error, info, debug (got '" + s + "')");
}

/// One statement per line, optionally prefixed by "ID:". Blank lines and
/// lines starting with '#' are skipped; missing ids become F1.. / R1.. .
inline Theory read_theory_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  Theory t;
  std::size_t facts = 0, rules = 0;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::string id, text = line.substr(first);
    const auto colon = text.find(':');
    if (colon != std::string::npos) {
      id = text.substr(0, colon);
      id.erase(id.find_last_not_of(" \t") + 1);
      text = text.substr(colon + 1);
    }
    Statement s;
    try {
      s = parse_statement(text, id);
    } catch (const ParseError& e) {
      throw Error(path + ":" + std::to_string(n) + ": " + e.what());
    }
    if (s.id.empty()) s.id = s.is_fact() ? "F" + std::to_string(++facts) : "R" + std::to_string(++rules);
    t.statements.push_back(std::move(s));
  }
  validate_theory(t);
  return t;
}

struct Options {
  int depth = 1;
  std::size_t num = 1000;
  std::uint64_t seed = 0;
  std::string out;
  std::string train;
  std::string dev;
  std::string test;
  std::size_t epochs = TrainConfig{}.epochs;
  std::size_t batch = TrainConfig{}.batch_size;
  double lr = TrainConfig{}.learning_rate;
  double clip = TrainConfig{}.grad_clip;
  double dropout = TrainConfig{}.dropout;
  std::string variant = "base";
  std::string model;
  double threshold = DecodeConfig{}.node_threshold;
  std::size_t m = 3;
  std::size_t trials = 100;
  bool per_depth = false;
  std::string theory_file;
  std::string query;
};

inline int cmd_generate(const Options& o, std::ostream& out, const Logger& log) {
  GenConfig g;
  g.num_examples = o.num;
  g.max_depth = o.depth;
  g.seed = o.seed;
  const auto examples = generate_dataset(g);
  write_examples(o.out, examples);
  log.info("wrote " + std::to_string(examples.size()) + " examples to " + o.out);
  out << o.out << '\n';
  return 0;
}

inline std::string metrics_line(const Metrics& m) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "qa=%.4f pa=%.4f fa=%.4f", m.qa, m.pa, m.fa);
  return buf;
}

inline int cmd_train(const Options& o, std::ostream& out, const Logger& log) {
  const auto train_set = read_examples(o.train);
  const auto dev_set = o.dev.empty() ? std::vector<Example>{} : read_examples(o.dev);
  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch;
  cfg.learning_rate = o.lr;
  cfg.grad_clip = o.clip;
  cfg.dropout = o.dropout;
  cfg.variant = parse_variant(o.variant);
  cfg.seed = o.seed;
  EncoderConfig enc;
  enc.seed = o.seed;
  log.info("training on " + std::to_string(train_set.size()) + " examples, dev " + std::to_string(dev_set.size()));

  const std::string log_path = o.out + ".log";
  std::ofstream epoch_log(log_path, std::ios::binary);
  if (!epoch_log) throw IoError("cannot write " + log_path);
  const auto result = train(train_set, dev_set, enc, cfg, [&](const EpochLog& e) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["train_loss"] = e.train_loss;
    j["dev"] = e.dev ? to_json(*e.dev) : nlohmann::ordered_json(nullptr);
    epoch_log << j.dump() << '\n';
    std::string msg = "epoch " + std::to_string(e.epoch) + " loss " + std::to_string(e.train_loss);
    if (e.dev) msg += " dev " + metrics_line(*e.dev);
    log.info(msg);
  });
  save_checkpoint(o.out, Checkpoint{result.params, cfg, result.moments});
  log.info("best epoch " + std::to_string(result.best_epoch) + "; checkpoint written to " + o.out);
  out << o.out << '\n';
  return 0;
}

inline DecodeConfig decode_config(const Options& o) {
  DecodeConfig d;
  d.node_threshold = o.threshold;
  d.validate();
  return d;
}

inline int cmd_eval(const Options& o, std::ostream& out, const Logger& log) {
  const auto ck = load_checkpoint(o.model);
  const auto test = read_examples(o.test);
  if (test.empty()) throw EmptyDataset("test set " + o.test + " is empty");
  const auto metrics = evaluate(predict_all(ck.params, test, decode_config(o)), test);
  log.info(metrics_line(metrics));
  const auto report = to_json(metrics).dump(2);
  if (!o.out.empty()) {
    std::ofstream f(o.out, std::ios::binary);
    if (!f) throw IoError("cannot write " + o.out);
    f << report << '\n';
  }
  if (o.per_depth) out << format_table(metrics);
  else out << report << '\n';
  return 0;
}

inline int cmd_infer(const Options& o, std::ostream& out, const Logger& log) {
  const auto ck = load_checkpoint(o.model);
  const Theory theory = read_theory_file(o.theory_file);
  const Query query = parse_query(o.query);
  const auto p = infer(ck.params, theory, query, decode_config(o));
  if (!p.decoded.exact) log.info("edge decoding fell back to the greedy search");
  if (p.decoded.dropped_nodes) log.debug("nodes were dropped to make the proof connectable");
  out << "answer: " << (p.answer ? "true" : "false") << '\n';
  out << "nodes:";
  for (const auto& n : p.proof.nodes) out << ' ' << n;
  out << '\n';
  out << "edges:";
  for (const auto& [s, t] : p.proof.edges) out << ' ' << s << "->" << t;
  out << '\n';
  return 0;
}

inline int cmd_oracle(const Options& o, std::ostream& out, const Logger& log) {
  const auto cond = check_conditionals(o.m, o.trials, o.seed);
  Rng rng(o.seed);
  const auto examples = small_examples(10, o.seed);
  double worst_grad = 0.0;
  for (Variant v : {Variant::base, Variant::gold, Variant::kl, Variant::gold_kl}) {
    double worst = 0.0;
    for (const auto& ex : examples) {
      EncoderConfig enc;
      enc.embed_dim = 8;
      enc.hidden_dim = 8;
      enc.hash_dim = 128;
      const auto params = random_params(enc, rng, 0.3);
      worst = std::max(worst, check_gradients(params, ex, v, 50, 1e-4, rng).max_relative_error);
    }
    log.debug("variant " + std::string(to_string(v)) + " max gradient relative error " + std::to_string(worst));
    worst_grad = std::max(worst_grad, worst);
  }
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "max conditional error %.3e\nmax pseudolikelihood error %.3e\nmax gradient relative error %.3e\n",
                cond.max_conditional_error, cond.max_pseudolikelihood_error, worst_grad);
  out << buf;
  const bool ok = cond.max_conditional_error <= 1e-9 && cond.max_pseudolikelihood_error <= 1e-8 && worst_grad <= 1e-4;
  if (!ok) log.error("oracle tolerances exceeded");
  return ok ? 0 : 2;
}

/// Parses argv and dispatches; returns 0 on success, 1 on usage errors and
/// 2 on runtime errors.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Joint answer and proof prediction for rule reasoning", "proofpgm"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("generate", "Generate a synthetic dataset");
  gen->add_option("--depth", o.depth, "Maximum reasoning depth")->check(CLI::NonNegativeNumber);
  gen->add_option("--num", o.num, "Number of examples")->check(CLI::PositiveNumber);
  gen->add_option("--seed", o.seed, "Random seed");
  gen->add_option("--out", o.out, "Output JSONL file")->required();

  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--train", o.train, "Training JSONL file")->required();
  tr->add_option("--dev", o.dev, "Development JSONL file used for model selection");
  tr->add_option("--out", o.out, "Checkpoint path")->required();
  tr->add_option("--epochs", o.epochs, "Epochs")->check(CLI::NonNegativeNumber);
  tr->add_option("--batch", o.batch, "Minibatch size")->check(CLI::PositiveNumber);
  tr->add_option("--lr", o.lr, "Learning rate")->check(CLI::PositiveNumber);
  tr->add_option("--clip", o.clip, "Gradient-norm clip")->check(CLI::PositiveNumber);
  tr->add_option("--dropout", o.dropout, "Dropout rate on sentence representations")->check(CLI::Range(0.0, 0.99));
  tr->add_option("--variant", o.variant, "base | gold | kl | gold_kl")
      ->check(CLI::IsMember({"base", "gold", "kl", "gold_kl"}));
  tr->add_option("--seed", o.seed, "Random seed");

  auto threshold_check = CLI::Validator(
      [](std::string& s) -> std::string {
        try {
          const double t = std::stod(s);
          if (t > 0.0 && t < 1.0) return {};
        } catch (const std::exception&) {
        }
        return "threshold must lie strictly between 0 and 1";
      },
      "(0,1)");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--model", o.model, "Checkpoint path")->required();
  ev->add_option("--test", o.test, "Test JSONL file")->required();
  ev->add_option("--threshold", o.threshold, "Node threshold")->check(threshold_check);
  ev->add_option("--out", o.out, "Also write the JSON report here");
  ev->add_flag("--per-depth", o.per_depth, "Print the per-depth table instead of JSON");

  auto* inf = app.add_subcommand("infer", "Answer one query against a theory file");
  inf->add_option("--model", o.model, "Checkpoint path")->required();
  inf->add_option("--threshold", o.threshold, "Node threshold")->check(threshold_check);
  inf->add_option("theory", o.theory_file, "Theory file, one statement per line")->required();
  inf->add_option("query", o.query, "Query, e.g. \"Alan is big.\"")->required();

  auto* orc = app.add_subcommand("oracle", "Run the built-in numerical self-checks");
  orc->add_option("--m", o.m, "Node count for the conditional check")->check(CLI::Range(1, 4));
  orc->add_option("--trials", o.trials, "Random tables")->check(CLI::PositiveNumber);
  orc->add_option("--seed", o.seed, "Random seed");

  LogLevel level;
  try {
    app.parse(argc, argv);
    level = log_level_from_env();
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }

  const Logger log(level, err);
  try {
    if (gen->parsed()) return cmd_generate(o, out, log);
    if (tr->parsed()) return cmd_train(o, out, log);
    if (ev->parsed()) return cmd_eval(o, out, log);
    if (inf->parsed()) return cmd_infer(o, out, log);
    return cmd_oracle(o, out, log);
  } catch (const std::exception& e) {
    log.error(e.what());
    return 2;
  }
}

}  // namespace proofpgm::cli
