#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sys/wait.h>

#include "docnli/corpus.hpp"
#include "docnli/experiment.hpp"
#include "docnli/segmentation.hpp"
#include "docnli/synthetic.hpp"
#include "docnli/util.hpp"
#include "support/fixtures.hpp"

using namespace docnli;
using namespace docnli::testing;

namespace {

struct CommandResult {
  int exit_code = -1;
  std::string stdout_text;
  std::string stderr_text;
};

CommandResult run_cli(const std::string& args) {
  std::string out = "cli_stdout.txt";
  std::string err = "cli_stderr.txt";
  std::string command = std::string(DOCNLI_CLI_PATH) + " " + args + " > " + out + " 2> " + err;
  int status = std::system(command.c_str());
  CommandResult result;
  if (WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
  result.stdout_text = read_file(out);
  result.stderr_text = read_file(err);
  return result;
}

std::string write_mini_config(const std::string& corpus_path, const std::string& prefix) {
  nlohmann::json config = {
      {"paths",
       {{"corpus", corpus_path},
        {"vocab", prefix + "_vocab.txt"},
        {"checkpoint", prefix + "_model.ckpt"},
        {"output_dir", prefix + "_out"}}},
      {"encoder",
       {{"hidden_dim", 16}, {"num_layers", 1}, {"num_heads", 2}, {"ffn_dim", 24},
        {"dropout", 0.0}}},
      {"train",
       {{"lambda", 0.2}, {"learning_rate", 0.002}, {"batch_size", 8}, {"epochs", 2},
        {"warmup_steps", 5}, {"weight_decay", 0.0}}},
      {"vocab", {{"target_size", 600}, {"min_pair_frequency", 2}}},
      {"seed", 11}};
  std::string path = prefix + "_config.json";
  write_file(path, config.dump(2));
  return path;
}

}  // namespace

TEST_CASE("cli: init-config writes a loadable config") {
  CommandResult r = run_cli("init-config cli_default_config.json");
  CHECK(r.exit_code == 0);
  auto parsed = nlohmann::json::parse(read_file("cli_default_config.json"));
  CHECK(parsed.is_object());
}

TEST_CASE("cli: import reports counts and is idempotent") {
  std::string released = R"({
    "documents": [
      {"id": 1, "file_name": "a.pdf", "text": "Alpha beta.", "spans": [[0, 11]],
       "annotation_sets": [{"annotations": {"nda-1": {"choice": "Entailment", "spans": [0]}}}]},
      {"id": 2, "file_name": "b.txt", "text": "Gamma delta.", "spans": [[0, 12]],
       "annotation_sets": [{"annotations": {"nda-1": {"choice": "NotMentioned", "spans": []}}}]}
    ],
    "labels": {"nda-1": {"short_description": "t", "hypothesis": "something holds"}}
  })";
  write_file("cli_released.json", released);
  CommandResult first = run_cli("import cli_released.json cli_canonical.json");
  CHECK(first.exit_code == 0);
  CHECK(first.stdout_text.find("2 documents") != std::string::npos);
  std::string bytes_one = read_file("cli_canonical.json");

  CommandResult second = run_cli("import cli_released.json cli_canonical.json");
  CHECK(second.exit_code == 0);
  CHECK(read_file("cli_canonical.json") == bytes_one);  // byte-identical re-run
}

TEST_CASE("cli: missing input file exits 2") {
  CommandResult r = run_cli("import does_not_exist.json x.json");
  CHECK(r.exit_code == 2);
  CHECK(!r.stderr_text.empty());
}

TEST_CASE("cli: invalid lambda fails config validation with exit 2") {
  Corpus corpus = make_synthetic_corpus({4, 6, 5});
  save_corpus(corpus, "cli_tiny.json");
  std::string config_path = write_mini_config("cli_tiny.json", "cli_badlambda");
  nlohmann::json config = nlohmann::json::parse(read_file(config_path));
  config["train"]["lambda"] = -0.5;
  write_file(config_path, config.dump(2));
  CommandResult r = run_cli("train --config " + config_path);
  CHECK(r.exit_code == 2);
  CHECK(r.stderr_text.find("lambda") != std::string::npos);
}

TEST_CASE("cli: malformed prediction dump names the line and exits 2") {
  Corpus corpus = make_synthetic_corpus({2, 6, 5});
  save_corpus(corpus, "cli_gold.json");
  write_file("cli_bad_dump.jsonl", "{\"doc_id\":\"synth-1\"}\n");
  CommandResult r = run_cli("eval --predictions cli_bad_dump.jsonl --gold cli_gold.json");
  CHECK(r.exit_code == 2);
  CHECK(r.stderr_text.find("line 1") != std::string::npos);
}

TEST_CASE("cli: train, predict, eval round trip on a tiny corpus") {
  Corpus corpus = make_synthetic_corpus({4, 6, 9});
  save_corpus(corpus, "cli_pipeline.json");
  std::string config_path = write_mini_config("cli_pipeline.json", "cli_pipeline");

  CommandResult train = run_cli("train --config " + config_path);
  CHECK(train.exit_code == 0);
  CHECK(train.stdout_text.find("final loss") != std::string::npos);

  CommandResult predict =
      run_cli("predict --config " + config_path + " --out cli_pipeline_preds.jsonl");
  CHECK(predict.exit_code == 0);

  CommandResult eval = run_cli(
      "eval --predictions cli_pipeline_preds.jsonl --gold cli_pipeline.json --name tiny "
      "--report cli_pipeline_report.json");
  CHECK(eval.exit_code == 0);
  CHECK(eval.stdout_text.find("mAP") != std::string::npos);
  auto report = nlohmann::json::parse(read_file("cli_pipeline_report.json"));
  CHECK(report.contains("map"));
}

TEST_CASE("cli: baseline command emits constant labels for majority") {
  Corpus corpus = make_synthetic_corpus({4, 6, 13});
  save_corpus(corpus, "cli_base.json");
  CommandResult r = run_cli(
      "baseline --kind majority --train cli_base.json --eval cli_base.json "
      "--out cli_base_preds.jsonl");
  CHECK(r.exit_code == 0);
  std::map<int, std::string> label_by_hyp;
  std::ifstream in("cli_base_preds.jsonl");
  std::string line;
  while (std::getline(in, line)) {
    auto parsed = nlohmann::json::parse(line);
    int hyp = parsed.at("hypothesis_id").get<int>();
    std::string nli = parsed.at("nli").dump();
    auto it = label_by_hyp.find(hyp);
    if (it == label_by_hyp.end()) {
      label_by_hyp[hyp] = nli;
    } else {
      CHECK(it->second == nli);
    }
  }
  CHECK(label_by_hyp.size() == 3);
}

TEST_CASE("cli: inspect-contexts prints one line for a one-window document") {
  Corpus corpus = make_synthetic_corpus({2, 6, 21});
  save_corpus(corpus, "cli_inspect.json");
  std::string config_path = write_mini_config("cli_inspect.json", "cli_inspect");
  CommandResult r = run_cli("inspect-contexts --config " + config_path + " --doc synth-1");
  CHECK(r.exit_code == 0);
  int lines = 0;
  std::istringstream stream(r.stdout_text);
  std::string line;
  while (std::getline(stream, line)) {
    if (line.empty()) continue;
    ++lines;
    auto parsed = nlohmann::json::parse(line);
    CHECK(parsed.contains("token_range"));
    CHECK(parsed.contains("covered_spans"));
    CHECK(parsed.contains("teacher"));
  }
  CHECK(lines == 1);
}

TEST_CASE("cli: build-vocab writes the vocabulary named in the config") {
  Corpus corpus = make_synthetic_corpus({3, 6, 29});
  save_corpus(corpus, "cli_vocab_corpus.json");
  std::string config_path = write_mini_config("cli_vocab_corpus.json", "cli_vocab");
  CommandResult r = run_cli("build-vocab --config " + config_path);
  CHECK(r.exit_code == 0);
  Vocabulary vocab = Vocabulary::load("cli_vocab_vocab.txt");
  CHECK(vocab.num_hypotheses() == 3);
  CHECK(vocab.size() > vocab.num_reserved());
}

TEST_CASE("cli: composed train+predict equals the library pipeline bit for bit") {
  Corpus corpus = make_synthetic_corpus({4, 6, 53});
  save_corpus(corpus, "cli_equal.json");
  std::string config_path = write_mini_config("cli_equal.json", "cli_equal");

  CHECK(run_cli("train --config " + config_path).exit_code == 0);
  CHECK(run_cli("predict --config " + config_path + " --out cli_equal_cli.jsonl").exit_code == 0);

  // same config through the library, fresh checkpoint path
  ExperimentConfig config = ExperimentConfig::load(config_path);
  config.paths.checkpoint = "cli_equal_lib.ckpt";
  std::remove("cli_equal_lib.ckpt");
  run_train(config);
  run_predict(config, "cli_equal.json", "cli_equal_lib.jsonl");

  CHECK(read_file("cli_equal_cli.jsonl") == read_file("cli_equal_lib.jsonl"));
  CHECK(read_file("cli_equal_model.ckpt") == read_file("cli_equal_lib.ckpt"));
}

TEST_CASE("cli: unknown baseline kind exits 2") {
  Corpus corpus = make_synthetic_corpus({2, 6, 23});
  save_corpus(corpus, "cli_kind.json");
  CommandResult r = run_cli(
      "baseline --kind nope --train cli_kind.json --eval cli_kind.json --out cli_kind.jsonl");
  CHECK(r.exit_code == 2);
}
