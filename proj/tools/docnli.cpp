#include <CLI11.hpp>
#include <iostream>

#include "docnli/experiment.hpp"
#include "docnli/util.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitRuntime = 3;

int dispatch(CLI::App& app) {
  using namespace docnli;

  if (auto* cmd = app.get_subcommand("import"); cmd->parsed()) {
    ImportSummary s = run_import(cmd->get_option("input")->as<std::string>(),
                                 cmd->get_option("output")->as<std::string>());
    std::cout << s.documents << " documents (" << s.plain << " plain, " << s.html << " html, "
              << s.pdf << " pdf), " << s.hypotheses << " hypotheses\n";
    return kExitOk;
  }
  if (auto* cmd = app.get_subcommand("init-config"); cmd->parsed()) {
    ExperimentConfig config;
    config.save(cmd->get_option("output")->as<std::string>());
    std::cout << "wrote " << cmd->get_option("output")->as<std::string>() << "\n";
    return kExitOk;
  }
  if (auto* cmd = app.get_subcommand("build-vocab"); cmd->parsed()) {
    ExperimentConfig config =
        ExperimentConfig::load(cmd->get_option("--config")->as<std::string>());
    Vocabulary vocab = run_build_vocab(config);
    std::cout << "vocabulary of " << vocab.size() << " pieces written to "
              << config.paths.vocab << "\n";
    return kExitOk;
  }
  if (auto* cmd = app.get_subcommand("train"); cmd->parsed()) {
    ExperimentConfig config =
        ExperimentConfig::load(cmd->get_option("--config")->as<std::string>());
    std::string grid = cmd->get_option("--grid")->as<std::string>();
    if (!grid.empty()) {
      std::vector<GridRun> runs = run_grid(config, grid);
      std::cout << grid_summary(runs);
      return kExitOk;
    }
    LossBreakdown loss = run_train(config);
    std::cout << "final loss " << loss.total << " (span " << loss.span << ", nli " << loss.nli
              << "); checkpoint " << config.paths.checkpoint << "\n";
    return kExitOk;
  }
  if (auto* cmd = app.get_subcommand("predict"); cmd->parsed()) {
    ExperimentConfig config =
        ExperimentConfig::load(cmd->get_option("--config")->as<std::string>());
    std::string corpus = cmd->get_option("--corpus")->as<std::string>();
    if (corpus.empty()) corpus = config.paths.corpus;
    std::string out = cmd->get_option("--out")->as<std::string>();
    std::vector<DocumentPrediction> preds = run_predict(config, corpus, out);
    std::cout << preds.size() << " prediction lines written to " << out << "\n";
    return kExitOk;
  }
  if (auto* cmd = app.get_subcommand("baseline"); cmd->parsed()) {
    ExperimentConfig config;
    std::string config_path = cmd->get_option("--config")->as<std::string>();
    if (!config_path.empty()) config = ExperimentConfig::load(config_path);
    std::vector<DocumentPrediction> preds = run_baseline(
        cmd->get_option("--kind")->as<std::string>(),
        cmd->get_option("--train")->as<std::string>(),
        cmd->get_option("--eval")->as<std::string>(),
        cmd->get_option("--out")->as<std::string>(),
        cmd->get_option("--seed")->as<std::uint64_t>(), cmd->count("--binary") > 0, config);
    std::cout << preds.size() << " prediction lines written to "
              << cmd->get_option("--out")->as<std::string>() << "\n";
    return kExitOk;
  }
  if (auto* cmd = app.get_subcommand("eval"); cmd->parsed()) {
    std::string name = cmd->get_option("--name")->as<std::string>();
    EvalReport report = run_eval(cmd->get_option("--predictions")->as<std::string>(),
                                 cmd->get_option("--gold")->as<std::string>(),
                                 cmd->get_option("--report")->as<std::string>());
    std::cout << report.to_table(name);
    return kExitOk;
  }
  if (auto* cmd = app.get_subcommand("inspect-contexts"); cmd->parsed()) {
    ExperimentConfig config =
        ExperimentConfig::load(cmd->get_option("--config")->as<std::string>());
    for (const std::string& line :
         inspect_contexts(config, cmd->get_option("--doc")->as<std::string>(),
                          cmd->get_option("--hypothesis")->as<int>())) {
      std::cout << line << "\n";
    }
    return kExitOk;
  }
  std::cerr << app.help();
  return kExitInput;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"document-level NLI with evidence identification for contracts"};
  app.require_subcommand(0, 1);

  auto* import_cmd = app.add_subcommand("import", "convert a released dataset file to the canonical corpus format");
  import_cmd->add_option("input", "released dataset JSON")->required();
  import_cmd->add_option("output", "canonical corpus JSON to write")->required();

  auto* init_cmd = app.add_subcommand("init-config", "write a config file with full defaults");
  init_cmd->add_option("output", "config path to write")->required();

  auto* vocab_cmd = app.add_subcommand("build-vocab", "learn the subword vocabulary from the corpus");
  vocab_cmd->add_option("--config", "experiment config")->required();

  auto* train_cmd = app.add_subcommand("train", "train the span/NLI model");
  train_cmd->add_option("--config", "experiment config")->required();
  train_cmd->add_option("--grid", "grid file of hyperparameter axes")->default_val("");

  auto* predict_cmd = app.add_subcommand("predict", "write a JSON-lines prediction dump");
  predict_cmd->add_option("--config", "experiment config")->required();
  predict_cmd->add_option("--corpus", "corpus to predict on (defaults to config corpus)")
      ->default_val("");
  predict_cmd->add_option("--out", "output JSONL path")->required();

  auto* baseline_cmd = app.add_subcommand("baseline", "run one of the reference baselines");
  baseline_cmd->add_option("--kind", "majority | doc-tfidf | span-cosine | span-tfidf | random | squad")
      ->required();
  baseline_cmd->add_option("--train", "training corpus (canonical JSON)")->required();
  baseline_cmd->add_option("--eval", "evaluation corpus (canonical JSON)")->required();
  baseline_cmd->add_option("--out", "output JSONL path")->required();
  baseline_cmd->add_option("--seed", "seed for the random baseline")->default_val("0");
  baseline_cmd->add_flag("--binary", "restrict to entailment/contradiction pairs");
  baseline_cmd->add_option("--config", "experiment config (needed for the squad baseline)")
      ->default_val("");

  auto* eval_cmd = app.add_subcommand("eval", "score a prediction dump against a gold corpus");
  eval_cmd->add_option("--predictions", "JSONL prediction dump")->required();
  eval_cmd->add_option("--gold", "gold corpus (canonical JSON)")->required();
  eval_cmd->add_option("--report", "write the full JSON report here")->default_val("");
  eval_cmd->add_option("--name", "system name for the table row")->default_val("system");

  auto* inspect_cmd = app.add_subcommand("inspect-contexts", "dump the contexts of one document");
  inspect_cmd->add_option("--config", "experiment config")->required();
  inspect_cmd->add_option("--doc", "document id")->required();
  inspect_cmd->add_option("--hypothesis", "hypothesis id")->default_val("1");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    return dispatch(app);
  } catch (const docnli::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const docnli::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const docnli::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const docnli::EmptyCorpusError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const docnli::IOError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const docnli::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
