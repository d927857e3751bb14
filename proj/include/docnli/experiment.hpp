#pragma once

#include <optional>
#include <string>
#include <vector>

#include "docnli/aggregate.hpp"
#include "docnli/context.hpp"
#include "docnli/corpus.hpp"
#include "docnli/metrics.hpp"
#include "docnli/model.hpp"

namespace docnli {

// One JSON config fully determines a run; init-config writes the defaults.
struct ExperimentConfig {
  struct Paths {
    std::string corpus = "data/synthetic20.json";
    std::string dev_corpus;  // optional; required for grid search
    std::string vocab = "out/vocab.txt";
    std::string checkpoint = "out/model.ckpt";
    std::string output_dir = "out";
  } paths;

  SegmentationConfig segmentation{512, 64};
  EncoderConfig encoder;  // vocab_size is filled in from the vocabulary
  TrainConfig train;

  bool hypothesis_symbol_mode = false;  // symbol tokens instead of hypothesis text
  bool oracle_nli = false;              // binary task on gold evidence
  int vocab_target_size = 8192;
  int vocab_min_pair_frequency = 2;
  std::uint64_t seed = 0;

  HypothesisMode hypothesis_mode() const {
    return hypothesis_symbol_mode ? HypothesisMode::Symbol : HypothesisMode::Text;
  }
  NLIAggregation nli_aggregation() const {
    return train.use_weighted_nli ? NLIAggregation::Weighted : NLIAggregation::Unweighted;
  }

  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);
  static ExperimentConfig load(const std::string& path);
  void save(const std::string& path) const;
};

struct ImportSummary {
  int documents = 0;
  int hypotheses = 0;
  int plain = 0, html = 0, pdf = 0;
};

ImportSummary run_import(const std::string& input_path, const std::string& output_path);

Vocabulary run_build_vocab(const ExperimentConfig& config);

// Loads (or builds) the vocabulary, assembles training contexts, trains, and
// writes the checkpoint plus a per-step loss CSV. Returns the final epoch's
// mean loss.
LossBreakdown run_train(const ExperimentConfig& config);

// Full prediction dump for every (document, hypothesis) pair of the corpus.
// In oracle mode only entailment/contradiction pairs appear.
std::vector<DocumentPrediction> run_predict(const ExperimentConfig& config,
                                            const std::string& corpus_path,
                                            const std::string& out_path);

std::vector<DocumentPrediction> run_baseline(const std::string& kind,
                                             const std::string& train_path,
                                             const std::string& eval_path,
                                             const std::string& out_path, std::uint64_t seed,
                                             bool binary, const ExperimentConfig& config);

EvalReport run_eval(const std::string& predictions_path, const std::string& gold_path,
                    const std::string& report_path);

// Context debug dump, one JSON line per context of (doc, hypothesis).
std::vector<std::string> inspect_contexts(const ExperimentConfig& config,
                                          const std::string& doc_id, int hypothesis_id);

struct GridRun {
  ExperimentConfig config;
  double dev_nli_accuracy = 0;
  double dev_map = 0;
};

// Cartesian product over the grid file's axes, run sequentially; returns every
// run sorted by dev NLI accuracy (best first).
std::vector<GridRun> run_grid(const ExperimentConfig& base, const std::string& grid_path);

std::string grid_summary(const std::vector<GridRun>& runs);  // three best: mean/std

}  // namespace docnli
