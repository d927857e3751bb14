#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "docnli/context.hpp"
#include "docnli/encoder.hpp"

namespace docnli {

struct ContextPrediction {
  std::vector<double> span_probs;              // one per [SPAN] marker, in covered order
  std::array<double, 3> nli_probs{0, 0, 0};    // (E, C, N); binary mode leaves N at 0
};

struct TrainConfig {
  double lambda = 0.2;  // balance between span and NLI losses
  double learning_rate = 5e-5;
  int batch_size = 32;
  int epochs = 3;
  int warmup_steps = 1000;
  double weight_decay = 0.1;
  double max_grad_norm = 1.0;
  std::uint64_t seed = 0;
  bool use_weighted_nli = true;

  void validate() const;
};

struct TrainExample {
  ModelInput input;
  TeacherSignal teacher;
};

// Evaluation-mode forward: deterministic, dropout off.
ContextPrediction forward(const ModelInput& input, const ModelParams& params);

// Per-context losses. Probabilities are clamped to [1e-7, 1-1e-7] inside the
// cross entropies; an NLI loss on a context without evidence is exactly zero.
double loss_span(const ContextPrediction& pred, const TeacherSignal& teacher);
double loss_nli(const ContextPrediction& pred, const TeacherSignal& teacher);
double loss_total(const ContextPrediction& pred, const TeacherSignal& teacher, double lambda);

struct LossBreakdown {
  double span = 0;
  double nli = 0;
  double total = 0;
};

// Mean loss over a batch; when grad is non-null the analytic gradient of that
// mean is accumulated into it. A null dropout_rng gives evaluation behavior.
LossBreakdown batch_loss_and_gradient(const ModelParams& params,
                                      const std::vector<const TrainExample*>& batch,
                                      double lambda, Eigen::VectorXd* grad,
                                      std::mt19937_64* dropout_rng);

LossBreakdown batch_loss(const ModelParams& params, const std::vector<TrainExample>& examples,
                         double lambda);

struct TraceRow {
  int epoch = 0;
  int step = 0;
  double loss_span = 0;
  double loss_nli = 0;
  double loss = 0;
};

// Shuffled mixed-document minibatch training, resumable between epochs so
// callers can interleave evaluation.
class Trainer {
 public:
  Trainer(ModelParams params, const TrainConfig& config);

  LossBreakdown run_epoch(const std::vector<TrainExample>& examples);
  const ModelParams& params() const { return params_; }
  const std::vector<TraceRow>& trace() const { return trace_; }
  int epochs_run() const { return epoch_; }

 private:
  ModelParams params_;
  TrainConfig config_;
  AdamW adam_;
  std::mt19937_64 shuffle_rng_;
  std::mt19937_64 dropout_rng_;
  int epoch_ = 0;
  int step_ = 0;
  std::vector<TraceRow> trace_;
};

ModelParams train(const std::vector<TrainExample>& examples, const EncoderConfig& encoder,
                  const TrainConfig& config);

// Central finite differences on sampled parameters against the analytic
// gradient of the batch-mean loss; returns the max relative error. Double
// precision, dropout off.
double gradient_check(const ModelParams& params, const std::vector<TrainExample>& batch,
                      double lambda, double epsilon, int num_samples, std::uint64_t seed);

struct DocumentInference {
  std::vector<Context> contexts;
  std::vector<ContextPrediction> predictions;  // one per context, document order
};

DocumentInference predict_document(const TokenizedDocument& doc, const Hypothesis& hyp,
                                   const Vocabulary& vocab, const ModelParams& params,
                                   const SegmentationConfig& cfg, HypothesisMode mode);

// Single-context input [CLS] hypothesis [SEP] concatenated-evidence [SEP] for
// the oracle-evidence binary task; the evidence tail is truncated on overflow.
TrainExample make_oracle_example(const TokenizedDocument& doc, const Annotation& ann,
                                 const Hypothesis& hyp, const Vocabulary& vocab);

}  // namespace docnli
