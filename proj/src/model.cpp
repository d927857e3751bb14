#include "docnli/model.hpp"

#include <algorithm>
#include <cmath>

#include "docnli/util.hpp"

namespace docnli {

namespace {

constexpr double kProbClamp = 1e-7;

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  Eigen::VectorXd shifted = logits.array() - logits.maxCoeff();
  Eigen::VectorXd expd = shifted.array().exp();
  return expd / expd.sum();
}

// Everything the head backward pass needs from one forward evaluation.
struct HeadActivations {
  Eigen::MatrixXd span_h1;      // markers x d, tanh hidden
  Eigen::VectorXd span_logits;  // markers
  Eigen::VectorXd nli_h1;       // d
  Eigen::VectorXd nli_logits;   // classes
};

ContextPrediction run_heads(const ModelParams& params, const Eigen::MatrixXd& hidden,
                            const ModelInput& input, HeadActivations* acts) {
  const int num_markers = static_cast<int>(input.span_positions.size());
  const int d = params.config().hidden_dim;

  auto span_w1 = params.tensor("span_w1");
  auto span_b1 = params.tensor("span_b1");
  auto span_w2 = params.tensor("span_w2");
  auto span_b2 = params.tensor("span_b2");

  Eigen::MatrixXd span_h1(num_markers, d);
  Eigen::VectorXd span_logits(num_markers);
  for (int m = 0; m < num_markers; ++m) {
    int pos = input.span_positions[static_cast<std::size_t>(m)];
    Eigen::RowVectorXd z = hidden.row(pos) * span_w1 + span_b1.row(0);
    span_h1.row(m) = z.array().tanh();
    span_logits(m) = (span_h1.row(m) * span_w2)(0, 0) + span_b2(0, 0);
  }

  auto nli_w1 = params.tensor("nli_w1");
  auto nli_b1 = params.tensor("nli_b1");
  auto nli_w2 = params.tensor("nli_w2");
  auto nli_b2 = params.tensor("nli_b2");
  Eigen::RowVectorXd z = hidden.row(input.cls_position) * nli_w1 + nli_b1.row(0);
  Eigen::VectorXd nli_h1 = z.array().tanh().matrix().transpose();
  Eigen::VectorXd nli_logits =
      (nli_h1.transpose() * nli_w2).transpose() + nli_b2.row(0).transpose();

  ContextPrediction pred;
  pred.span_probs.resize(static_cast<std::size_t>(num_markers));
  for (int m = 0; m < num_markers; ++m) {
    pred.span_probs[static_cast<std::size_t>(m)] = sigmoid(span_logits(m));
  }
  Eigen::VectorXd probs = softmax(nli_logits);
  for (int c = 0; c < probs.size() && c < 3; ++c) pred.nli_probs[static_cast<std::size_t>(c)] = probs(c);

  if (acts != nullptr) {
    acts->span_h1 = std::move(span_h1);
    acts->span_logits = std::move(span_logits);
    acts->nli_h1 = std::move(nli_h1);
    acts->nli_logits = std::move(nli_logits);
  }
  return pred;
}

// dL/d(logits) under the clamped cross entropies. Clamped coordinates carry no
// gradient, matching the actual loss surface.
Eigen::VectorXd span_logit_grads(const ContextPrediction& pred, const TeacherSignal& teacher) {
  const int n = static_cast<int>(pred.span_probs.size());
  Eigen::VectorXd grads(n);
  for (int i = 0; i < n; ++i) {
    double p = pred.span_probs[static_cast<std::size_t>(i)];
    if (p <= kProbClamp || p >= 1.0 - kProbClamp) {
      grads(i) = 0.0;
    } else {
      grads(i) = p - static_cast<double>(teacher.span_labels[static_cast<std::size_t>(i)]);
    }
  }
  return grads;
}

Eigen::VectorXd nli_logit_grads(const Eigen::VectorXd& logits, const TeacherSignal& teacher) {
  const int classes = static_cast<int>(logits.size());
  Eigen::VectorXd probs = softmax(logits);
  Eigen::VectorXd dprob = Eigen::VectorXd::Zero(classes);
  for (int j = 0; j < classes; ++j) {
    double y = teacher.nli_one_hot[static_cast<std::size_t>(j)];
    if (y == 0.0) continue;
    double p = probs(j);
    if (p <= kProbClamp || p >= 1.0 - kProbClamp) continue;  // clamp active
    dprob(j) = -y / p;
  }
  // chain through the softmax Jacobian
  double dot = dprob.dot(probs);
  Eigen::VectorXd dz(classes);
  for (int k = 0; k < classes; ++k) dz(k) = probs(k) * (dprob(k) - dot);
  return dz;
}

}  // namespace

void TrainConfig::validate() const {
  if (lambda <= 0.0) throw ValidationError("loss weight lambda must be positive");
  if (learning_rate <= 0.0) throw ValidationError("learning rate must be positive");
  if (batch_size < 1) throw ValidationError("batch size must be at least 1");
  if (epochs < 1) throw ValidationError("epochs must be at least 1");
  if (warmup_steps < 0) throw ValidationError("warmup steps must be non-negative");
  if (weight_decay < 0.0) throw ValidationError("weight decay must be non-negative");
  if (max_grad_norm < 0.0) throw ValidationError("max gradient norm must be non-negative");
}

ContextPrediction forward(const ModelInput& input, const ModelParams& params) {
  EncoderPass pass(params);
  const Eigen::MatrixXd& hidden =
      pass.run(input.token_ids, input.segment_ids, input.attention_mask, nullptr);
  return run_heads(params, hidden, input, nullptr);
}

double loss_span(const ContextPrediction& pred, const TeacherSignal& teacher) {
  if (pred.span_probs.size() != teacher.span_labels.size()) {
    throw ShapeMismatchError("span prediction/teacher length mismatch: " +
                             std::to_string(pred.span_probs.size()) + " vs " +
                             std::to_string(teacher.span_labels.size()));
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < pred.span_probs.size(); ++i) {
    double p = clamp_prob(pred.span_probs[i]);
    double s = static_cast<double>(teacher.span_labels[i]);
    loss += -s * std::log(p) - (1.0 - s) * std::log(1.0 - p);
  }
  return loss;
}

double loss_nli(const ContextPrediction& pred, const TeacherSignal& teacher) {
  if (!teacher.has_evidence) return 0.0;
  double loss = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    double y = teacher.nli_one_hot[c];
    if (y == 0.0) continue;
    loss += -y * std::log(clamp_prob(pred.nli_probs[c]));
  }
  return loss;
}

double loss_total(const ContextPrediction& pred, const TeacherSignal& teacher, double lambda) {
  return loss_span(pred, teacher) + lambda * loss_nli(pred, teacher);
}

LossBreakdown batch_loss_and_gradient(const ModelParams& params,
                                      const std::vector<const TrainExample*>& batch,
                                      double lambda, Eigen::VectorXd* grad,
                                      std::mt19937_64* dropout_rng) {
  if (batch.empty()) throw ValidationError("empty batch");
  const double scale = 1.0 / static_cast<double>(batch.size());
  LossBreakdown out;

  auto gview = [&](const std::string& name) {
    for (const TensorSpec& s : params.specs()) {
      if (s.name == name) {
        return Eigen::Map<Eigen::MatrixXd>(grad->data() + s.offset, s.rows, s.cols);
      }
    }
    throw ShapeMismatchError("unknown tensor: " + name);
  };

  for (const TrainExample* example : batch) {
    EncoderPass pass(params);
    const Eigen::MatrixXd& hidden = pass.run(example->input.token_ids,
                                             example->input.segment_ids,
                                             example->input.attention_mask, dropout_rng);
    HeadActivations acts;
    ContextPrediction pred = run_heads(params, hidden, example->input, &acts);

    double l_span = loss_span(pred, example->teacher);
    double l_nli = loss_nli(pred, example->teacher);
    out.span += l_span * scale;
    out.nli += l_nli * scale;
    out.total += (l_span + lambda * l_nli) * scale;

    if (grad == nullptr) continue;

    Eigen::MatrixXd d_hidden = Eigen::MatrixXd::Zero(hidden.rows(), hidden.cols());

    Eigen::VectorXd d_span_logits = span_logit_grads(pred, example->teacher) * scale;
    if (d_span_logits.size() > 0) {
      auto span_w1 = params.tensor("span_w1");
      auto span_w2 = params.tensor("span_w2");
      auto g_w1 = gview("span_w1");
      auto g_b1 = gview("span_b1");
      auto g_w2 = gview("span_w2");
      auto g_b2 = gview("span_b2");
      for (int m = 0; m < d_span_logits.size(); ++m) {
        double dz = d_span_logits(m);
        if (dz == 0.0) continue;
        int pos = example->input.span_positions[static_cast<std::size_t>(m)];
        Eigen::RowVectorXd h1 = acts.span_h1.row(m);
        g_w2.col(0) += dz * h1.transpose();
        g_b2(0, 0) += dz;
        Eigen::RowVectorXd dh1 = dz * span_w2.col(0).transpose();
        Eigen::RowVectorXd dpre = dh1.array() * (1.0 - h1.array().square());
        g_w1 += hidden.row(pos).transpose() * dpre;
        g_b1.row(0) += dpre;
        d_hidden.row(pos) += dpre * span_w1.transpose();
      }
    }

    if (example->teacher.has_evidence) {
      Eigen::VectorXd d_nli = nli_logit_grads(acts.nli_logits, example->teacher) *
                              (scale * lambda);
      if (d_nli.cwiseAbs().maxCoeff() > 0.0) {
        auto nli_w1 = params.tensor("nli_w1");
        auto nli_w2 = params.tensor("nli_w2");
        Eigen::RowVectorXd h1 = acts.nli_h1.transpose();
        gview("nli_w2") += h1.transpose() * d_nli.transpose();
        gview("nli_b2").row(0) += d_nli.transpose();
        Eigen::RowVectorXd dh1 = (nli_w2 * d_nli).transpose();
        Eigen::RowVectorXd dpre = dh1.array() * (1.0 - h1.array().square());
        gview("nli_w1") += hidden.row(example->input.cls_position).transpose() * dpre;
        gview("nli_b1").row(0) += dpre;
        d_hidden.row(example->input.cls_position) += dpre * nli_w1.transpose();
      }
    }

    pass.backward(d_hidden, *grad);
  }
  return out;
}

LossBreakdown batch_loss(const ModelParams& params, const std::vector<TrainExample>& examples,
                         double lambda) {
  std::vector<const TrainExample*> batch;
  batch.reserve(examples.size());
  for (const auto& e : examples) batch.push_back(&e);
  return batch_loss_and_gradient(params, batch, lambda, nullptr, nullptr);
}

Trainer::Trainer(ModelParams params, const TrainConfig& config)
    : params_(std::move(params)),
      config_(config),
      adam_(params_.size(),
            AdamWConfig{config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay,
                        config.warmup_steps, config.max_grad_norm}),
      shuffle_rng_(mix64(config.seed)),
      dropout_rng_(mix64(config.seed ^ 0x9e3779b97f4a7c15ULL)) {
  config_.validate();
}

LossBreakdown Trainer::run_epoch(const std::vector<TrainExample>& examples) {
  if (examples.empty()) throw ValidationError("no training examples");
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), shuffle_rng_);

  ++epoch_;
  LossBreakdown epoch_mean;
  int batches = 0;
  Eigen::VectorXd grad(params_.size());
  for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(config_.batch_size)) {
    std::vector<const TrainExample*> batch;
    for (std::size_t i = at;
         i < order.size() && i < at + static_cast<std::size_t>(config_.batch_size); ++i) {
      batch.push_back(&examples[order[i]]);
    }
    grad.setZero();
    LossBreakdown losses =
        batch_loss_and_gradient(params_, batch, config_.lambda, &grad, &dropout_rng_);
    if (!std::isfinite(losses.total)) {
      throw DivergenceError("non-finite loss at step " + std::to_string(step_ + 1));
    }
    adam_.step(params_, grad);
    ++step_;
    ++batches;
    trace_.push_back({epoch_, step_, losses.span, losses.nli, losses.total});
    epoch_mean.span += losses.span;
    epoch_mean.nli += losses.nli;
    epoch_mean.total += losses.total;
  }
  epoch_mean.span /= batches;
  epoch_mean.nli /= batches;
  epoch_mean.total /= batches;
  return epoch_mean;
}

ModelParams train(const std::vector<TrainExample>& examples, const EncoderConfig& encoder,
                  const TrainConfig& config) {
  config.validate();
  Trainer trainer(ModelParams::random_init(encoder, config.seed), config);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    LossBreakdown mean = trainer.run_epoch(examples);
    log_info("epoch " + std::to_string(epoch + 1) + " loss " + std::to_string(mean.total));
  }
  return trainer.params();
}

double gradient_check(const ModelParams& params, const std::vector<TrainExample>& batch,
                      double lambda, double epsilon, int num_samples, std::uint64_t seed) {
  std::vector<const TrainExample*> ptrs;
  for (const auto& e : batch) ptrs.push_back(&e);

  Eigen::VectorXd analytic(params.size());
  analytic.setZero();
  batch_loss_and_gradient(params, ptrs, lambda, &analytic, nullptr);

  ModelParams probe = params;
  std::mt19937_64 rng(mix64(seed));
  double max_rel = 0.0;
  for (int s = 0; s < num_samples; ++s) {
    std::ptrdiff_t idx =
        static_cast<std::ptrdiff_t>(rng() % static_cast<std::uint64_t>(params.size()));
    double saved = probe.flat()(idx);
    probe.flat()(idx) = saved + epsilon;
    double plus = batch_loss_and_gradient(probe, ptrs, lambda, nullptr, nullptr).total;
    probe.flat()(idx) = saved - epsilon;
    double minus = batch_loss_and_gradient(probe, ptrs, lambda, nullptr, nullptr).total;
    probe.flat()(idx) = saved;
    double numeric = (plus - minus) / (2.0 * epsilon);
    double a = analytic(idx);
    // absolute floor keeps finite-difference noise on near-zero coordinates
    // from registering as relative error
    double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1e-3);
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

DocumentInference predict_document(const TokenizedDocument& doc, const Hypothesis& hyp,
                                   const Vocabulary& vocab, const ModelParams& params,
                                   const SegmentationConfig& cfg, HypothesisMode mode) {
  DocumentInference out;
  for (AssembledContext& ac : build_contexts(doc, hyp, vocab, cfg, mode)) {
    out.predictions.push_back(forward(ac.input, params));
    out.contexts.push_back(std::move(ac.context));
  }
  return out;
}

TrainExample make_oracle_example(const TokenizedDocument& doc, const Annotation& ann,
                                 const Hypothesis& hyp, const Vocabulary& vocab) {
  if (ann.label == NLILabel::NotMentioned) {
    throw ValidationError("oracle task requires an entailment or contradiction annotation");
  }
  std::vector<int> hyp_ids;
  for (const Token& t : tokenize(hyp.text, vocab)) hyp_ids.push_back(t.id);
  if (hyp_ids.empty()) {
    throw ValidationError("hypothesis " + std::to_string(hyp.id) + " tokenizes to nothing");
  }

  ModelInput input;
  input.token_ids.push_back(Vocabulary::kCls);
  for (int id : hyp_ids) input.token_ids.push_back(id);
  input.token_ids.push_back(Vocabulary::kSep);
  const int hypothesis_side = input.length();

  bool truncated = false;
  for (int corpus_span : ann.evidence) {
    auto it = std::lower_bound(doc.span_ids.begin(), doc.span_ids.end(), corpus_span);
    if (it == doc.span_ids.end() || *it != corpus_span) continue;  // merged-away span
    int s = static_cast<int>(it - doc.span_ids.begin());
    for (int t = doc.span_boundaries[s]; t < doc.span_boundaries[s + 1]; ++t) {
      if (input.length() >= kMaxSequenceLength - 1) {
        truncated = true;
        break;
      }
      input.token_ids.push_back(doc.tokens[static_cast<std::size_t>(t)].id);
    }
    if (truncated) break;
  }
  if (truncated) {
    log_warn("oracle evidence for document " + doc.doc_id + " truncated to fit the sequence");
  }
  input.token_ids.push_back(Vocabulary::kSep);
  input.attention_mask.assign(static_cast<std::size_t>(input.length()), 1);
  input.segment_ids.assign(static_cast<std::size_t>(input.length()), 1);
  for (int i = 0; i < hypothesis_side; ++i) input.segment_ids[static_cast<std::size_t>(i)] = 0;

  TrainExample example;
  example.input = std::move(input);
  example.teacher.nli_one_hot = {ann.label == NLILabel::Entailment ? 1.0 : 0.0,
                                 ann.label == NLILabel::Contradiction ? 1.0 : 0.0, 0.0};
  example.teacher.has_evidence = true;
  example.teacher.aligned = true;
  return example;
}

}  // namespace docnli
