#include "docnli/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "docnli/segmentation.hpp"
#include "docnli/util.hpp"

namespace docnli {

double sparse_dot(const SparseVector& a, const SparseVector& b) {
  double dot = 0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i].first == b[j].first) {
      dot += a[i].second * b[j].second;
      ++i;
      ++j;
    } else if (a[i].first < b[j].first) {
      ++i;
    } else {
      ++j;
    }
  }
  return dot;
}

namespace {

double sparse_norm(const SparseVector& v) {
  double sq = 0;
  for (const auto& [id, value] : v) sq += value * value;
  return std::sqrt(sq);
}

}  // namespace

double cosine_similarity(const SparseVector& a, const SparseVector& b) {
  double na = sparse_norm(a);
  double nb = sparse_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return sparse_dot(a, b) / (na * nb);
}

std::vector<std::string> bag_of_words(std::string_view text) {
  std::vector<std::string> words;
  for (const Word& word : split_words(text)) {
    if (!word.is_punctuation) words.push_back(word.surface);
  }
  return words;
}

void TfidfVectorizer::fit(const std::vector<std::vector<std::string>>& documents) {
  vocabulary_.clear();
  idf_.clear();
  std::map<std::string, long> df;
  for (const auto& doc : documents) {
    std::set<std::string> seen(doc.begin(), doc.end());
    for (const auto& word : seen) df[word] += 1;
  }
  const double n = static_cast<double>(documents.size());
  for (const auto& [word, count] : df) {
    int id = static_cast<int>(vocabulary_.size());
    vocabulary_.emplace(word, id);
    idf_.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0);
  }
}

SparseVector TfidfVectorizer::transform(const std::vector<std::string>& tokens) const {
  std::map<int, double> counts;
  for (const auto& token : tokens) {
    auto it = vocabulary_.find(token);
    if (it != vocabulary_.end()) counts[it->second] += 1.0;
  }
  SparseVector vec;
  double sq = 0;
  for (const auto& [id, tf] : counts) {
    double value = tf * idf_[static_cast<std::size_t>(id)];
    vec.push_back({id, value});
    sq += value * value;
  }
  if (sq > 0) {
    double inv = 1.0 / std::sqrt(sq);
    for (auto& [id, value] : vec) value *= inv;
  }
  return vec;
}

void LinearClassifier::fit(const std::vector<SparseVector>& features,
                           const std::vector<int>& labels) {
  if (features.size() != labels.size() || features.empty()) {
    throw ValidationError("linear classifier needs matched, non-empty training data");
  }
  int max_feature = 0;
  for (const auto& x : features) {
    if (!x.empty()) max_feature = std::max(max_feature, x.back().first);
  }
  const int bias_feature = max_feature + 1;
  weights_.assign(static_cast<std::size_t>(bias_feature) + 1, 0.0);

  const std::size_t n = features.size();
  std::vector<double> alpha(n, 0.0);
  std::vector<double> q_diag(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 1.0;  // the constant bias feature
    for (const auto& [id, v] : features[i]) sq += v * v;
    q_diag[i] = sq;
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(mix64(config_.seed));

  converged_ = false;
  for (int iter = 0; iter < config_.max_iterations; ++iter) {
    std::shuffle(order.begin(), order.end(), rng);
    double max_violation = 0.0;
    for (std::size_t i : order) {
      const double y = static_cast<double>(labels[i]);
      double margin = weights_[static_cast<std::size_t>(bias_feature)];
      for (const auto& [id, v] : features[i]) {
        margin += weights_[static_cast<std::size_t>(id)] * v;
      }
      double g = y * margin - 1.0;
      double pg = g;
      if (alpha[i] <= 0.0) {
        pg = std::min(g, 0.0);
      } else if (alpha[i] >= config_.C) {
        pg = std::max(g, 0.0);
      }
      max_violation = std::max(max_violation, std::abs(pg));
      if (pg == 0.0) continue;
      double old = alpha[i];
      alpha[i] = std::clamp(old - g / q_diag[i], 0.0, config_.C);
      double delta = (alpha[i] - old) * y;
      if (delta == 0.0) continue;
      for (const auto& [id, v] : features[i]) {
        weights_[static_cast<std::size_t>(id)] += delta * v;
      }
      weights_[static_cast<std::size_t>(bias_feature)] += delta;
    }
    if (max_violation < config_.tolerance) {
      converged_ = true;
      break;
    }
  }
  if (!converged_) {
    log_warn("linear classifier hit the iteration cap before reaching tolerance");
  }
  bias_weight_ = weights_[static_cast<std::size_t>(bias_feature)];
}

double LinearClassifier::decision(const SparseVector& x) const {
  double value = bias_weight_;
  for (const auto& [id, v] : x) {
    if (id >= 0 && static_cast<std::size_t>(id) < weights_.size()) {
      value += weights_[static_cast<std::size_t>(id)] * v;
    }
  }
  return value;
}

namespace {

int label_rank(NLILabel label) {
  switch (label) {
    case NLILabel::Entailment: return 0;
    case NLILabel::Contradiction: return 1;
    case NLILabel::NotMentioned: return 2;
  }
  return 2;
}

}  // namespace

void MultiClassLinear::fit(const std::vector<SparseVector>& features,
                           const std::vector<NLILabel>& labels) {
  std::set<NLILabel> observed(labels.begin(), labels.end());
  if (observed.size() < 2) {
    throw DegenerateClassError("fewer than two classes observed in training data");
  }
  classes_.assign(observed.begin(), observed.end());
  std::sort(classes_.begin(), classes_.end(),
            [](NLILabel a, NLILabel b) { return label_rank(a) < label_rank(b); });
  models_.clear();
  for (NLILabel cls : classes_) {
    std::vector<int> binary;
    binary.reserve(labels.size());
    for (NLILabel label : labels) binary.push_back(label == cls ? 1 : -1);
    LinearClassifier model(config_);
    model.fit(features, binary);
    models_.push_back(std::move(model));
  }
}

NLILabel MultiClassLinear::predict(const SparseVector& x) const {
  if (models_.empty()) throw ValidationError("multi-class model not fitted");
  std::size_t best = 0;
  double best_score = models_[0].decision(x);
  for (std::size_t c = 1; c < models_.size(); ++c) {
    double score = models_[c].decision(x);
    if (score > best_score) {
      best = c;
      best_score = score;
    }
  }
  return classes_[best];
}

namespace {

DocumentPrediction nli_only_prediction(const std::string& doc_id, int hyp_id, NLILabel label) {
  DocumentPrediction pred;
  pred.doc_id = doc_id;
  pred.hypothesis_id = hyp_id;
  pred.nli_probs = {label == NLILabel::Entailment ? 1.0 : 0.0,
                    label == NLILabel::Contradiction ? 1.0 : 0.0,
                    label == NLILabel::NotMentioned ? 1.0 : 0.0};
  pred.nli_label = label;
  return pred;
}

DocumentPrediction evidence_only_prediction(const Document& doc, int hyp_id,
                                            const std::vector<double>& scores) {
  DocumentPrediction pred;
  pred.doc_id = doc.doc_id;
  pred.hypothesis_id = hyp_id;
  pred.has_nli = false;
  for (std::size_t s = 0; s < doc.spans.size(); ++s) {
    pred.span_probs[doc.spans[s].span_id] = scores[s];
  }
  return pred;
}

std::vector<std::string> span_words(const Document& doc, const SpanRecord& span) {
  return bag_of_words(
      std::string_view(doc.text.data() + span.char_start, span.char_end - span.char_start));
}

}  // namespace

std::vector<DocumentPrediction> majority_vote(const Corpus& train, const Corpus& eval,
                                              bool restrict_to_evidence) {
  std::map<int, std::array<long, 3>> counts;  // hyp -> (E, C, N)
  for (const auto& doc : train.documents) {
    for (const auto& [hyp_id, ann] : doc.annotations) {
      if (restrict_to_evidence && ann.label == NLILabel::NotMentioned) continue;
      counts[hyp_id][static_cast<std::size_t>(label_rank(ann.label))] += 1;
    }
  }
  std::map<int, NLILabel> majority;
  for (const auto& hyp : train.hypotheses) {
    auto it = counts.find(hyp.id);
    if (it == counts.end()) {
      majority[hyp.id] = NLILabel::Entailment;  // no observations: tie rule
      continue;
    }
    const auto& c = it->second;
    int best = 0;
    for (int k = 1; k < 3; ++k) {
      if (c[static_cast<std::size_t>(k)] > c[static_cast<std::size_t>(best)]) best = k;
    }
    majority[hyp.id] = best == 0   ? NLILabel::Entailment
                       : best == 1 ? NLILabel::Contradiction
                                   : NLILabel::NotMentioned;
  }
  std::vector<DocumentPrediction> preds;
  for (const auto& doc : eval.documents) {
    for (const auto& [hyp_id, ann] : doc.annotations) {
      if (restrict_to_evidence && ann.label == NLILabel::NotMentioned) continue;
      preds.push_back(nli_only_prediction(doc.doc_id, hyp_id, majority.at(hyp_id)));
    }
  }
  return preds;
}

std::vector<DocumentPrediction> doc_tfidf_linear(const Corpus& train, const Corpus& eval) {
  TfidfVectorizer vectorizer;
  std::vector<std::vector<std::string>> train_docs;
  for (const auto& doc : train.documents) train_docs.push_back(bag_of_words(doc.text));
  vectorizer.fit(train_docs);

  std::vector<SparseVector> train_vecs;
  for (const auto& words : train_docs) train_vecs.push_back(vectorizer.transform(words));

  // majority fallback for hypotheses with a degenerate class distribution
  std::vector<DocumentPrediction> majority = majority_vote(train, eval);
  std::map<std::pair<std::string, int>, NLILabel> fallback;
  for (const auto& pred : majority) {
    fallback[{pred.doc_id, pred.hypothesis_id}] = pred.nli_label;
  }

  std::vector<DocumentPrediction> preds;
  for (const auto& hyp : train.hypotheses) {
    std::vector<NLILabel> labels;
    for (const auto& doc : train.documents) labels.push_back(doc.annotations.at(hyp.id).label);

    MultiClassLinear model;
    bool fitted = true;
    try {
      model.fit(train_vecs, labels);
    } catch (const DegenerateClassError&) {
      log_warn("hypothesis " + std::to_string(hyp.id) +
               " has a single observed class, falling back to majority");
      fitted = false;
    }
    for (const auto& doc : eval.documents) {
      NLILabel label;
      if (fitted) {
        label = model.predict(vectorizer.transform(bag_of_words(doc.text)));
      } else {
        label = fallback.at({doc.doc_id, hyp.id});
      }
      preds.push_back(nli_only_prediction(doc.doc_id, hyp.id, label));
    }
  }
  return preds;
}

std::vector<DocumentPrediction> span_tfidf_cosine(const Corpus& train, const Corpus& eval) {
  TfidfVectorizer vectorizer;
  std::vector<std::vector<std::string>> train_spans;
  for (const auto& doc : train.documents) {
    for (const auto& span : doc.spans) train_spans.push_back(span_words(doc, span));
  }
  vectorizer.fit(train_spans);

  std::vector<DocumentPrediction> preds;
  for (const auto& doc : eval.documents) {
    std::vector<SparseVector> span_vecs;
    for (const auto& span : doc.spans) {
      span_vecs.push_back(vectorizer.transform(span_words(doc, span)));
    }
    for (const auto& hyp : eval.hypotheses) {
      SparseVector hyp_vec = vectorizer.transform(bag_of_words(hyp.text));
      std::vector<double> scores;
      for (const auto& vec : span_vecs) scores.push_back(cosine_similarity(hyp_vec, vec));
      preds.push_back(evidence_only_prediction(doc, hyp.id, scores));
    }
  }
  return preds;
}

std::vector<DocumentPrediction> span_tfidf_linear(const Corpus& train, const Corpus& eval) {
  TfidfVectorizer vectorizer;
  std::vector<std::vector<std::string>> train_spans;
  for (const auto& doc : train.documents) {
    for (const auto& span : doc.spans) train_spans.push_back(span_words(doc, span));
  }
  vectorizer.fit(train_spans);

  std::vector<SparseVector> train_vecs;
  for (const auto& words : train_spans) train_vecs.push_back(vectorizer.transform(words));

  std::vector<DocumentPrediction> preds;
  for (const auto& hyp : train.hypotheses) {
    std::vector<int> labels;
    long positives = 0;
    for (const auto& doc : train.documents) {
      const Annotation& ann = doc.annotations.at(hyp.id);
      for (const auto& span : doc.spans) {
        bool evidence =
            std::binary_search(ann.evidence.begin(), ann.evidence.end(), span.span_id);
        labels.push_back(evidence ? 1 : -1);
        positives += evidence ? 1 : 0;
      }
    }

    LinearClassifier model;
    bool fitted = positives > 0;
    if (fitted) {
      model.fit(train_vecs, labels);
    } else {
      log_warn("hypothesis " + std::to_string(hyp.id) +
               " has no positive spans, scoring a constant");
    }
    for (const auto& doc : eval.documents) {
      std::vector<double> scores;
      for (const auto& span : doc.spans) {
        scores.push_back(fitted ? model.decision(vectorizer.transform(span_words(doc, span)))
                                : 0.0);
      }
      preds.push_back(evidence_only_prediction(doc, hyp.id, scores));
    }
  }
  return preds;
}

std::vector<double> random_span_scores(const Document& doc, std::uint64_t seed) {
  std::mt19937_64 rng(mix64(seed ^ hash_string(doc.doc_id)));
  std::vector<double> scores;
  scores.reserve(doc.spans.size());
  for (std::size_t s = 0; s < doc.spans.size(); ++s) {
    scores.push_back(static_cast<double>(rng() >> 11) * 0x1.0p-53);
  }
  return scores;
}

std::vector<DocumentPrediction> random_scores(const Corpus& eval, std::uint64_t seed) {
  std::vector<DocumentPrediction> preds;
  for (const auto& doc : eval.documents) {
    for (const auto& hyp : eval.hypotheses) {
      std::vector<double> scores =
          random_span_scores(doc, seed ^ (static_cast<std::uint64_t>(hyp.id) * 0x9e3779b9ULL));
      preds.push_back(evidence_only_prediction(doc, hyp.id, scores));
    }
  }
  return preds;
}

namespace {

struct SquadWindow {
  ModelInput input;
  int window_start = 0;  // document-token index of the first window token
  int contract_offset = 0;  // sequence position of the first window token
};

std::vector<SquadWindow> squad_windows(const TokenizedDocument& doc, const Hypothesis& hyp,
                                       const Vocabulary& vocab, int stride) {
  std::vector<int> hyp_ids;
  for (const Token& t : tokenize(hyp.text, vocab)) hyp_ids.push_back(t.id);
  if (hyp_ids.empty()) {
    throw ValidationError("hypothesis " + std::to_string(hyp.id) + " tokenizes to nothing");
  }
  const int budget = kMaxSequenceLength - static_cast<int>(hyp_ids.size()) - 3;
  if (budget <= 0) throw LengthOverflowError("hypothesis leaves no window budget");
  const int total = static_cast<int>(doc.tokens.size());

  std::vector<SquadWindow> windows;
  for (int start = 0;; start += stride) {
    int end = std::min(start + budget, total);
    SquadWindow window;
    window.window_start = start;
    ModelInput& input = window.input;
    input.token_ids.push_back(Vocabulary::kCls);
    for (int id : hyp_ids) input.token_ids.push_back(id);
    input.token_ids.push_back(Vocabulary::kSep);
    window.contract_offset = input.length();
    for (int t = start; t < end; ++t) {
      input.token_ids.push_back(doc.tokens[static_cast<std::size_t>(t)].id);
    }
    input.token_ids.push_back(Vocabulary::kSep);
    input.attention_mask.assign(static_cast<std::size_t>(input.length()), 1);
    input.segment_ids.assign(static_cast<std::size_t>(input.length()), 1);
    for (int i = 0; i < window.contract_offset; ++i) {
      input.segment_ids[static_cast<std::size_t>(i)] = 0;
    }
    windows.push_back(std::move(window));
    if (end >= total) break;
  }
  return windows;
}

struct SquadExample {
  ModelInput input;
  int start_target = 0;  // sequence position ([CLS] when the span is absent)
  int end_target = 0;
};

}  // namespace

ModelParams train_squad_baseline(const Corpus& train, const Vocabulary& vocab,
                                 const SquadBaselineConfig& config) {
  config.train.validate();

  std::vector<SquadExample> examples;
  for (const auto& doc : train.documents) {
    TokenizedDocument tokenized = tokenize_document(doc, vocab);
    for (const auto& hyp : train.hypotheses) {
      const Annotation& ann = doc.annotations.at(hyp.id);
      if (ann.label == NLILabel::NotMentioned) continue;
      std::vector<SquadWindow> windows = squad_windows(tokenized, hyp, vocab, config.stride);
      for (int corpus_span : ann.evidence) {
        auto it = std::lower_bound(tokenized.span_ids.begin(), tokenized.span_ids.end(),
                                   corpus_span);
        if (it == tokenized.span_ids.end() || *it != corpus_span) continue;
        int s = static_cast<int>(it - tokenized.span_ids.begin());
        int first = tokenized.span_boundaries[s];
        int last = tokenized.span_boundaries[s + 1] - 1;
        for (const SquadWindow& window : windows) {
          SquadExample example;
          example.input = window.input;
          int window_end = window.window_start + (window.input.length() - window.contract_offset - 1);
          if (first >= window.window_start && last < window_end) {
            example.start_target = window.contract_offset + (first - window.window_start);
            example.end_target = window.contract_offset + (last - window.window_start);
          } else {
            example.start_target = 0;  // [CLS]
            example.end_target = 0;
          }
          examples.push_back(std::move(example));
        }
      }
    }
  }
  if (examples.empty()) throw ValidationError("no evidence spans to train the QA baseline on");

  ModelParams params = ModelParams::random_init(config.encoder, config.train.seed);
  AdamW adam(params.size(), AdamWConfig{config.train.learning_rate, 0.9, 0.999, 1e-8,
                                        config.train.weight_decay, config.train.warmup_steps,
                                        config.train.max_grad_norm});
  std::mt19937_64 shuffle_rng(mix64(config.train.seed));
  std::mt19937_64 dropout_rng(mix64(config.train.seed ^ 0x5851f42d4c957f2dULL));
  Eigen::VectorXd grad(params.size());

  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < config.train.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t at = 0; at < order.size();
         at += static_cast<std::size_t>(config.train.batch_size)) {
      std::size_t batch_end =
          std::min(order.size(), at + static_cast<std::size_t>(config.train.batch_size));
      grad.setZero();
      double batch_loss = 0;
      const double scale = 1.0 / static_cast<double>(batch_end - at);
      for (std::size_t k = at; k < batch_end; ++k) {
        const SquadExample& example = examples[order[k]];
        EncoderPass pass(params);
        const Eigen::MatrixXd& hidden =
            pass.run(example.input.token_ids, example.input.segment_ids,
                     example.input.attention_mask, &dropout_rng);
        Eigen::MatrixXd logits =
            (hidden * params.tensor("qa_w")).rowwise() + params.tensor("qa_b").row(0);

        Eigen::MatrixXd dlogits(logits.rows(), 2);
        const int targets[2] = {example.start_target, example.end_target};
        for (int side = 0; side < 2; ++side) {
          Eigen::VectorXd column = logits.col(side);
          Eigen::VectorXd shifted = column.array() - column.maxCoeff();
          Eigen::VectorXd expd = shifted.array().exp();
          Eigen::VectorXd probs = expd / expd.sum();
          batch_loss += -0.5 * scale * std::log(std::max(probs(targets[side]), 1e-300));
          Eigen::VectorXd dcol = probs * (0.5 * scale);
          dcol(targets[side]) -= 0.5 * scale;
          dlogits.col(side) = dcol;
        }
        auto gw = [&](const char* name) {
          for (const TensorSpec& s : params.specs()) {
            if (s.name == name) {
              return Eigen::Map<Eigen::MatrixXd>(grad.data() + s.offset, s.rows, s.cols);
            }
          }
          throw ShapeMismatchError("unknown tensor");
        };
        gw("qa_w") += hidden.transpose() * dlogits;
        gw("qa_b").row(0) += dlogits.colwise().sum();
        Eigen::MatrixXd dhidden = dlogits * params.tensor("qa_w").transpose();
        pass.backward(dhidden, grad);
      }
      if (!std::isfinite(batch_loss)) throw DivergenceError("non-finite QA baseline loss");
      adam.step(params, grad);
    }
  }
  return params;
}

std::vector<double> squad_style_scores(const TokenizedDocument& doc, const Hypothesis& hyp,
                                       const Vocabulary& vocab, const ModelParams& params,
                                       int stride) {
  std::vector<SquadWindow> windows = squad_windows(doc, hyp, vocab, stride);

  std::vector<double> start_sum(doc.tokens.size(), 0.0), end_sum(doc.tokens.size(), 0.0);
  std::vector<int> start_n(doc.tokens.size(), 0), end_n(doc.tokens.size(), 0);
  for (const SquadWindow& window : windows) {
    EncoderPass pass(params);
    const Eigen::MatrixXd& hidden = pass.run(window.input.token_ids, window.input.segment_ids,
                                             window.input.attention_mask, nullptr);
    Eigen::MatrixXd logits =
        (hidden * params.tensor("qa_w")).rowwise() + params.tensor("qa_b").row(0);
    int window_tokens = window.input.length() - window.contract_offset - 1;
    for (int i = 0; i < window_tokens; ++i) {
      std::size_t t = static_cast<std::size_t>(window.window_start + i);
      start_sum[t] += logits(window.contract_offset + i, 0);
      start_n[t] += 1;
      end_sum[t] += logits(window.contract_offset + i, 1);
      end_n[t] += 1;
    }
  }

  std::vector<double> scores;
  scores.reserve(static_cast<std::size_t>(doc.num_spans()));
  for (int s = 0; s < doc.num_spans(); ++s) {
    std::size_t first = static_cast<std::size_t>(doc.span_boundaries[s]);
    std::size_t last = static_cast<std::size_t>(doc.span_boundaries[s + 1] - 1);
    double start_avg = start_n[first] > 0 ? start_sum[first] / start_n[first] : 0.0;
    double end_avg = end_n[last] > 0 ? end_sum[last] / end_n[last] : 0.0;
    scores.push_back(0.5 * (start_avg + end_avg));
  }
  return scores;
}

std::vector<DocumentPrediction> squad_predictions(const Corpus& eval, const Vocabulary& vocab,
                                                  const ModelParams& params, int stride) {
  std::vector<DocumentPrediction> preds;
  for (const auto& doc : eval.documents) {
    TokenizedDocument tokenized = tokenize_document(doc, vocab);
    for (const auto& hyp : eval.hypotheses) {
      std::vector<double> by_tokenized = squad_style_scores(tokenized, hyp, vocab, params, stride);
      // map tokenized spans back to corpus span ids; merged-away spans keep a
      // floor score so every span is covered
      std::vector<double> scores(doc.spans.size(), -1e9);
      for (int s = 0; s < tokenized.num_spans(); ++s) {
        scores[static_cast<std::size_t>(tokenized.span_ids[static_cast<std::size_t>(s)])] =
            by_tokenized[static_cast<std::size_t>(s)];
      }
      preds.push_back(evidence_only_prediction(doc, hyp.id, scores));
    }
  }
  return preds;
}

}  // namespace docnli
