#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "docnli/aggregate.hpp"
#include "docnli/corpus.hpp"
#include "docnli/model.hpp"

namespace docnli {

// feature id -> value, sorted by id
using SparseVector = std::vector<std::pair<int, double>>;

double sparse_dot(const SparseVector& a, const SparseVector& b);
double cosine_similarity(const SparseVector& a, const SparseVector& b);

// Lowercased alphanumeric unigrams; punctuation dropped.
std::vector<std::string> bag_of_words(std::string_view text);

// Unigram TF-IDF with smoothed inverse document frequencies
// (log((1+N)/(1+df)) + 1) and L2 normalization.
class TfidfVectorizer {
 public:
  void fit(const std::vector<std::vector<std::string>>& documents);
  SparseVector transform(const std::vector<std::string>& tokens) const;
  int vocabulary_size() const { return static_cast<int>(vocabulary_.size()); }

 private:
  std::map<std::string, int> vocabulary_;
  std::vector<double> idf_;
};

struct LinearClassifierConfig {
  double C = 1.0;
  double tolerance = 1e-3;
  int max_iterations = 1000;
  std::uint64_t seed = 0;
};

// L2-regularized hinge-loss binary classifier trained by dual coordinate
// descent; a constant feature carries the bias.
class LinearClassifier {
 public:
  explicit LinearClassifier(LinearClassifierConfig config = {}) : config_(config) {}

  void fit(const std::vector<SparseVector>& features, const std::vector<int>& labels);  // +-1
  double decision(const SparseVector& x) const;
  bool converged() const { return converged_; }

 private:
  LinearClassifierConfig config_;
  std::vector<double> weights_;
  double bias_weight_ = 0;
  bool converged_ = false;
};

// One-vs-rest over the NLI labels observed in training.
class MultiClassLinear {
 public:
  explicit MultiClassLinear(LinearClassifierConfig config = {}) : config_(config) {}

  // throws DegenerateClassError when fewer than two classes are observed
  void fit(const std::vector<SparseVector>& features, const std::vector<NLILabel>& labels);
  NLILabel predict(const SparseVector& x) const;  // ties break E > C > N

 private:
  LinearClassifierConfig config_;
  std::vector<NLILabel> classes_;
  std::vector<LinearClassifier> models_;
};

// The five reference systems. Each returns one dump line per evaluated
// (document, hypothesis) pair, in the shared prediction format.

// NLI only: the most frequent training label per hypothesis (ties E > C > N).
// restrict_to_evidence selects the Entailment/Contradiction binary variant.
std::vector<DocumentPrediction> majority_vote(const Corpus& train, const Corpus& eval,
                                              bool restrict_to_evidence = false);

// NLI only: per-hypothesis 3-class linear model on whole-document TF-IDF.
// Hypotheses with fewer than two observed classes fall back to majority.
std::vector<DocumentPrediction> doc_tfidf_linear(const Corpus& train, const Corpus& eval);

// Evidence only: cosine between hypothesis and span TF-IDF vectors (IDF fitted
// on training spans).
std::vector<DocumentPrediction> span_tfidf_cosine(const Corpus& train, const Corpus& eval);

// Evidence only: per-hypothesis binary linear model over span TF-IDF; decision
// values serve as ranking scores. No positive spans -> constant fallback.
std::vector<DocumentPrediction> span_tfidf_linear(const Corpus& train, const Corpus& eval);

// Evidence only: seeded uniform(0,1) per span.
std::vector<double> random_span_scores(const Document& doc, std::uint64_t seed);
std::vector<DocumentPrediction> random_scores(const Corpus& eval, std::uint64_t seed);

// Fixed-window QA-style baseline: start/end token scoring with a stride,
// trained per evidence span, scored by averaging endpoint logits over windows.
struct SquadBaselineConfig {
  EncoderConfig encoder;
  TrainConfig train;
  int stride = 128;
};

ModelParams train_squad_baseline(const Corpus& train, const Vocabulary& vocab,
                                 const SquadBaselineConfig& config);

std::vector<double> squad_style_scores(const TokenizedDocument& doc, const Hypothesis& hyp,
                                       const Vocabulary& vocab, const ModelParams& params,
                                       int stride);

std::vector<DocumentPrediction> squad_predictions(const Corpus& eval, const Vocabulary& vocab,
                                                  const ModelParams& params, int stride);

}  // namespace docnli
