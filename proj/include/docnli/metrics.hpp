#pragma once

#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "docnli/aggregate.hpp"
#include "docnli/corpus.hpp"

namespace docnli {

struct RankedSpan {
  int span_id = 0;
  double score = 0;
};

// One (document, hypothesis) pair with gold evidence defined.
struct EvidencePair {
  int hypothesis_id = 0;
  std::vector<RankedSpan> spans;
  std::vector<int> gold;  // non-empty, sorted span ids
};

struct NLIPair {
  int hypothesis_id = 0;
  NLILabel gold = NLILabel::NotMentioned;
  NLILabel predicted = NLILabel::NotMentioned;
};

// AP over one ranked list; score ties break by ascending span_id.
double average_precision(std::vector<RankedSpan> spans, const std::vector<int>& gold);

// Per-label scheme: mean AP per hypothesis, then the unweighted mean over
// hypotheses. Pooled: plain mean over all pairs.
enum class MapScheme { PerLabelMacro, Pooled };
double mean_ap(const std::vector<EvidencePair>& pairs, MapScheme scheme);

// Sweep thresholds over the observed scores from the highest down; report the
// precision at the first threshold whose recall reaches the target, 0 if it is
// never reached. Predicted = strictly above the threshold.
double precision_at_recall(const std::vector<std::pair<double, bool>>& pooled, double target);

struct NLIScores {
  double accuracy = 0;
  double f1_contradiction = 0;
  double f1_entailment = 0;
};

// Micro average over each hypothesis's documents, then macro average over
// hypotheses. A class with zero gold and zero predicted occurrences for a
// hypothesis drops that hypothesis from the class's macro mean.
NLIScores nli_scores(const std::vector<NLIPair>& pairs);

struct SpansRead {
  double until_one = 0;  // 1-based rank of the first gold span found
  double until_all = 0;  // 1-based rank of the last gold span found
};

SpansRead spans_read(const std::vector<RankedSpan>& spans, const std::vector<int>& gold);

struct HypothesisReport {
  double ap = std::numeric_limits<double>::quiet_NaN();
  double accuracy = std::numeric_limits<double>::quiet_NaN();
  double f1_contradiction = std::numeric_limits<double>::quiet_NaN();
  double f1_entailment = std::numeric_limits<double>::quiet_NaN();
};

struct EvalReport {
  static constexpr double kAbsent = std::numeric_limits<double>::quiet_NaN();
  double map = kAbsent;         // per-label scheme
  double map_pooled = kAbsent;  // pooled-over-pairs alternative
  double p_at_r80 = kAbsent;
  double nli_accuracy = kAbsent;
  double f1_contradiction = kAbsent;
  double f1_entailment = kAbsent;
  double spans_read_one = kAbsent;
  double spans_read_all = kAbsent;
  std::map<int, HypothesisReport> per_hypothesis;

  std::string to_json() const;
  // aligned table with the mAP / P@R80 / Acc. / F1(C) / F1(E) columns
  std::string to_table(const std::string& system_name) const;
};

// Join a prediction dump against the gold corpus. Dumped span scores must
// cover every span of their document (or be absent entirely for NLI-only
// systems); evidence metrics skip pairs whose gold label is not_mentioned.
EvalReport evaluate(const std::vector<DocumentPrediction>& predictions, const Corpus& gold);

}  // namespace docnli
