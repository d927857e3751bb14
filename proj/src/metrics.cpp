#include "docnli/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <json.hpp>
#include <set>
#include <sstream>

#include "docnli/util.hpp"

namespace docnli {

namespace {

void sort_ranking(std::vector<RankedSpan>& spans) {
  std::sort(spans.begin(), spans.end(), [](const RankedSpan& a, const RankedSpan& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.span_id < b.span_id;
  });
}

}  // namespace

double average_precision(std::vector<RankedSpan> spans, const std::vector<int>& gold) {
  if (gold.empty()) throw NoGoldError("average precision needs at least one gold span");
  sort_ranking(spans);
  std::set<int> gold_set(gold.begin(), gold.end());
  double sum = 0;
  int hits = 0;
  for (std::size_t rank = 0; rank < spans.size(); ++rank) {
    if (gold_set.count(spans[rank].span_id) == 0) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
  }
  if (hits != static_cast<int>(gold_set.size())) {
    throw NoGoldError("gold span missing from the ranked list");
  }
  return sum / static_cast<double>(hits);
}

double mean_ap(const std::vector<EvidencePair>& pairs, MapScheme scheme) {
  if (pairs.empty()) return EvalReport::kAbsent;
  if (scheme == MapScheme::Pooled) {
    double sum = 0;
    for (const auto& pair : pairs) sum += average_precision(pair.spans, pair.gold);
    return sum / static_cast<double>(pairs.size());
  }
  std::map<int, std::pair<double, int>> per_label;  // hyp -> (sum, count)
  for (const auto& pair : pairs) {
    auto& [sum, count] = per_label[pair.hypothesis_id];
    sum += average_precision(pair.spans, pair.gold);
    count += 1;
  }
  double macro = 0;
  for (const auto& [hyp, entry] : per_label) {
    macro += entry.first / entry.second;
  }
  return macro / static_cast<double>(per_label.size());
}

double precision_at_recall(const std::vector<std::pair<double, bool>>& pooled, double target) {
  long total_gold = 0;
  for (const auto& [score, is_gold] : pooled) total_gold += is_gold ? 1 : 0;
  if (total_gold == 0) return 0.0;

  std::vector<std::pair<double, bool>> sorted = pooled;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });

  // Walk distinct thresholds from the top; at threshold t the predicted set is
  // everything strictly above t, i.e. all earlier (higher-score) groups.
  long tp = 0;
  long predicted = 0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    double recall = static_cast<double>(tp) / static_cast<double>(total_gold);
    if (recall >= target) {
      return predicted > 0 ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    }
    double threshold = sorted[i].first;
    while (i < sorted.size() && sorted[i].first == threshold) {
      tp += sorted[i].second ? 1 : 0;
      ++predicted;
      ++i;
    }
  }
  // The lowest observed score is itself the final threshold, so the predicted
  // set never includes its group and the target was not reached above it.
  return 0.0;
}

NLIScores nli_scores(const std::vector<NLIPair>& pairs) {
  std::map<int, std::vector<const NLIPair*>> by_hypothesis;
  for (const auto& pair : pairs) by_hypothesis[pair.hypothesis_id].push_back(&pair);

  double accuracy_sum = 0;
  int accuracy_n = 0;
  double f1_sum[2] = {0, 0};  // contradiction, entailment
  int f1_n[2] = {0, 0};
  for (const auto& [hyp, docs] : by_hypothesis) {
    int correct = 0;
    for (const NLIPair* pair : docs) correct += pair->gold == pair->predicted ? 1 : 0;
    accuracy_sum += static_cast<double>(correct) / static_cast<double>(docs.size());
    ++accuracy_n;

    const NLILabel classes[2] = {NLILabel::Contradiction, NLILabel::Entailment};
    for (int c = 0; c < 2; ++c) {
      long tp = 0, fp = 0, fn = 0;
      for (const NLIPair* pair : docs) {
        bool gold = pair->gold == classes[c];
        bool pred = pair->predicted == classes[c];
        tp += gold && pred ? 1 : 0;
        fp += !gold && pred ? 1 : 0;
        fn += gold && !pred ? 1 : 0;
      }
      if (tp + fp + fn == 0) continue;  // class absent for this hypothesis
      f1_sum[c] += 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
      f1_n[c] += 1;
    }
  }
  NLIScores out;
  out.accuracy = accuracy_n > 0 ? accuracy_sum / accuracy_n : 0.0;
  out.f1_contradiction = f1_n[0] > 0 ? f1_sum[0] / f1_n[0] : 0.0;
  out.f1_entailment = f1_n[1] > 0 ? f1_sum[1] / f1_n[1] : 0.0;
  return out;
}

SpansRead spans_read(const std::vector<RankedSpan>& spans, const std::vector<int>& gold) {
  if (gold.empty()) throw NoGoldError("spans_read needs at least one gold span");
  std::vector<RankedSpan> sorted = spans;
  sort_ranking(sorted);
  std::set<int> gold_set(gold.begin(), gold.end());
  SpansRead out{0, 0};
  std::size_t found = 0;
  for (std::size_t rank = 0; rank < sorted.size(); ++rank) {
    if (gold_set.count(sorted[rank].span_id) == 0) continue;
    ++found;
    if (found == 1) out.until_one = static_cast<double>(rank + 1);
    if (found == gold_set.size()) {
      out.until_all = static_cast<double>(rank + 1);
      return out;
    }
  }
  throw NoGoldError("gold span missing from the ranked list");
}

namespace {

nlohmann::json number_or_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

std::string cell(double v) {
  if (std::isnan(v)) return "---";
  std::ostringstream s;
  s << std::fixed << std::setprecision(3) << v;
  return s.str();
}

}  // namespace

std::string EvalReport::to_json() const {
  nlohmann::json j = {{"map", number_or_null(map)},
                      {"map_pooled", number_or_null(map_pooled)},
                      {"p_at_r80", number_or_null(p_at_r80)},
                      {"nli_accuracy", number_or_null(nli_accuracy)},
                      {"f1_contradiction", number_or_null(f1_contradiction)},
                      {"f1_entailment", number_or_null(f1_entailment)},
                      {"spans_read_one", number_or_null(spans_read_one)},
                      {"spans_read_all", number_or_null(spans_read_all)}};
  nlohmann::json per_hyp = nlohmann::json::object();
  for (const auto& [hyp, report] : per_hypothesis) {
    per_hyp[std::to_string(hyp)] = {{"ap", number_or_null(report.ap)},
                                    {"accuracy", number_or_null(report.accuracy)},
                                    {"f1_contradiction", number_or_null(report.f1_contradiction)},
                                    {"f1_entailment", number_or_null(report.f1_entailment)}};
  }
  j["per_hypothesis"] = std::move(per_hyp);
  return j.dump(2) + "\n";
}

std::string EvalReport::to_table(const std::string& system_name) const {
  std::ostringstream out;
  out << std::left << std::setw(24) << "System" << std::right << std::setw(8) << "mAP"
      << std::setw(8) << "P@R80" << std::setw(8) << "Acc." << std::setw(8) << "F1(C)"
      << std::setw(8) << "F1(E)" << "\n";
  out << std::left << std::setw(24) << system_name << std::right << std::setw(8) << cell(map)
      << std::setw(8) << cell(p_at_r80) << std::setw(8) << cell(nli_accuracy) << std::setw(8)
      << cell(f1_contradiction) << std::setw(8) << cell(f1_entailment) << "\n";
  return out.str();
}

EvalReport evaluate(const std::vector<DocumentPrediction>& predictions, const Corpus& gold) {
  std::vector<EvidencePair> evidence_pairs;
  std::vector<NLIPair> nli_pairs;
  std::vector<std::pair<double, bool>> pooled;
  double read_one_sum = 0, read_all_sum = 0;
  int read_n = 0;

  for (const DocumentPrediction& pred : predictions) {
    const Document* doc = gold.find_document(pred.doc_id);
    if (doc == nullptr) {
      throw ValidationError("prediction for unknown document \"" + pred.doc_id + "\"");
    }
    auto ann_it = doc->annotations.find(pred.hypothesis_id);
    if (ann_it == doc->annotations.end()) {
      throw ValidationError("prediction for unknown hypothesis " +
                            std::to_string(pred.hypothesis_id) + " of document \"" +
                            pred.doc_id + "\"");
    }
    const Annotation& ann = ann_it->second;

    if (pred.has_nli) {
      nli_pairs.push_back({pred.hypothesis_id, ann.label, pred.nli_label});
    }
    if (!pred.span_probs.empty()) {
      if (pred.span_probs.size() != doc->spans.size()) {
        throw ValidationError("prediction for document \"" + pred.doc_id +
                              "\" scores " + std::to_string(pred.span_probs.size()) +
                              " spans but the document has " +
                              std::to_string(doc->spans.size()));
      }
      if (ann.label != NLILabel::NotMentioned) {
        EvidencePair pair;
        pair.hypothesis_id = pred.hypothesis_id;
        pair.gold = ann.evidence;
        std::set<int> gold_set(ann.evidence.begin(), ann.evidence.end());
        for (const auto& [span_id, score] : pred.span_probs) {
          pair.spans.push_back({span_id, score});
          pooled.push_back({score, gold_set.count(span_id) > 0});
        }
        SpansRead read = spans_read(pair.spans, pair.gold);
        read_one_sum += read.until_one;
        read_all_sum += read.until_all;
        ++read_n;
        evidence_pairs.push_back(std::move(pair));
      }
    }
  }

  EvalReport report;
  if (!evidence_pairs.empty()) {
    report.map = mean_ap(evidence_pairs, MapScheme::PerLabelMacro);
    report.map_pooled = mean_ap(evidence_pairs, MapScheme::Pooled);
    report.p_at_r80 = precision_at_recall(pooled, 0.8);
    report.spans_read_one = read_one_sum / read_n;
    report.spans_read_all = read_all_sum / read_n;

    std::map<int, std::pair<double, int>> per_label;
    for (const auto& pair : evidence_pairs) {
      auto& [sum, count] = per_label[pair.hypothesis_id];
      sum += average_precision(pair.spans, pair.gold);
      count += 1;
    }
    for (const auto& [hyp, entry] : per_label) {
      report.per_hypothesis[hyp].ap = entry.first / entry.second;
    }
  }
  if (!nli_pairs.empty()) {
    NLIScores scores = nli_scores(nli_pairs);
    report.nli_accuracy = scores.accuracy;
    report.f1_contradiction = scores.f1_contradiction;
    report.f1_entailment = scores.f1_entailment;

    std::map<int, std::vector<NLIPair>> by_hyp;
    for (const auto& pair : nli_pairs) by_hyp[pair.hypothesis_id].push_back(pair);
    for (const auto& [hyp, pairs] : by_hyp) {
      NLIScores one = nli_scores(pairs);
      report.per_hypothesis[hyp].accuracy = one.accuracy;
      report.per_hypothesis[hyp].f1_contradiction = one.f1_contradiction;
      report.per_hypothesis[hyp].f1_entailment = one.f1_entailment;
    }
  }
  return report;
}

}  // namespace docnli
