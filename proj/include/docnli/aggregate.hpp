#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "docnli/context.hpp"
#include "docnli/corpus.hpp"
#include "docnli/model.hpp"

namespace docnli {

enum class NLIAggregation { Weighted, Unweighted };

struct DocumentPrediction {
  std::string doc_id;
  int hypothesis_id = 0;
  std::map<int, double> span_probs;          // corpus span_id -> probability; empty
                                             // for NLI-only systems
  bool has_nli = true;                       // false for evidence-only systems
  std::array<double, 3> nli_probs{0, 0, 0};  // (E, C, N)
  NLILabel nli_label = NLILabel::NotMentioned;
};

// Mean span probability over the contexts fully containing each span. Keys are
// tokenized span indices; use document_prediction() for corpus span ids.
std::map<int, double> aggregate_spans(const std::vector<Context>& contexts,
                                      const std::vector<ContextPrediction>& predictions);

// Weighted: each context weighs by its mean span probability; contexts with no
// [SPAN] marker are excluded. Falls back to the unweighted mean with a warning
// when the weights vanish.
std::array<double, 3> aggregate_nli(const std::vector<Context>& contexts,
                                    const std::vector<ContextPrediction>& predictions,
                                    NLIAggregation mode);

NLILabel argmax_label(const std::array<double, 3>& probs);  // ties: E > C > N

DocumentPrediction document_prediction(const TokenizedDocument& doc, const Hypothesis& hyp,
                                       const DocumentInference& inference, NLIAggregation mode);

// Prediction dump lines shared by the model and every baseline:
// {"doc_id":..., "hypothesis_id":..., "nli":[pE,pC,pN], "spans":[[id,prob],...]}
std::string to_jsonl(const DocumentPrediction& pred);
DocumentPrediction prediction_from_json(const std::string& line);

void save_predictions(const std::vector<DocumentPrediction>& preds, const std::string& path);
std::vector<DocumentPrediction> load_predictions(const std::string& path);

}  // namespace docnli
