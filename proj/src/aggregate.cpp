#include "docnli/aggregate.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "docnli/util.hpp"

namespace docnli {

using nlohmann::json;

std::map<int, double> aggregate_spans(const std::vector<Context>& contexts,
                                      const std::vector<ContextPrediction>& predictions) {
  if (contexts.size() != predictions.size()) {
    throw ShapeMismatchError("context/prediction count mismatch");
  }
  std::map<int, double> sums;
  std::map<int, int> counts;
  for (std::size_t c = 0; c < contexts.size(); ++c) {
    const Context& ctx = contexts[c];
    const ContextPrediction& pred = predictions[c];
    if (pred.span_probs.size() != ctx.covered_spans.size()) {
      throw ShapeMismatchError("marker/prediction mismatch in context " +
                               std::to_string(ctx.context_id));
    }
    for (std::size_t i = 0; i < ctx.covered_spans.size(); ++i) {
      sums[ctx.covered_spans[i]] += pred.span_probs[i];
      counts[ctx.covered_spans[i]] += 1;
    }
  }
  std::map<int, double> means;
  for (const auto& [span, sum] : sums) {
    means[span] = sum / counts[span];
  }
  return means;
}

std::array<double, 3> aggregate_nli(const std::vector<Context>& contexts,
                                    const std::vector<ContextPrediction>& predictions,
                                    NLIAggregation mode) {
  if (contexts.empty() || contexts.size() != predictions.size()) {
    throw ShapeMismatchError("aggregate_nli requires matched, non-empty inputs");
  }
  // contexts with S_m = 0 have no defined weight and are excluded
  std::vector<std::size_t> usable;
  for (std::size_t c = 0; c < contexts.size(); ++c) {
    if (!contexts[c].covered_spans.empty()) usable.push_back(c);
  }
  if (usable.empty()) {
    log_warn("aggregate_nli: no context contains a [SPAN] marker, using the plain mean");
    for (std::size_t c = 0; c < contexts.size(); ++c) usable.push_back(c);
    mode = NLIAggregation::Unweighted;
  }

  std::array<double, 3> out{0, 0, 0};
  if (mode == NLIAggregation::Weighted) {
    double weight_sum = 0;
    for (std::size_t c : usable) {
      const auto& probs = predictions[c].span_probs;
      double w = 0;
      for (double p : probs) w += p;
      w /= static_cast<double>(probs.size());
      weight_sum += w;
      for (std::size_t k = 0; k < 3; ++k) out[k] += w * predictions[c].nli_probs[k];
    }
    if (weight_sum < 1e-12) {
      log_warn("aggregate_nli: vanishing span-probability weights, falling back to unweighted");
      return aggregate_nli(contexts, predictions, NLIAggregation::Unweighted);
    }
    for (std::size_t k = 0; k < 3; ++k) out[k] /= weight_sum;
    return out;
  }
  for (std::size_t c : usable) {
    for (std::size_t k = 0; k < 3; ++k) out[k] += predictions[c].nli_probs[k];
  }
  for (std::size_t k = 0; k < 3; ++k) out[k] /= static_cast<double>(usable.size());
  return out;
}

NLILabel argmax_label(const std::array<double, 3>& probs) {
  if (probs[0] >= probs[1] && probs[0] >= probs[2]) return NLILabel::Entailment;
  if (probs[1] >= probs[2]) return NLILabel::Contradiction;
  return NLILabel::NotMentioned;
}

DocumentPrediction document_prediction(const TokenizedDocument& doc, const Hypothesis& hyp,
                                       const DocumentInference& inference, NLIAggregation mode) {
  DocumentPrediction out;
  out.doc_id = doc.doc_id;
  out.hypothesis_id = hyp.id;
  std::map<int, double> by_tokenized = aggregate_spans(inference.contexts, inference.predictions);
  for (int s = 0; s < doc.num_spans(); ++s) {
    auto it = by_tokenized.find(s);
    if (it == by_tokenized.end()) {
      throw UncoveredSpanError("span " + std::to_string(doc.span_ids[static_cast<std::size_t>(s)]) +
                               " of document " + doc.doc_id + " was covered by no context");
    }
    out.span_probs[doc.span_ids[static_cast<std::size_t>(s)]] = it->second;
  }
  out.nli_probs = aggregate_nli(inference.contexts, inference.predictions, mode);
  out.nli_label = argmax_label(out.nli_probs);
  return out;
}

std::string to_jsonl(const DocumentPrediction& pred) {
  json line = json::object();
  line["doc_id"] = pred.doc_id;
  line["hypothesis_id"] = pred.hypothesis_id;
  if (pred.has_nli) {
    line["nli"] = {pred.nli_probs[0], pred.nli_probs[1], pred.nli_probs[2]};
  } else {
    line["nli"] = nullptr;
  }
  json spans = json::array();
  for (const auto& [span_id, prob] : pred.span_probs) {
    spans.push_back({span_id, prob});
  }
  line["spans"] = std::move(spans);
  return line.dump();
}

DocumentPrediction prediction_from_json(const std::string& text) {
  json line;
  try {
    line = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed prediction line: ") + e.what());
  }
  DocumentPrediction pred;
  try {
    pred.doc_id = line.at("doc_id").get<std::string>();
    pred.hypothesis_id = line.at("hypothesis_id").get<int>();
    const auto& nli = line.at("nli");
    if (nli.is_null()) {
      pred.has_nli = false;
    } else if (nli.is_array() && nli.size() == 3) {
      for (std::size_t k = 0; k < 3; ++k) pred.nli_probs[k] = nli.at(k).get<double>();
    } else {
      throw ParseError("prediction line needs a 3-entry nli array or null");
    }
    for (const auto& entry : line.at("spans")) {
      pred.span_probs[entry.at(0).get<int>()] = entry.at(1).get<double>();
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("prediction line missing or mistyped field: ") + e.what());
  }
  pred.nli_label = argmax_label(pred.nli_probs);
  return pred;
}

void save_predictions(const std::vector<DocumentPrediction>& preds, const std::string& path) {
  std::ostringstream out;
  for (const auto& pred : preds) out << to_jsonl(pred) << "\n";
  write_file(path, out.str());
}

std::vector<DocumentPrediction> load_predictions(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<DocumentPrediction> preds;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    try {
      preds.push_back(prediction_from_json(line));
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(line_number) + " of " + path + ": " + e.what());
    }
  }
  return preds;
}

}  // namespace docnli
