#include "docnli/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "docnli/util.hpp"

namespace docnli {

using nlohmann::json;

const char* to_string(NLILabel label) {
  switch (label) {
    case NLILabel::Entailment: return "entailment";
    case NLILabel::Contradiction: return "contradiction";
    case NLILabel::NotMentioned: return "not_mentioned";
  }
  return "not_mentioned";
}

NLILabel nli_label_from_string(const std::string& s) {
  if (s == "entailment") return NLILabel::Entailment;
  if (s == "contradiction") return NLILabel::Contradiction;
  if (s == "not_mentioned") return NLILabel::NotMentioned;
  throw ParseError("unknown NLI label: \"" + s + "\"");
}

const char* to_string(DocFormat format) {
  switch (format) {
    case DocFormat::Plain: return "plain";
    case DocFormat::Html: return "html";
    case DocFormat::Pdf: return "pdf";
  }
  return "plain";
}

DocFormat doc_format_from_string(const std::string& s) {
  if (s == "plain") return DocFormat::Plain;
  if (s == "html") return DocFormat::Html;
  if (s == "pdf") return DocFormat::Pdf;
  throw ParseError("unknown document format: \"" + s + "\"");
}

const Document* Corpus::find_document(const std::string& doc_id) const {
  for (const auto& doc : documents) {
    if (doc.doc_id == doc_id) return &doc;
  }
  return nullptr;
}

namespace {

[[noreturn]] void fail_validation(const std::string& doc_id, const std::string& field,
                                  const std::string& what) {
  throw ValidationError("document \"" + doc_id + "\", field " + field + ": " + what);
}

}  // namespace

void validate(const Corpus& corpus) {
  std::set<int> hyp_ids;
  for (const auto& hyp : corpus.hypotheses) {
    if (hyp.text.empty()) {
      throw ValidationError("hypothesis " + std::to_string(hyp.id) + ": empty text");
    }
    if (!hyp_ids.insert(hyp.id).second) {
      throw ValidationError("hypothesis " + std::to_string(hyp.id) + ": duplicate id");
    }
  }
  for (std::size_t i = 0; i < corpus.hypotheses.size(); ++i) {
    if (corpus.hypotheses[i].id != static_cast<int>(i) + 1) {
      throw ValidationError("hypothesis ids must be contiguous from 1, got " +
                            std::to_string(corpus.hypotheses[i].id) + " at position " +
                            std::to_string(i));
    }
  }

  std::set<std::string> doc_ids;
  for (const auto& doc : corpus.documents) {
    if (doc.doc_id.empty()) {
      throw ValidationError("document with empty doc_id");
    }
    if (!doc_ids.insert(doc.doc_id).second) {
      fail_validation(doc.doc_id, "doc_id", "duplicate doc_id");
    }

    std::size_t prev_end = 0;
    for (std::size_t i = 0; i < doc.spans.size(); ++i) {
      const SpanRecord& span = doc.spans[i];
      if (span.span_id != static_cast<int>(i)) {
        fail_validation(doc.doc_id, "spans", "span_id " + std::to_string(span.span_id) +
                                                 " out of order at position " + std::to_string(i));
      }
      if (span.char_start >= span.char_end) {
        fail_validation(doc.doc_id, "spans",
                        "span " + std::to_string(i) + " has char_start >= char_end");
      }
      if (span.char_end > doc.text.size()) {
        fail_validation(doc.doc_id, "spans",
                        "span " + std::to_string(i) + " exceeds document text length");
      }
      if (i > 0 && span.char_start < prev_end) {
        fail_validation(doc.doc_id, "spans",
                        "span " + std::to_string(i) + " overlaps or reorders its predecessor");
      }
      prev_end = span.char_end;
    }

    if (doc.annotations.size() != corpus.hypotheses.size()) {
      fail_validation(doc.doc_id, "annotations",
                      "expected exactly one annotation per hypothesis (" +
                          std::to_string(corpus.hypotheses.size()) + "), got " +
                          std::to_string(doc.annotations.size()));
    }
    for (const auto& [hyp_id, ann] : doc.annotations) {
      if (hyp_id < 1 || hyp_id > static_cast<int>(corpus.hypotheses.size())) {
        fail_validation(doc.doc_id, "annotations",
                        "annotation references undeclared hypothesis " + std::to_string(hyp_id));
      }
      if (ann.hypothesis_id != hyp_id) {
        fail_validation(doc.doc_id, "annotations",
                        "annotation key/id mismatch for hypothesis " + std::to_string(hyp_id));
      }
      const bool has_evidence = !ann.evidence.empty();
      if (has_evidence == (ann.label == NLILabel::NotMentioned)) {
        fail_validation(doc.doc_id, "annotations",
                        "hypothesis " + std::to_string(hyp_id) +
                            ": evidence must be empty iff label is not_mentioned");
      }
      int prev = -1;
      for (int span_id : ann.evidence) {
        if (span_id < 0 || span_id >= static_cast<int>(doc.spans.size())) {
          fail_validation(doc.doc_id, "annotations",
                          "hypothesis " + std::to_string(hyp_id) + ": evidence span " +
                              std::to_string(span_id) + " out of range");
        }
        if (span_id <= prev) {
          fail_validation(doc.doc_id, "annotations",
                          "hypothesis " + std::to_string(hyp_id) +
                              ": evidence span ids must be sorted and unique");
        }
        prev = span_id;
      }
    }
  }
}

namespace {

Corpus corpus_from_parsed(const json& root) {
  if (!root.is_object()) {
    throw ParseError("corpus file must contain a JSON object");
  }
  Corpus corpus;
  if (!root.contains("hypotheses") || !root.contains("documents")) {
    throw ParseError("corpus object requires \"hypotheses\" and \"documents\"");
  }
  for (const auto& h : root.at("hypotheses")) {
    Hypothesis hyp;
    hyp.id = h.at("id").get<int>();
    hyp.title = h.at("title").get<std::string>();
    hyp.text = h.at("text").get<std::string>();
    corpus.hypotheses.push_back(std::move(hyp));
  }
  for (const auto& d : root.at("documents")) {
    Document doc;
    doc.doc_id = d.at("doc_id").get<std::string>();
    doc.format = doc_format_from_string(d.at("format").get<std::string>());
    doc.text = d.at("text").get<std::string>();
    int span_id = 0;
    for (const auto& s : d.at("spans")) {
      if (!s.is_array() || s.size() != 2) {
        throw ParseError("document \"" + doc.doc_id + "\": span must be a [start,end] pair");
      }
      SpanRecord span;
      span.span_id = span_id++;
      span.char_start = s.at(0).get<std::size_t>();
      span.char_end = s.at(1).get<std::size_t>();
      doc.spans.push_back(span);
    }
    for (const auto& [key, a] : d.at("annotations").items()) {
      Annotation ann;
      try {
        ann.hypothesis_id = std::stoi(key);
      } catch (const std::exception&) {
        throw ParseError("document \"" + doc.doc_id + "\": non-numeric annotation key \"" + key +
                         "\"");
      }
      ann.label = nli_label_from_string(a.at("label").get<std::string>());
      for (const auto& e : a.at("evidence")) {
        ann.evidence.push_back(e.get<int>());
      }
      std::sort(ann.evidence.begin(), ann.evidence.end());
      doc.annotations.emplace(ann.hypothesis_id, std::move(ann));
    }
    corpus.documents.push_back(std::move(doc));
  }
  return corpus;
}

}  // namespace

Corpus corpus_from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed corpus JSON: ") + e.what());
  }
  Corpus corpus;
  try {
    corpus = corpus_from_parsed(root);
  } catch (const json::exception& e) {
    throw ParseError(std::string("corpus JSON missing or mistyped field: ") + e.what());
  }
  validate(corpus);
  return corpus;
}

std::string corpus_to_json(const Corpus& corpus) {
  json root = json::object();
  root["hypotheses"] = json::array();
  for (const auto& hyp : corpus.hypotheses) {
    root["hypotheses"].push_back({{"id", hyp.id}, {"title", hyp.title}, {"text", hyp.text}});
  }
  root["documents"] = json::array();
  for (const auto& doc : corpus.documents) {
    json spans = json::array();
    for (const auto& span : doc.spans) {
      spans.push_back({span.char_start, span.char_end});
    }
    json annotations = json::object();
    for (const auto& [hyp_id, ann] : doc.annotations) {
      annotations[std::to_string(hyp_id)] = {{"label", to_string(ann.label)},
                                             {"evidence", ann.evidence}};
    }
    root["documents"].push_back({{"doc_id", doc.doc_id},
                                 {"format", to_string(doc.format)},
                                 {"text", doc.text},
                                 {"spans", std::move(spans)},
                                 {"annotations", std::move(annotations)}});
  }
  // nlohmann objects keep keys in lexicographic order, which is the canonical
  // ordering for this format. Compact dump + trailing newline.
  return root.dump() + "\n";
}

Corpus load_corpus(const std::string& path) { return corpus_from_json(read_file(path)); }

void save_corpus(const Corpus& corpus, const std::string& path) {
  write_file(path, corpus_to_json(corpus));
}

namespace {

// contract-nli label keys look like "nda-11"; order them by numeric suffix so
// hypothesis ids are stable across files.
long label_key_rank(const std::string& key) {
  std::size_t pos = key.find_last_of('-');
  if (pos != std::string::npos && pos + 1 < key.size()) {
    bool digits = true;
    for (std::size_t i = pos + 1; i < key.size(); ++i) {
      digits = digits && std::isdigit(static_cast<unsigned char>(key[i])) != 0;
    }
    if (digits) return std::stol(key.substr(pos + 1));
  }
  return -1;
}

DocFormat guess_format(const json& d) {
  std::string hint;
  if (d.contains("document_type") && d.at("document_type").is_string()) {
    hint = d.at("document_type").get<std::string>();
  } else if (d.contains("file_name") && d.at("file_name").is_string()) {
    hint = d.at("file_name").get<std::string>();
  }
  std::transform(hint.begin(), hint.end(), hint.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (hint.find("pdf") != std::string::npos) return DocFormat::Pdf;
  if (hint.find("htm") != std::string::npos) return DocFormat::Html;
  return DocFormat::Plain;
}

NLILabel choice_to_label(const std::string& choice) {
  if (choice == "Entailment") return NLILabel::Entailment;
  if (choice == "Contradiction") return NLILabel::Contradiction;
  if (choice == "NotMentioned") return NLILabel::NotMentioned;
  throw ParseError("unknown annotation choice: \"" + choice + "\"");
}

}  // namespace

Corpus import_contract_nli_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed dataset JSON: ") + e.what());
  }
  if (!root.is_object() || !root.contains("documents") || !root.contains("labels")) {
    throw UnsupportedVersionError(
        "not a recognized contract-nli distribution file (expected top-level "
        "\"documents\" and \"labels\")");
  }

  Corpus corpus;
  std::vector<std::string> keys;
  for (const auto& [key, value] : root.at("labels").items()) {
    (void)value;
    keys.push_back(key);
  }
  std::sort(keys.begin(), keys.end(), [](const std::string& a, const std::string& b) {
    long ra = label_key_rank(a), rb = label_key_rank(b);
    if (ra != rb) return ra < rb;
    return a < b;
  });
  std::map<std::string, int> key_to_id;
  try {
    for (std::size_t i = 0; i < keys.size(); ++i) {
      const json& label = root.at("labels").at(keys[i]);
      Hypothesis hyp;
      hyp.id = static_cast<int>(i) + 1;
      hyp.title = label.value("short_description", keys[i]);
      hyp.text = label.at("hypothesis").get<std::string>();
      key_to_id[keys[i]] = hyp.id;
      corpus.hypotheses.push_back(std::move(hyp));
    }

    for (const auto& d : root.at("documents")) {
      Document doc;
      if (d.contains("id")) {
        const auto& id = d.at("id");
        doc.doc_id = id.is_string() ? id.get<std::string>() : std::to_string(id.get<long>());
      } else {
        doc.doc_id = d.at("file_name").get<std::string>();
      }
      doc.text = d.at("text").get<std::string>();
      doc.format = guess_format(d);
      int span_id = 0;
      for (const auto& s : d.at("spans")) {
        SpanRecord span;
        span.span_id = span_id++;
        span.char_start = s.at(0).get<std::size_t>();
        span.char_end = s.at(1).get<std::size_t>();
        doc.spans.push_back(span);
      }
      const auto& sets = d.at("annotation_sets");
      if (!sets.is_array() || sets.empty()) {
        throw ParseError("document \"" + doc.doc_id + "\": empty annotation_sets");
      }
      for (const auto& [key, a] : sets.at(0).at("annotations").items()) {
        auto it = key_to_id.find(key);
        if (it == key_to_id.end()) {
          throw ParseError("document \"" + doc.doc_id + "\": annotation for undeclared label \"" +
                           key + "\"");
        }
        Annotation ann;
        ann.hypothesis_id = it->second;
        ann.label = choice_to_label(a.at("choice").get<std::string>());
        if (a.contains("spans")) {
          for (const auto& e : a.at("spans")) {
            ann.evidence.push_back(e.get<int>());
          }
        }
        std::sort(ann.evidence.begin(), ann.evidence.end());
        ann.evidence.erase(std::unique(ann.evidence.begin(), ann.evidence.end()),
                           ann.evidence.end());
        doc.annotations.emplace(ann.hypothesis_id, std::move(ann));
      }
      corpus.documents.push_back(std::move(doc));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("dataset JSON missing or mistyped field: ") + e.what());
  }
  validate(corpus);
  return corpus;
}

Corpus import_contract_nli(const std::string& path) {
  return import_contract_nli_json(read_file(path));
}

std::array<int, 3> largest_remainder_counts(int n, const SplitRatios& ratios) {
  const double rs[3] = {ratios.train, ratios.dev, ratios.test};
  std::array<int, 3> counts{};
  double fracs[3];
  int assigned = 0;
  for (int i = 0; i < 3; ++i) {
    double quota = n * rs[i];
    counts[i] = static_cast<int>(std::floor(quota));
    fracs[i] = quota - counts[i];
    assigned += counts[i];
  }
  int remaining = n - assigned;
  std::array<int, 3> order = {0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (fracs[a] != fracs[b]) return fracs[a] > fracs[b];
    if (rs[a] != rs[b]) return rs[a] < rs[b];
    return a < b;
  });
  for (int k = 0; k < remaining; ++k) {
    counts[order[k % 3]] += 1;
  }
  return counts;
}

CorpusSplit stratified_split(const Corpus& corpus, const SplitRatios& ratios,
                             std::uint64_t seed) {
  if (corpus.documents.empty()) {
    throw EmptyCorpusError("cannot split an empty corpus");
  }
  if (ratios.train <= 0 || ratios.dev < 0 || ratios.test < 0) {
    throw ValidationError("split ratios must be positive");
  }
  if (std::abs(ratios.train + ratios.dev + ratios.test - 1.0) > 1e-9) {
    throw ValidationError("split ratios must sum to 1");
  }

  CorpusSplit split;
  split.train.hypotheses = corpus.hypotheses;
  split.dev.hypotheses = corpus.hypotheses;
  split.test.hypotheses = corpus.hypotheses;

  // Strata iterated in a fixed order; each stratum gets its own random stream.
  const DocFormat formats[] = {DocFormat::Html, DocFormat::Pdf, DocFormat::Plain};
  std::vector<std::vector<std::size_t>> assigned(3);
  for (DocFormat format : formats) {
    std::vector<std::size_t> indices;
    for (std::size_t i = 0; i < corpus.documents.size(); ++i) {
      if (corpus.documents[i].format == format) indices.push_back(i);
    }
    if (indices.empty()) continue;
    std::mt19937_64 rng(mix64(seed ^ hash_string(to_string(format))));
    std::shuffle(indices.begin(), indices.end(), rng);
    auto counts = largest_remainder_counts(static_cast<int>(indices.size()), ratios);
    std::size_t offset = 0;
    for (int part = 0; part < 3; ++part) {
      for (int k = 0; k < counts[part]; ++k) {
        assigned[part].push_back(indices[offset++]);
      }
    }
  }
  // Document order within each part follows the input corpus.
  Corpus* parts[3] = {&split.train, &split.dev, &split.test};
  for (int part = 0; part < 3; ++part) {
    std::sort(assigned[part].begin(), assigned[part].end());
    for (std::size_t idx : assigned[part]) {
      parts[part]->documents.push_back(corpus.documents[idx]);
    }
  }
  return split;
}

}  // namespace docnli
