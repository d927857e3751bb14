#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "docnli/errors.hpp"

namespace docnli {

enum class NLILabel { Entailment, Contradiction, NotMentioned };

const char* to_string(NLILabel label);
NLILabel nli_label_from_string(const std::string& s);

enum class DocFormat { Plain, Html, Pdf };

const char* to_string(DocFormat format);
DocFormat doc_format_from_string(const std::string& s);

struct Hypothesis {
  int id = 0;  // 1-based, contiguous across the corpus
  std::string title;
  std::string text;

  bool operator==(const Hypothesis&) const = default;
};

struct SpanRecord {
  int span_id = 0;  // 0-based index into Document::spans
  std::size_t char_start = 0;
  std::size_t char_end = 0;  // exclusive

  bool operator==(const SpanRecord&) const = default;
};

struct Annotation {
  int hypothesis_id = 0;
  NLILabel label = NLILabel::NotMentioned;
  std::vector<int> evidence;  // sorted span ids; empty iff NotMentioned

  bool operator==(const Annotation&) const = default;
};

struct Document {
  std::string doc_id;
  std::string text;
  DocFormat format = DocFormat::Plain;
  std::vector<SpanRecord> spans;          // ordered by char_start, non-overlapping
  std::map<int, Annotation> annotations;  // hypothesis_id -> annotation

  bool operator==(const Document&) const = default;
};

struct Corpus {
  std::vector<Hypothesis> hypotheses;
  std::vector<Document> documents;

  const Document* find_document(const std::string& doc_id) const;

  bool operator==(const Corpus&) const = default;
};

// Throws ValidationError naming the offending document and field.
void validate(const Corpus& corpus);

Corpus corpus_from_json(const std::string& text);
std::string corpus_to_json(const Corpus& corpus);  // canonical bytes

Corpus load_corpus(const std::string& path);
void save_corpus(const Corpus& corpus, const std::string& path);

// Adapter for the released contract-nli distribution files. Best effort and
// isolated: it maps the published schema onto the canonical one and validates
// the result, so drift in the release cannot leak past this function.
Corpus import_contract_nli(const std::string& path);
Corpus import_contract_nli_json(const std::string& text);

struct SplitRatios {
  double train = 0.7;
  double dev = 0.1;
  double test = 0.2;
};

struct CorpusSplit {
  Corpus train;
  Corpus dev;
  Corpus test;
};

// Largest-remainder apportionment of n into three parts. Remainder ties go to
// the split with the smaller ratio, then by split index.
std::array<int, 3> largest_remainder_counts(int n, const SplitRatios& ratios);

// Stratified by document format; deterministic given seed; exact partition.
CorpusSplit stratified_split(const Corpus& corpus, const SplitRatios& ratios,
                             std::uint64_t seed);

}  // namespace docnli
