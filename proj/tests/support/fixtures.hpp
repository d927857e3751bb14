#pragma once

// Shared synthetic fixtures for the test suites. Everything here is seeded and
// deterministic so failures reproduce.

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "docnli/context.hpp"
#include "docnli/corpus.hpp"
#include "docnli/segmentation.hpp"

namespace docnli::testing {

// A structurally valid random corpus: random formats, span layouts and
// annotations. Text content is filler; only structure matters to callers.
inline Corpus make_random_corpus(int num_docs, int num_hypotheses, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Corpus corpus;
  for (int h = 1; h <= num_hypotheses; ++h) {
    corpus.hypotheses.push_back({h, "hyp " + std::to_string(h),
                                 "hypothesis text number " + std::to_string(h)});
  }
  std::uniform_int_distribution<int> format_dist(0, 2);
  std::uniform_int_distribution<int> span_count_dist(1, 12);
  std::uniform_int_distribution<int> span_len_dist(3, 30);
  std::uniform_int_distribution<int> label_dist(0, 2);
  for (int d = 0; d < num_docs; ++d) {
    Document doc;
    doc.doc_id = "doc-" + std::to_string(d);
    doc.format = static_cast<DocFormat>(format_dist(rng));
    int num_spans = span_count_dist(rng);
    std::string text;
    for (int s = 0; s < num_spans; ++s) {
      if (s > 0) text += ' ';
      std::size_t start = text.size();
      int len = span_len_dist(rng);
      for (int k = 0; k < len; ++k) text += static_cast<char>('a' + (k + s) % 26);
      doc.spans.push_back({s, start, text.size()});
    }
    doc.text = text;
    for (int h = 1; h <= num_hypotheses; ++h) {
      Annotation ann;
      ann.hypothesis_id = h;
      switch (label_dist(rng)) {
        case 0: ann.label = NLILabel::Entailment; break;
        case 1: ann.label = NLILabel::Contradiction; break;
        default: ann.label = NLILabel::NotMentioned; break;
      }
      if (ann.label != NLILabel::NotMentioned) {
        std::uniform_int_distribution<int> span_dist(0, num_spans - 1);
        int a = span_dist(rng);
        int b = span_dist(rng);
        ann.evidence.push_back(std::min(a, b));
        if (a != b) ann.evidence.push_back(std::max(a, b));
      }
      doc.annotations.emplace(h, std::move(ann));
    }
    corpus.documents.push_back(std::move(doc));
  }
  return corpus;
}

// Smallest valid corpus: one document, one hypothesis, NotMentioned.
inline std::string minimal_corpus_json() {
  return R"({"documents":[{"annotations":{"1":{"evidence":[],"label":"not_mentioned"}},)"
         R"("doc_id":"d1","format":"plain","spans":[[0,5]],"text":"hello"}],)"
         R"("hypotheses":[{"id":1,"text":"something is stated","title":"t"}]})";
}

// A tokenized document assembled directly from per-span token counts; token
// ids start beyond the reserved range so they never collide with specials.
inline docnli::TokenizedDocument make_tokenized(const std::vector<int>& span_token_counts,
                                                const std::string& doc_id = "synthetic") {
  docnli::TokenizedDocument doc;
  doc.doc_id = doc_id;
  int cursor = 0;
  for (std::size_t s = 0; s < span_token_counts.size(); ++s) {
    doc.span_boundaries.push_back(cursor);
    doc.span_ids.push_back(static_cast<int>(s));
    for (int t = 0; t < span_token_counts[s]; ++t) {
      docnli::Token token;
      token.surface = "w" + std::to_string(cursor);
      token.char_start = static_cast<std::size_t>(cursor) * 2;
      token.char_end = token.char_start + 1;
      token.id = 100 + (cursor % 50);
      doc.tokens.push_back(std::move(token));
      doc.span_of_token.push_back(static_cast<int>(s));
      ++cursor;
    }
  }
  doc.span_boundaries.push_back(cursor);
  return doc;
}

// Brute-force coverage oracle: every span fully inside at least one context.
inline bool covers_all_spans(const docnli::TokenizedDocument& doc,
                             const std::vector<docnli::Context>& contexts) {
  for (int s = 0; s < doc.num_spans(); ++s) {
    bool covered = false;
    for (const auto& ctx : contexts) {
      if (doc.span_boundaries[s] >= ctx.token_start &&
          doc.span_boundaries[s + 1] <= ctx.token_end) {
        covered = true;
        break;
      }
    }
    if (!covered) return false;
  }
  return true;
}

// Independent check of the surrounding-token rule, derived from the stated
// contract rather than the implementation: every context after the first must
// open max(0, B[s] - n) tokens before its first newly covered span s, except
// when that span plus the prefix cannot fit in l, in which case the window is
// pushed right so the span still fits whole.
inline bool surrounding_rule_holds(const docnli::TokenizedDocument& doc,
                                   const std::vector<docnli::Context>& contexts, int l, int n) {
  std::vector<bool> covered(static_cast<std::size_t>(doc.num_spans()), false);
  for (std::size_t c = 0; c < contexts.size(); ++c) {
    const auto& ctx = contexts[c];
    int first_new = -1;
    for (int s : ctx.covered_spans) {
      if (!covered[static_cast<std::size_t>(s)] && first_new == -1) first_new = s;
      covered[static_cast<std::size_t>(s)] = true;
    }
    if (c == 0) {
      if (ctx.token_start != 0) return false;
      continue;
    }
    if (first_new == -1) return false;  // a context must cover something new
    int expected = std::max(0, doc.span_boundaries[first_new] - n);
    if (doc.span_boundaries[first_new + 1] - expected > l) {
      expected = doc.span_boundaries[first_new + 1] - l;
    }
    if (ctx.token_start != expected) return false;
  }
  for (bool c : covered) {
    if (!c) return false;
  }
  return true;
}

// Path to a file inside the repository source tree.
inline std::string source_path(const std::string& relative) {
#ifdef DOCNLI_SOURCE_DIR
  return std::string(DOCNLI_SOURCE_DIR) + "/" + relative;
#else
  return relative;
#endif
}

// Released-dataset files are optional; tests conditioned on them skip quietly.
inline std::string released_dataset_path(const std::string& file) {
  const char* env = std::getenv("DOCNLI_DATASET_DIR");
  std::string dir = env != nullptr ? std::string(env) : source_path("data/contract-nli");
  return dir + "/" + file;
}

inline bool file_exists(const std::string& path) {
  std::ifstream f(path);
  return f.good();
}

}  // namespace docnli::testing
