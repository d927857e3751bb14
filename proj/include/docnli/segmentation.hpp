#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "docnli/corpus.hpp"
#include "docnli/errors.hpp"

namespace docnli {

// A word-level token prior to subword segmentation: a maximal run of
// alphanumeric bytes (bytes >= 0x80 count as letters) or a single punctuation
// byte. Lowercased surface, offsets into the original text.
struct Word {
  std::string surface;
  std::size_t char_start = 0;
  std::size_t char_end = 0;
  bool is_punctuation = false;
};

std::vector<Word> split_words(std::string_view text, std::size_t base_offset = 0);

// Blank-line paragraph splitter for raw text; returns paragraph start offsets.
std::vector<std::size_t> split_paragraphs(const std::string& text);

// Sentence + inline-list-item splitter. Every non-whitespace character of the
// text ends up inside exactly one span; spans are trimmed, ordered and
// non-overlapping.
std::vector<SpanRecord> split_spans(const std::string& text,
                                    const std::vector<std::size_t>& paragraph_boundaries);

struct Token {
  std::string surface;  // subword piece; continuations carry the ## prefix
  std::size_t char_start = 0;
  std::size_t char_end = 0;
  int id = 0;  // vocabulary id

  bool operator==(const Token&) const = default;
};

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kSpan = 4;
  static constexpr int kNumFixedReserved = 5;

  Vocabulary() = default;
  explicit Vocabulary(int num_hypotheses);

  int num_hypotheses() const { return num_hypotheses_; }
  int num_reserved() const { return kNumFixedReserved + num_hypotheses_; }
  int size() const { return static_cast<int>(pieces_.size()); }

  // Reserved symbol token for hypothesis ids 1..H.
  int hypothesis_symbol_id(int hypothesis_id) const;

  int add_piece(const std::string& piece);
  int id_of(std::string_view piece) const;  // -1 when absent
  const std::string& piece(int id) const { return pieces_.at(static_cast<std::size_t>(id)); }
  std::size_t max_piece_length() const { return max_piece_length_; }

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  int num_hypotheses_ = 0;
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, int> ids_;
  std::size_t max_piece_length_ = 0;
};

// Greedy longest-match subword tokenization of free text: lowercase, isolate
// punctuation, then match against the vocabulary. Unknown pieces become one
// [UNK] token per character with true offsets.
std::vector<Token> tokenize(std::string_view text, const Vocabulary& vocab,
                            std::size_t base_offset = 0);

struct TokenizedDocument {
  std::string doc_id;
  std::vector<Token> tokens;
  // B: first token index of each (non-empty) span plus a terminal entry equal
  // to the token count. Strictly increasing.
  std::vector<int> span_boundaries;
  // Tokenized span index -> corpus span_id. Empty corpus spans are merged into
  // a neighbor and do not appear here.
  std::vector<int> span_ids;
  std::vector<int> span_of_token;  // token index -> tokenized span index

  int num_spans() const { return static_cast<int>(span_ids.size()); }
  int span_token_count(int span) const {
    return span_boundaries[span + 1] - span_boundaries[span];
  }
};

// Assign pre-tokenized tokens to spans and build the boundary index. Zero-token
// spans are merged into their predecessor (the first span merges forward) with
// a warning; a document whose spans hold no tokens at all is an error.
TokenizedDocument index_spans(const std::vector<Token>& tokens,
                              const std::vector<SpanRecord>& spans);

// Tokenize a document span by span, so no subword straddles a span boundary.
TokenizedDocument tokenize_document(const Document& doc, const Vocabulary& vocab);

struct VocabularyBuildConfig {
  int target_size = 8192;    // total size including reserved ids
  int min_pair_frequency = 2;
};

// Pair-merge vocabulary learning over the corpus text (span slices), seeded
// with every observed character. Deterministic: ties broken lexicographically.
Vocabulary build_vocabulary(const Corpus& corpus, const VocabularyBuildConfig& config);

}  // namespace docnli
