#pragma once

#include <array>
#include <string>
#include <vector>

#include "docnli/corpus.hpp"
#include "docnli/errors.hpp"
#include "docnli/segmentation.hpp"

namespace docnli {

// Model sequence budget: [CLS] hypothesis [SEP] contract-window [SEP].
inline constexpr int kMaxSequenceLength = 512;

struct SegmentationConfig {
  int max_context_length = 512;    // l: contract-window token budget
  int min_surrounding_tokens = 64; // n

  void validate() const;
};

struct TeacherSignal {
  std::vector<int> span_labels;               // s_i aligned with covered_spans
  std::array<double, 3> nli_one_hot{0, 0, 0}; // (y_E, y_C, y_N)
  bool has_evidence = false;
  bool aligned = false;
};

struct Context {
  int context_id = 0;
  std::string doc_id;
  int token_start = 0;
  int token_end = 0;               // exclusive, document-token indices
  std::vector<int> covered_spans;  // tokenized span indices fully inside the range
  TeacherSignal teacher;
};

// Greedy dynamic segmentation. Every span lands fully inside at least one
// context; after the first context each window opens n tokens before the first
// span not yet covered (clamped at the document start, or pushed right just
// enough for that span to fit when span+n exceeds l).
std::vector<Context> segment(const TokenizedDocument& doc, const SegmentationConfig& cfg);

enum class HypothesisMode { Text, Symbol };

struct ModelInput {
  std::vector<int> token_ids;
  std::vector<int> attention_mask;  // 1 = real token (no padding by default)
  std::vector<int> segment_ids;     // 0 = hypothesis side, 1 = contract side
  std::vector<int> span_positions;  // positions of [SPAN] markers, covered order
  int cls_position = 0;

  int length() const { return static_cast<int>(token_ids.size()); }
  // Append [PAD] up to target_length; forward() must be invariant to this.
  void pad_to(int target_length);
};

struct LengthOverflow : LengthOverflowError {
  int overflow;
  LengthOverflow(const std::string& what, int amount)
      : LengthOverflowError(what), overflow(amount) {}
};

// Layout: [CLS] hypothesis [SEP] window-with-[SPAN]-markers [SEP]. In symbol
// mode the hypothesis surface is replaced by its reserved symbol token.
ModelInput assemble(const Context& ctx, const TokenizedDocument& doc, const Hypothesis& hyp,
                    const Vocabulary& vocab, HypothesisMode mode);

// Fill in teacher labels from an annotation of the same document.
Context align_teacher(Context ctx, const Annotation& ann, const TokenizedDocument& doc);

struct AssembledContext {
  Context context;
  ModelInput input;
};

// Per-hypothesis pipeline: derives the effective window from the sequence
// budget, segments, assembles, and re-segments with a smaller window if marker
// insertion overflows the sequence budget.
std::vector<AssembledContext> build_contexts(const TokenizedDocument& doc,
                                             const Hypothesis& hyp, const Vocabulary& vocab,
                                             const SegmentationConfig& cfg,
                                             HypothesisMode mode);

}  // namespace docnli
