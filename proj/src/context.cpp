#include "docnli/context.hpp"

#include <algorithm>
#include <unordered_map>

#include "docnli/util.hpp"

namespace docnli {

void SegmentationConfig::validate() const {
  if (min_surrounding_tokens <= 0 || min_surrounding_tokens >= max_context_length) {
    throw ValidationError("segmentation config requires 0 < n < l, got n=" +
                          std::to_string(min_surrounding_tokens) +
                          " l=" + std::to_string(max_context_length));
  }
}

std::vector<Context> segment(const TokenizedDocument& doc, const SegmentationConfig& cfg) {
  cfg.validate();
  const int l = cfg.max_context_length;
  const int n = cfg.min_surrounding_tokens;
  const auto& B = doc.span_boundaries;
  const int num_spans = doc.num_spans();

  for (int s = 0; s < num_spans; ++s) {
    int count = doc.span_token_count(s);
    if (count > l) {
      throw SpanTooLongError("span " + std::to_string(doc.span_ids[static_cast<std::size_t>(s)]) +
                             " has " + std::to_string(count) +
                             " tokens, exceeding the context window of " + std::to_string(l));
    }
  }

  std::vector<Context> contexts;
  int first_uncovered = 0;
  while (first_uncovered < num_spans) {
    int start;
    if (contexts.empty()) {
      start = 0;
    } else {
      start = std::max(0, B[static_cast<std::size_t>(first_uncovered)] - n);
      if (B[static_cast<std::size_t>(first_uncovered) + 1] - start > l) {
        // span plus n-token prefix does not fit; keep the span intact and give
        // it as much leading context as the window allows
        start = B[static_cast<std::size_t>(first_uncovered) + 1] - l;
      }
    }
    int end_boundary = first_uncovered + 1;
    while (end_boundary + 1 <= num_spans && B[static_cast<std::size_t>(end_boundary) + 1] - start <= l) {
      ++end_boundary;
    }
    int end = B[static_cast<std::size_t>(end_boundary)];

    Context ctx;
    ctx.context_id = static_cast<int>(contexts.size());
    ctx.doc_id = doc.doc_id;
    ctx.token_start = start;
    ctx.token_end = end;
    for (int s = 0; s < end_boundary; ++s) {
      if (B[static_cast<std::size_t>(s)] >= start) ctx.covered_spans.push_back(s);
    }
    contexts.push_back(std::move(ctx));
    first_uncovered = end_boundary;
  }
  return contexts;
}

void ModelInput::pad_to(int target_length) {
  while (length() < target_length) {
    token_ids.push_back(Vocabulary::kPad);
    attention_mask.push_back(0);
    segment_ids.push_back(1);
  }
}

ModelInput assemble(const Context& ctx, const TokenizedDocument& doc, const Hypothesis& hyp,
                    const Vocabulary& vocab, HypothesisMode mode) {
  std::vector<int> hyp_ids;
  if (mode == HypothesisMode::Symbol) {
    hyp_ids.push_back(vocab.hypothesis_symbol_id(hyp.id));
  } else {
    for (const Token& t : tokenize(hyp.text, vocab)) hyp_ids.push_back(t.id);
    if (hyp_ids.empty()) {
      throw ValidationError("hypothesis " + std::to_string(hyp.id) + " tokenizes to nothing");
    }
  }

  // first token index -> order among covered spans
  std::unordered_map<int, int> marker_at;
  for (std::size_t i = 0; i < ctx.covered_spans.size(); ++i) {
    marker_at[doc.span_boundaries[static_cast<std::size_t>(ctx.covered_spans[i])]] =
        static_cast<int>(i);
  }

  ModelInput input;
  input.token_ids.push_back(Vocabulary::kCls);
  for (int id : hyp_ids) input.token_ids.push_back(id);
  input.token_ids.push_back(Vocabulary::kSep);
  const int hypothesis_side = input.length();

  input.span_positions.assign(ctx.covered_spans.size(), -1);
  for (int t = ctx.token_start; t < ctx.token_end; ++t) {
    auto it = marker_at.find(t);
    if (it != marker_at.end()) {
      input.span_positions[static_cast<std::size_t>(it->second)] = input.length();
      input.token_ids.push_back(Vocabulary::kSpan);
    }
    input.token_ids.push_back(doc.tokens[static_cast<std::size_t>(t)].id);
  }
  input.token_ids.push_back(Vocabulary::kSep);

  if (input.length() > kMaxSequenceLength) {
    throw LengthOverflow("assembled input of " + std::to_string(input.length()) +
                             " tokens exceeds the sequence budget of " +
                             std::to_string(kMaxSequenceLength),
                         input.length() - kMaxSequenceLength);
  }
  input.attention_mask.assign(static_cast<std::size_t>(input.length()), 1);
  input.segment_ids.assign(static_cast<std::size_t>(input.length()), 1);
  for (int i = 0; i < hypothesis_side; ++i) input.segment_ids[static_cast<std::size_t>(i)] = 0;
  input.cls_position = 0;
  return input;
}

Context align_teacher(Context ctx, const Annotation& ann, const TokenizedDocument& doc) {
  TeacherSignal teacher;
  teacher.span_labels.assign(ctx.covered_spans.size(), 0);
  for (std::size_t i = 0; i < ctx.covered_spans.size(); ++i) {
    int corpus_span = doc.span_ids[static_cast<std::size_t>(ctx.covered_spans[i])];
    bool is_evidence =
        std::binary_search(ann.evidence.begin(), ann.evidence.end(), corpus_span);
    if (is_evidence) {
      teacher.span_labels[i] = 1;
      teacher.has_evidence = true;
    }
  }
  teacher.nli_one_hot = {0.0, 0.0, 0.0};
  switch (ann.label) {
    case NLILabel::Entailment: teacher.nli_one_hot[0] = 1.0; break;
    case NLILabel::Contradiction: teacher.nli_one_hot[1] = 1.0; break;
    case NLILabel::NotMentioned: teacher.nli_one_hot[2] = 1.0; break;
  }
  teacher.aligned = true;
  ctx.teacher = std::move(teacher);
  return ctx;
}

std::vector<AssembledContext> build_contexts(const TokenizedDocument& doc,
                                             const Hypothesis& hyp, const Vocabulary& vocab,
                                             const SegmentationConfig& cfg,
                                             HypothesisMode mode) {
  int hyp_len = 1;
  if (mode == HypothesisMode::Text) {
    hyp_len = static_cast<int>(tokenize(hyp.text, vocab).size());
    if (hyp_len == 0) {
      throw ValidationError("hypothesis " + std::to_string(hyp.id) + " tokenizes to nothing");
    }
  }
  const int budget = kMaxSequenceLength - hyp_len - 3;
  SegmentationConfig effective = cfg;
  effective.max_context_length = std::min(cfg.max_context_length, budget);

  for (;;) {
    effective.validate();
    std::vector<Context> contexts = segment(doc, effective);
    std::vector<AssembledContext> assembled;
    assembled.reserve(contexts.size());
    int worst_overflow = 0;
    for (Context& ctx : contexts) {
      try {
        ModelInput input = assemble(ctx, doc, hyp, vocab, mode);
        assembled.push_back({std::move(ctx), std::move(input)});
      } catch (const LengthOverflow& e) {
        worst_overflow = std::max(worst_overflow, e.overflow);
      }
    }
    if (worst_overflow == 0) return assembled;
    // Shrinking the window also removes that window's markers, so each token
    // dropped recovers up to two sequence positions.
    int shrink = (worst_overflow + 1) / 2;
    log_debug("re-segmenting " + doc.doc_id + " with window " +
              std::to_string(effective.max_context_length - shrink));
    effective.max_context_length -= shrink;
  }
}

}  // namespace docnli
