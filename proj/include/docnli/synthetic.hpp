#pragma once

#include <cstdint>

#include "docnli/corpus.hpp"

namespace docnli {

// Deterministic synthetic contracts with planted lexical rules: every
// (document, hypothesis) pair is entailed or contradicted by one or two
// trigger spans whose keywords identify both the hypothesis and the label.
// Labels stay in {entailment, contradiction} so every pair carries evidence
// and context-level NLI supervision.
struct SyntheticConfig {
  int num_documents = 20;
  int spans_per_document = 8;
  std::uint64_t seed = 7;
};

Corpus make_synthetic_corpus(const SyntheticConfig& config = {});

}  // namespace docnli
