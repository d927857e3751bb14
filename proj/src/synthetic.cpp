#include "docnli/synthetic.hpp"

#include <algorithm>
#include <random>
#include <vector>

#include "docnli/util.hpp"

namespace docnli {

namespace {

struct Rule {
  const char* title;
  const char* hypothesis;
  const char* entailed;
  const char* contradicted;
};

constexpr Rule kRules[] = {
    {"secrecy", "the receiving party shall keep disclosed information secret",
     "the receiving party shall keep all disclosed information strictly secret and "
     "confidential forever .",
     "the receiving party may publicize broadcast and advertise disclosed information "
     "openly everywhere ."},
    {"return of materials",
     "the receiving party shall return borrowed material at termination",
     "the receiving party shall return surrender and restore every borrowed material "
     "upon termination .",
     "the receiving party may retain hold and store every borrowed material beyond "
     "termination ."},
    {"sharing with employees",
     "the receiving party may share received knowledge with employees",
     "the receiving party may share circulate and distribute received knowledge with "
     "its employees .",
     "the receiving party must withhold conceal and guard received knowledge from all "
     "employees ."},
};

constexpr const char* kFillers[] = {
    "the parties agree to the terms stated herein without reservation .",
    "this agreement is governed by the laws of the chosen state .",
    "any dispute arising hereunder shall be resolved by binding arbitration .",
    "notices must be delivered in writing to the registered addresses .",
    "headings in this document are for convenience of reference only .",
    "no waiver of any provision constitutes a continuing waiver thereof .",
    "each party bears its own costs incurred in preparing this agreement .",
    "if any provision proves invalid the remainder continues in force .",
};

constexpr const char* kNumbers[] = {"one", "two",   "three", "four", "five",
                                    "six", "seven", "eight", "nine", "ten"};

}  // namespace

Corpus make_synthetic_corpus(const SyntheticConfig& config) {
  const int num_rules = static_cast<int>(std::size(kRules));
  if (config.spans_per_document < 2 * num_rules) {
    throw ValidationError("synthetic documents need at least " +
                          std::to_string(2 * num_rules) + " spans");
  }
  std::mt19937_64 rng(mix64(config.seed));

  Corpus corpus;
  for (int h = 0; h < num_rules; ++h) {
    corpus.hypotheses.push_back({h + 1, kRules[h].title, kRules[h].hypothesis});
  }

  for (int d = 0; d < config.num_documents; ++d) {
    Document doc;
    doc.doc_id = "synth-" + std::to_string(d + 1);
    doc.format = d % 3 == 0 ? DocFormat::Plain : (d % 3 == 1 ? DocFormat::Html : DocFormat::Pdf);

    // slot permutation: the first two slots per rule are reserved for it
    std::vector<int> slots(static_cast<std::size_t>(config.spans_per_document));
    for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = static_cast<int>(i);
    std::shuffle(slots.begin(), slots.end(), rng);

    std::vector<std::string> span_texts(slots.size());
    for (std::size_t i = 0; i < slots.size(); ++i) {
      // filler content is a function of the slot rank, so documents of the
      // same labelling differ only in where their triggers landed
      span_texts[static_cast<std::size_t>(slots[i])] =
          std::string("clause ") + kNumbers[i % std::size(kNumbers)] + " : " +
          kFillers[i % std::size(kFillers)];
    }

    for (int h = 0; h < num_rules; ++h) {
      bool entailed = rng() % 2 == 0;
      int evidence_count = rng() % 3 == 0 ? 2 : 1;
      Annotation ann;
      ann.hypothesis_id = h + 1;
      ann.label = entailed ? NLILabel::Entailment : NLILabel::Contradiction;
      const char* trigger = entailed ? kRules[h].entailed : kRules[h].contradicted;
      for (int k = 0; k < evidence_count; ++k) {
        int slot = slots[static_cast<std::size_t>(2 * h + k)];
        span_texts[static_cast<std::size_t>(slot)] = trigger;
        ann.evidence.push_back(slot);
      }
      std::sort(ann.evidence.begin(), ann.evidence.end());
      doc.annotations.emplace(ann.hypothesis_id, std::move(ann));
    }

    for (std::size_t s = 0; s < span_texts.size(); ++s) {
      if (s > 0) doc.text += ' ';
      std::size_t start = doc.text.size();
      doc.text += span_texts[s];
      doc.spans.push_back({static_cast<int>(s), start, doc.text.size()});
    }
    corpus.documents.push_back(std::move(doc));
  }
  validate(corpus);
  return corpus;
}

}  // namespace docnli
