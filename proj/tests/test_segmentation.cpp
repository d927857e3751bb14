#include <doctest.h>

#include <json.hpp>
#include <random>

#include "docnli/segmentation.hpp"
#include "docnli/util.hpp"
#include "support/fixtures.hpp"

using namespace docnli;
using namespace docnli::testing;

namespace {

std::string strip_whitespace(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(c);
  }
  return out;
}

std::string random_text(std::mt19937_64& rng, int length) {
  static const std::string alphabet =
      "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
      " \n\t.,;:()[]!?\"'-/";
  std::string text;
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  for (int i = 0; i < length; ++i) text.push_back(alphabet[pick(rng)]);
  return text;
}

Vocabulary vocab_from_pieces(const std::vector<std::string>& pieces) {
  Vocabulary vocab(0);
  for (const auto& p : pieces) vocab.add_piece(p);
  return vocab;
}

}  // namespace

TEST_CASE("split_spans golden fixtures") {
  auto fixtures = nlohmann::json::parse(
      read_file(source_path("tests/fixtures/segmentation_golden.json")));
  for (const auto& fixture : fixtures) {
    const std::string text = fixture.at("text").get<std::string>();
    CAPTURE(fixture.at("name").get<std::string>());
    auto spans = split_spans(text, split_paragraphs(text));
    REQUIRE(spans.size() == fixture.at("spans").size());
    for (std::size_t i = 0; i < spans.size(); ++i) {
      CHECK(spans[i].char_start == fixture.at("spans").at(i).at(0).get<std::size_t>());
      CHECK(spans[i].char_end == fixture.at("spans").at(i).at(1).get<std::size_t>());
    }
  }
}

TEST_CASE("split_spans fuzz: sorted, non-overlapping, covers non-whitespace") {
  std::mt19937_64 rng(2024);
  for (int round = 0; round < 200; ++round) {
    std::string text = random_text(rng, 1 + static_cast<int>(rng() % 400));
    auto spans = split_spans(text, split_paragraphs(text));
    std::size_t prev_end = 0;
    std::string covered;
    for (const auto& span : spans) {
      CHECK(span.char_start < span.char_end);
      CHECK(span.char_start >= prev_end);
      CHECK(span.char_end <= text.size());
      prev_end = span.char_end;
      covered += text.substr(span.char_start, span.char_end - span.char_start);
    }
    CHECK(strip_whitespace(covered) == strip_whitespace(text));
  }
}

TEST_CASE("tokenize: empty text yields no tokens") {
  Vocabulary vocab(0);
  CHECK(tokenize("", vocab).empty());
}

TEST_CASE("tokenize: greedy longest match over subword pieces") {
  Vocabulary vocab = vocab_from_pieces({"agree", "##ment", "a", "##g"});
  auto tokens = tokenize("Agreement", vocab);
  REQUIRE(tokens.size() == 2);
  CHECK(tokens[0].surface == "agree");
  CHECK(tokens[1].surface == "##ment");
  CHECK(tokens[0].char_start == 0);
  CHECK(tokens[0].char_end == 5);
  CHECK(tokens[1].char_start == 5);
  CHECK(tokens[1].char_end == 9);
}

TEST_CASE("tokenize: unknown pieces become [UNK] with true offsets") {
  Vocabulary vocab = vocab_from_pieces({"ab"});
  auto tokens = tokenize("abzq", vocab);
  REQUIRE(tokens.size() == 3);
  CHECK(tokens[0].surface == "ab");
  CHECK(tokens[1].id == Vocabulary::kUnk);
  CHECK(tokens[1].char_start == 2);
  CHECK(tokens[1].char_end == 3);
  CHECK(tokens[2].char_start == 3);
}

TEST_CASE("tokenize offset round-trip on random strings") {
  // Offset oracle: concatenating text[start:end) over tokens reproduces the
  // original non-space characters, case-insensitively.
  Corpus corpus = make_random_corpus(20, 1, 5);
  Vocabulary vocab = build_vocabulary(corpus, {512, 2});
  std::mt19937_64 rng(77);
  for (int round = 0; round < 100; ++round) {
    std::string text = random_text(rng, 1 + static_cast<int>(rng() % 200));
    auto tokens = tokenize(text, vocab);
    std::string rebuilt;
    std::size_t prev_end = 0;
    for (const auto& token : tokens) {
      CHECK(token.char_start >= prev_end);
      CHECK(token.char_start < token.char_end);
      prev_end = token.char_end;
      rebuilt += text.substr(token.char_start, token.char_end - token.char_start);
    }
    CHECK(strip_whitespace(rebuilt) == strip_whitespace(text));
  }
}

TEST_CASE("tokenize is deterministic") {
  Corpus corpus = make_random_corpus(10, 1, 9);
  Vocabulary vocab = build_vocabulary(corpus, {256, 2});
  std::string text = "The Receiving Party shall keep the Confidential Information secret.";
  auto a = tokenize(text, vocab);
  auto b = tokenize(text, vocab);
  CHECK(a == b);
}

TEST_CASE("index_spans: boundary index for simple layouts") {
  auto make_tokens = [](const std::vector<std::pair<int, int>>& ranges) {
    std::vector<Token> tokens;
    for (const auto& [s, e] : ranges) {
      tokens.push_back({"t", static_cast<std::size_t>(s), static_cast<std::size_t>(e), 0});
    }
    return tokens;
  };

  SUBCASE("one span, five tokens") {
    auto tokens = make_tokens({{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}});
    std::vector<SpanRecord> spans = {{0, 0, 5}};
    auto doc = index_spans(tokens, spans);
    CHECK(doc.span_boundaries == std::vector<int>{0, 5});
    CHECK(doc.span_ids == std::vector<int>{0});
  }
  SUBCASE("two spans of three and two tokens") {
    auto tokens = make_tokens({{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}});
    std::vector<SpanRecord> spans = {{0, 0, 3}, {1, 3, 5}};
    auto doc = index_spans(tokens, spans);
    CHECK(doc.span_boundaries == std::vector<int>{0, 3, 5});
    CHECK(doc.span_of_token == std::vector<int>{0, 0, 0, 1, 1});
  }
  SUBCASE("zero-token span merges into its predecessor") {
    auto tokens = make_tokens({{0, 1}, {1, 2}, {8, 9}});
    std::vector<SpanRecord> spans = {{0, 0, 2}, {1, 2, 4}, {2, 8, 9}};
    auto doc = index_spans(tokens, spans);
    CHECK(doc.span_ids == std::vector<int>{0, 2});
    CHECK(doc.span_boundaries == std::vector<int>{0, 2, 3});
  }
}

TEST_CASE("index_spans counting oracle on random documents") {
  std::mt19937_64 rng(13);
  for (int round = 0; round < 50; ++round) {
    int num_spans = 1 + static_cast<int>(rng() % 10);
    std::vector<SpanRecord> spans;
    std::vector<Token> tokens;
    std::size_t cursor = 0;
    for (int s = 0; s < num_spans; ++s) {
      std::size_t start = cursor;
      int count = 1 + static_cast<int>(rng() % 8);
      for (int t = 0; t < count; ++t) {
        tokens.push_back({"t", cursor, cursor + 1, 0});
        cursor += 1;
      }
      spans.push_back({s, start, cursor});
      cursor += 1;  // gap
    }
    auto doc = index_spans(tokens, spans);
    int total = 0;
    for (int s = 0; s < doc.num_spans(); ++s) total += doc.span_token_count(s);
    CHECK(total == static_cast<int>(tokens.size()));
    // alignment invariant: B[span_of_token(t)] <= t < B[span_of_token(t)+1]
    for (int t = 0; t < static_cast<int>(doc.tokens.size()); ++t) {
      int s = doc.span_of_token[static_cast<std::size_t>(t)];
      CHECK(doc.span_boundaries[s] <= t);
      CHECK(t < doc.span_boundaries[s + 1]);
    }
  }
}

TEST_CASE("tokenize_document keeps subwords inside span boundaries") {
  Corpus corpus = make_random_corpus(8, 2, 21);
  Vocabulary vocab = build_vocabulary(corpus, {512, 2});
  for (const auto& doc : corpus.documents) {
    auto tokenized = tokenize_document(doc, vocab);
    for (int s = 0; s < tokenized.num_spans(); ++s) {
      const SpanRecord& span = doc.spans[static_cast<std::size_t>(tokenized.span_ids[s])];
      for (int t = tokenized.span_boundaries[s]; t < tokenized.span_boundaries[s + 1]; ++t) {
        CHECK(tokenized.tokens[static_cast<std::size_t>(t)].char_start >= span.char_start);
        CHECK(tokenized.tokens[static_cast<std::size_t>(t)].char_end <= span.char_end);
      }
    }
  }
}

TEST_CASE("vocabulary: reserved ids are stable across save/load") {
  Corpus corpus = make_random_corpus(6, 3, 33);
  Vocabulary vocab = build_vocabulary(corpus, {300, 2});
  CHECK(vocab.id_of("[PAD]") == Vocabulary::kPad);
  CHECK(vocab.id_of("[UNK]") == Vocabulary::kUnk);
  CHECK(vocab.id_of("[CLS]") == Vocabulary::kCls);
  CHECK(vocab.id_of("[SEP]") == Vocabulary::kSep);
  CHECK(vocab.id_of("[SPAN]") == Vocabulary::kSpan);
  CHECK(vocab.hypothesis_symbol_id(1) == 5);
  CHECK(vocab.hypothesis_symbol_id(3) == 7);

  std::string path = "vocab_roundtrip.txt";
  vocab.save(path);
  Vocabulary loaded = Vocabulary::load(path);
  CHECK(loaded.size() == vocab.size());
  CHECK(loaded.num_hypotheses() == 3);
  for (int id = 0; id < vocab.size(); ++id) {
    CHECK(loaded.piece(id) == vocab.piece(id));
  }
}

TEST_CASE("vocabulary build is deterministic and honors the size target") {
  Corpus corpus = make_random_corpus(10, 1, 55);
  Vocabulary a = build_vocabulary(corpus, {200, 2});
  Vocabulary b = build_vocabulary(corpus, {200, 2});
  REQUIRE(a.size() == b.size());
  CHECK(a.size() <= 200);
  for (int id = 0; id < a.size(); ++id) CHECK(a.piece(id) == b.piece(id));
}

TEST_CASE("vocabulary merges shorten tokenizations of frequent words") {
  Corpus corpus;
  corpus.hypotheses.push_back({1, "t", "h"});
  Document doc;
  doc.doc_id = "d";
  std::string text;
  for (int i = 0; i < 12; ++i) {
    if (i > 0) text += ' ';
    std::size_t start = text.size();
    text += "agreement";
    doc.spans.push_back({i, start, text.size()});
  }
  doc.text = text;
  doc.annotations.emplace(1, Annotation{1, NLILabel::NotMentioned, {}});
  corpus.documents.push_back(doc);

  Vocabulary vocab = build_vocabulary(corpus, {64, 2});
  auto tokens = tokenize("agreement", vocab);
  CHECK(tokens.size() < 9);  // fewer pieces than characters
}

TEST_CASE("released dataset: splitter statistics near the published ranges" *
          doctest::skip(!docnli::testing::file_exists(
              docnli::testing::released_dataset_path("train.json")))) {
  // the reference splitter is unpublished; reproduce within +-15%
  docnli::Corpus train = docnli::import_contract_nli(
      docnli::testing::released_dataset_path("train.json"));
  double total_spans = 0;
  std::size_t max_spans = 0;
  for (const auto& doc : train.documents) {
    auto spans = docnli::split_spans(doc.text, docnli::split_paragraphs(doc.text));
    total_spans += static_cast<double>(spans.size());
    max_spans = std::max(max_spans, spans.size());
  }
  double average = total_spans / static_cast<double>(train.documents.size());
  CHECK(average >= 77.8 * 0.85);
  CHECK(average <= 77.8 * 1.15);
  CHECK(max_spans <= 354 * 1.15);
}
