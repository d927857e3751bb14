#include "docnli/segmentation.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include "docnli/util.hpp"

namespace docnli {

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }
bool is_space_byte(unsigned char c) { return std::isspace(c) != 0; }

char lower_ascii(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

}  // namespace

std::vector<Word> split_words(std::string_view text, std::size_t base_offset) {
  std::vector<Word> words;
  std::size_t i = 0;
  while (i < text.size()) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    if (is_space_byte(c)) {
      ++i;
      continue;
    }
    if (is_word_byte(c)) {
      std::size_t start = i;
      while (i < text.size() && is_word_byte(static_cast<unsigned char>(text[i]))) ++i;
      Word word;
      word.char_start = base_offset + start;
      word.char_end = base_offset + i;
      word.surface.reserve(i - start);
      for (std::size_t k = start; k < i; ++k) word.surface.push_back(lower_ascii(text[k]));
      words.push_back(std::move(word));
    } else {
      Word word;
      word.char_start = base_offset + i;
      word.char_end = base_offset + i + 1;
      word.surface.assign(1, text[i]);
      word.is_punctuation = true;
      words.push_back(std::move(word));
      ++i;
    }
  }
  return words;
}

std::vector<std::size_t> split_paragraphs(const std::string& text) {
  std::vector<std::size_t> starts;
  bool in_paragraph = false;
  std::size_t first_content = 0;
  bool line_has_content = false;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == '\n') {
      if (line_has_content && !in_paragraph) {
        starts.push_back(first_content);
        in_paragraph = true;
      }
      if (!line_has_content) in_paragraph = false;
      line_has_content = false;
      continue;
    }
    if (!is_space_byte(static_cast<unsigned char>(text[i])) && !line_has_content) {
      line_has_content = true;
      first_content = i;
    }
  }
  return starts;
}

namespace {

// Abbreviations that end with a period but do not terminate a sentence.
const std::set<std::string>& abbreviation_guards() {
  static const std::set<std::string> guards = {
      "mr",  "mrs", "ms",  "dr",   "prof", "inc",    "ltd", "llc", "corp", "co",
      "no",  "nos", "vs",  "etc",  "e.g",  "i.e",    "viz", "al",  "st",   "jr",
      "sr",  "dept", "fig", "sec",  "art",  "para",  "approx", "cf", "u.s", "u.k"};
  return guards;
}

bool is_roman_lower(std::string_view s) {
  if (s.empty() || s.size() > 5) return false;
  for (char c : s) {
    if (std::string_view("ivxlcdm").find(c) == std::string_view::npos) return false;
  }
  return true;
}

// Length of an inline enumerator at position p, or 0. Recognized forms:
// "(a)", "(iv)", "(3)", "a)", "iv)", "3)", "3." — a span break goes before it.
std::size_t match_enumerator(std::string_view s, std::size_t p) {
  std::size_t i = p;
  bool parenthesized = false;
  if (i < s.size() && s[i] == '(') {
    parenthesized = true;
    ++i;
  }
  std::size_t body_start = i;
  while (i < s.size() && is_word_byte(static_cast<unsigned char>(s[i])) &&
         static_cast<unsigned char>(s[i]) < 0x80) {
    ++i;
  }
  if (i == body_start || i >= s.size()) return 0;
  std::string body(s.substr(body_start, i - body_start));
  for (char& c : body) c = lower_ascii(c);

  bool digits = std::all_of(body.begin(), body.end(),
                            [](unsigned char c) { return std::isdigit(c) != 0; });
  bool single_letter = body.size() == 1 && std::isalpha(static_cast<unsigned char>(body[0]));
  bool roman = is_roman_lower(body);

  char closer = s[i];
  if (closer == ')') {
    if ((digits && body.size() <= 3) || single_letter || roman) return i - p + 1;
    return 0;
  }
  if (closer == '.' && !parenthesized && digits && body.size() <= 3) {
    return i - p + 1;
  }
  return 0;
}

// Token immediately before position p, scanning back over letters and periods.
std::string preceding_token(std::string_view s, std::size_t p) {
  std::size_t end = p;
  std::size_t begin = end;
  while (begin > 0) {
    char c = s[begin - 1];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '.') {
      --begin;
    } else {
      break;
    }
  }
  std::string token(s.substr(begin, end - begin));
  for (char& c : token) c = lower_ascii(c);
  while (!token.empty() && token.front() == '.') token.erase(token.begin());
  return token;
}

bool is_sentence_terminal(std::string_view s, std::size_t i) {
  char c = s[i];
  if (c == '!' || c == '?') return true;
  // '.' needs guards
  if (i > 0 && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i - 1])) &&
      std::isdigit(static_cast<unsigned char>(s[i + 1]))) {
    return false;  // decimal number
  }
  std::string prev = preceding_token(s, i);
  if (!prev.empty()) {
    if (abbreviation_guards().count(prev) > 0) return false;
    if (prev.size() == 1 && std::isalpha(static_cast<unsigned char>(prev[0]))) {
      return false;  // initial such as "J."
    }
  } else {
    // digit run directly before: enumerator "12." rather than a terminal
    std::size_t b = i;
    while (b > 0 && std::isdigit(static_cast<unsigned char>(s[b - 1]))) --b;
    if (b < i && i - b <= 3 && (b == 0 || is_space_byte(static_cast<unsigned char>(s[b - 1])))) {
      return false;
    }
  }
  return true;
}

// End positions (exclusive, including trailing closers) of sentences in s.
std::vector<std::size_t> sentence_ends(std::string_view s) {
  std::vector<std::size_t> ends;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c != '.' && c != '!' && c != '?') continue;
    if (!is_sentence_terminal(s, i)) continue;
    std::size_t j = i + 1;
    while (j < s.size() && (s[j] == ')' || s[j] == ']' || s[j] == '"' || s[j] == '\'')) ++j;
    std::size_t k = j;
    while (k < s.size() && is_space_byte(static_cast<unsigned char>(s[k]))) ++k;
    if (k == s.size()) {
      ends.push_back(j);
      break;
    }
    if (k > j) {
      char next = s[k];
      if (std::isupper(static_cast<unsigned char>(next)) ||
          std::isdigit(static_cast<unsigned char>(next)) || next == '(' || next == '"') {
        ends.push_back(j);
        i = j - 1;
      }
    }
  }
  if (ends.empty() || ends.back() != s.size()) ends.push_back(s.size());
  return ends;
}

void append_trimmed_span(std::string_view text, std::size_t begin, std::size_t end,
                         std::vector<SpanRecord>& spans) {
  while (begin < end && is_space_byte(static_cast<unsigned char>(text[begin]))) ++begin;
  while (end > begin && is_space_byte(static_cast<unsigned char>(text[end - 1]))) --end;
  if (begin >= end) return;
  SpanRecord span;
  span.span_id = static_cast<int>(spans.size());
  span.char_start = begin;
  span.char_end = end;
  spans.push_back(span);
}

}  // namespace

std::vector<SpanRecord> split_spans(const std::string& text,
                                    const std::vector<std::size_t>& paragraph_boundaries) {
  std::vector<SpanRecord> spans;
  std::vector<std::size_t> bounds = paragraph_boundaries;
  std::sort(bounds.begin(), bounds.end());
  for (std::size_t b : bounds) {
    if (b > text.size()) throw ValidationError("paragraph boundary beyond text end");
  }
  for (std::size_t p = 0; p < bounds.size(); ++p) {
    std::size_t para_begin = bounds[p];
    std::size_t para_end = (p + 1 < bounds.size()) ? bounds[p + 1] : text.size();
    std::string_view para(text.data() + para_begin, para_end - para_begin);

    std::size_t sent_begin = 0;
    for (std::size_t sent_end : sentence_ends(para)) {
      // inline list items: break before enumerators at token starts
      std::size_t piece_begin = sent_begin;
      for (std::size_t i = sent_begin; i < sent_end; ++i) {
        bool at_token_start =
            i == sent_begin || is_space_byte(static_cast<unsigned char>(para[i - 1]));
        if (!at_token_start || i == piece_begin) continue;
        if (match_enumerator(para, i) > 0) {
          append_trimmed_span(text, para_begin + piece_begin, para_begin + i, spans);
          piece_begin = i;
        }
      }
      append_trimmed_span(text, para_begin + piece_begin, para_begin + sent_end, spans);
      sent_begin = sent_end;
    }
  }
  return spans;
}

Vocabulary::Vocabulary(int num_hypotheses) : num_hypotheses_(num_hypotheses) {
  add_piece("[PAD]");
  add_piece("[UNK]");
  add_piece("[CLS]");
  add_piece("[SEP]");
  add_piece("[SPAN]");
  for (int h = 1; h <= num_hypotheses_; ++h) {
    add_piece("[HYP" + std::to_string(h) + "]");
  }
}

int Vocabulary::hypothesis_symbol_id(int hypothesis_id) const {
  if (hypothesis_id < 1 || hypothesis_id > num_hypotheses_) {
    throw ValidationError("hypothesis id " + std::to_string(hypothesis_id) +
                          " has no reserved symbol token");
  }
  return kNumFixedReserved + hypothesis_id - 1;
}

int Vocabulary::add_piece(const std::string& piece) {
  auto it = ids_.find(piece);
  if (it != ids_.end()) return it->second;
  int id = static_cast<int>(pieces_.size());
  pieces_.push_back(piece);
  ids_.emplace(piece, id);
  max_piece_length_ = std::max(max_piece_length_, piece.size());
  return id;
}

int Vocabulary::id_of(std::string_view piece) const {
  auto it = ids_.find(std::string(piece));
  return it == ids_.end() ? -1 : it->second;
}

void Vocabulary::save(const std::string& path) const {
  std::ostringstream out;
  for (const auto& piece : pieces_) out << piece << "\n";
  write_file(path, out.str());
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);

  static const char* fixed[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[SPAN]"};
  if (lines.size() < kNumFixedReserved) {
    throw ParseError("vocabulary file too short: " + path);
  }
  for (int i = 0; i < kNumFixedReserved; ++i) {
    if (lines[static_cast<std::size_t>(i)] != fixed[i]) {
      throw ParseError("vocabulary reserved header mismatch at line " + std::to_string(i));
    }
  }
  int num_hypotheses = 0;
  std::size_t next = kNumFixedReserved;
  while (next < lines.size()) {
    std::string expected = "[HYP" + std::to_string(num_hypotheses + 1) + "]";
    if (lines[next] != expected) break;
    ++num_hypotheses;
    ++next;
  }
  Vocabulary vocab(num_hypotheses);
  for (; next < lines.size(); ++next) {
    if (lines[next].empty()) continue;
    vocab.add_piece(lines[next]);
  }
  return vocab;
}

std::vector<Token> tokenize(std::string_view text, const Vocabulary& vocab,
                            std::size_t base_offset) {
  std::vector<Token> tokens;
  for (const Word& word : split_words(text, base_offset)) {
    const std::string& surface = word.surface;
    std::size_t pos = 0;
    while (pos < surface.size()) {
      std::size_t remaining = surface.size() - pos;
      std::size_t limit = std::min(remaining, vocab.max_piece_length());
      int matched_id = -1;
      std::size_t matched_len = 0;
      std::string candidate;
      for (std::size_t len = limit; len >= 1; --len) {
        if (pos == 0) {
          candidate.assign(surface, 0, len);
        } else {
          candidate = "##";
          candidate.append(surface, pos, len);
        }
        int id = vocab.id_of(candidate);
        if (id >= 0) {
          matched_id = id;
          matched_len = len;
          break;
        }
      }
      Token token;
      if (matched_id >= 0) {
        token.surface = pos == 0 ? surface.substr(0, matched_len)
                                 : "##" + surface.substr(pos, matched_len);
        token.id = matched_id;
        token.char_start = word.char_start + pos;
        token.char_end = word.char_start + pos + matched_len;
        pos += matched_len;
      } else {
        token.surface = "[UNK]";
        token.id = Vocabulary::kUnk;
        token.char_start = word.char_start + pos;
        token.char_end = word.char_start + pos + 1;
        pos += 1;
      }
      tokens.push_back(std::move(token));
    }
  }
  return tokens;
}

namespace {

// Build a TokenizedDocument from tokens plus the token count of every corpus
// span, merging empty spans into a neighbor.
TokenizedDocument assemble_tokenized(std::vector<Token> tokens,
                                     const std::vector<int>& tokens_per_span) {
  TokenizedDocument doc;
  doc.tokens = std::move(tokens);
  int empty_spans = 0;
  int cursor = 0;
  for (std::size_t s = 0; s < tokens_per_span.size(); ++s) {
    int count = tokens_per_span[s];
    if (count == 0) {
      ++empty_spans;
      continue;  // merged into the previous tokenized span (or the next one)
    }
    doc.span_boundaries.push_back(cursor);
    doc.span_ids.push_back(static_cast<int>(s));
    cursor += count;
  }
  if (doc.span_ids.empty()) {
    throw EmptySpanError("document has no tokens in any span");
  }
  if (empty_spans > 0) {
    log_warn(std::to_string(empty_spans) + " zero-token span(s) merged into neighbors");
  }
  doc.span_boundaries.push_back(cursor);
  doc.span_of_token.resize(doc.tokens.size());
  for (int s = 0; s < doc.num_spans(); ++s) {
    for (int t = doc.span_boundaries[s]; t < doc.span_boundaries[s + 1]; ++t) {
      doc.span_of_token[static_cast<std::size_t>(t)] = s;
    }
  }
  return doc;
}

}  // namespace

TokenizedDocument index_spans(const std::vector<Token>& tokens,
                              const std::vector<SpanRecord>& spans) {
  if (spans.empty()) throw EmptySpanError("no spans to index");
  std::vector<int> tokens_per_span(spans.size(), 0);
  std::vector<Token> ordered = tokens;
  int current = 0;
  for (const Token& token : ordered) {
    while (current + 1 < static_cast<int>(spans.size()) &&
           token.char_start >= spans[static_cast<std::size_t>(current) + 1].char_start) {
      ++current;
    }
    tokens_per_span[static_cast<std::size_t>(current)] += 1;
  }
  return assemble_tokenized(std::move(ordered), tokens_per_span);
}

TokenizedDocument tokenize_document(const Document& doc, const Vocabulary& vocab) {
  std::vector<Token> tokens;
  std::vector<int> tokens_per_span;
  tokens_per_span.reserve(doc.spans.size());
  for (const SpanRecord& span : doc.spans) {
    std::string_view slice(doc.text.data() + span.char_start, span.char_end - span.char_start);
    std::vector<Token> span_tokens = tokenize(slice, vocab, span.char_start);
    tokens_per_span.push_back(static_cast<int>(span_tokens.size()));
    for (auto& t : span_tokens) tokens.push_back(std::move(t));
  }
  TokenizedDocument result = assemble_tokenized(std::move(tokens), tokens_per_span);
  result.doc_id = doc.doc_id;
  return result;
}

namespace {

struct PairHash {
  std::size_t operator()(const std::pair<int, int>& p) const {
    return std::hash<long long>()((static_cast<long long>(p.first) << 32) ^ p.second);
  }
};

}  // namespace

Vocabulary build_vocabulary(const Corpus& corpus, const VocabularyBuildConfig& config) {
  // Word frequency table over the corpus span slices.
  std::map<std::string, long> word_freq;
  for (const Document& doc : corpus.documents) {
    for (const SpanRecord& span : doc.spans) {
      std::string_view slice(doc.text.data() + span.char_start,
                             span.char_end - span.char_start);
      for (const Word& word : split_words(slice)) {
        word_freq[word.surface] += 1;
      }
    }
  }

  Vocabulary vocab(static_cast<int>(corpus.hypotheses.size()));

  // Seed symbols: every observed character, initial and continuation form.
  std::set<std::string> seeds;
  for (const auto& [word, freq] : word_freq) {
    (void)freq;
    for (std::size_t i = 0; i < word.size(); ++i) {
      std::string c(1, word[i]);
      seeds.insert(i == 0 ? c : "##" + c);
    }
  }
  for (const auto& seed : seeds) vocab.add_piece(seed);

  // Symbol id space local to the builder (strings interned for cheap pairs).
  std::vector<std::string> symbol_names;
  std::unordered_map<std::string, int> symbol_ids;
  auto intern = [&](const std::string& s) {
    auto it = symbol_ids.find(s);
    if (it != symbol_ids.end()) return it->second;
    int id = static_cast<int>(symbol_names.size());
    symbol_names.push_back(s);
    symbol_ids.emplace(s, id);
    return id;
  };

  struct BuilderWord {
    std::vector<int> symbols;
    long freq = 0;
  };
  std::vector<BuilderWord> words;
  for (const auto& [word, freq] : word_freq) {
    BuilderWord bw;
    bw.freq = freq;
    for (std::size_t i = 0; i < word.size(); ++i) {
      std::string c(1, word[i]);
      bw.symbols.push_back(intern(i == 0 ? c : "##" + c));
    }
    words.push_back(std::move(bw));
  }

  using SymbolPair = std::pair<int, int>;
  std::unordered_map<SymbolPair, long, PairHash> pair_freq;
  std::unordered_map<SymbolPair, std::unordered_set<int>, PairHash> pair_words;
  for (std::size_t w = 0; w < words.size(); ++w) {
    const auto& symbols = words[w].symbols;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      SymbolPair p{symbols[i], symbols[i + 1]};
      pair_freq[p] += words[w].freq;
      pair_words[p].insert(static_cast<int>(w));
    }
  }

  auto pair_string = [&](const SymbolPair& p) {
    const std::string& left = symbol_names[static_cast<std::size_t>(p.first)];
    const std::string& right = symbol_names[static_cast<std::size_t>(p.second)];
    // the right symbol is always a continuation; drop its ## marker
    return left + right.substr(2);
  };

  while (vocab.size() < config.target_size && !pair_freq.empty()) {
    SymbolPair best{-1, -1};
    long best_freq = 0;
    std::string best_str;
    for (const auto& [p, freq] : pair_freq) {
      if (freq < config.min_pair_frequency) continue;
      if (freq > best_freq) {
        best = p;
        best_freq = freq;
        best_str = pair_string(p);
      } else if (freq == best_freq && best_freq > 0) {
        std::string s = pair_string(p);
        if (s < best_str) {
          best = p;
          best_str = std::move(s);
        }
      }
    }
    if (best_freq < config.min_pair_frequency) break;

    vocab.add_piece(best_str);
    int merged = intern(best_str);

    auto affected_it = pair_words.find(best);
    std::vector<int> affected(affected_it->second.begin(), affected_it->second.end());
    std::sort(affected.begin(), affected.end());
    for (int w : affected) {
      BuilderWord& bw = words[static_cast<std::size_t>(w)];
      // retire this word's pair contributions
      for (std::size_t i = 0; i + 1 < bw.symbols.size(); ++i) {
        SymbolPair p{bw.symbols[i], bw.symbols[i + 1]};
        auto fit = pair_freq.find(p);
        if (fit != pair_freq.end()) {
          fit->second -= bw.freq;
          if (fit->second <= 0) pair_freq.erase(fit);
        }
        auto wit = pair_words.find(p);
        if (wit != pair_words.end()) {
          wit->second.erase(w);
          if (wit->second.empty()) pair_words.erase(wit);
        }
      }
      // apply the merge left to right
      std::vector<int> updated;
      updated.reserve(bw.symbols.size());
      for (std::size_t i = 0; i < bw.symbols.size();) {
        if (i + 1 < bw.symbols.size() && bw.symbols[i] == best.first &&
            bw.symbols[i + 1] == best.second) {
          updated.push_back(merged);
          i += 2;
        } else {
          updated.push_back(bw.symbols[i]);
          i += 1;
        }
      }
      bw.symbols = std::move(updated);
      // restore contributions
      for (std::size_t i = 0; i + 1 < bw.symbols.size(); ++i) {
        SymbolPair p{bw.symbols[i], bw.symbols[i + 1]};
        pair_freq[p] += bw.freq;
        pair_words[p].insert(w);
      }
    }
  }
  return vocab;
}

}  // namespace docnli
