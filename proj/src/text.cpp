// Copyright 2026 The lyricsync Authors
// SPDX-License-Identifier: Apache-2.0

#include "lyricsync/text.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

#include "embedded_data.hpp"
#include "lyricsync/error.hpp"

namespace lyricsync {

namespace utf8 {

std::vector<char32_t> Decode(std::string_view text) {
  std::vector<char32_t> out;
  out.reserve(text.size());
  size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    int extra = 0;
    char32_t cp = 0;
    if (c < 0x80) {
      cp = c;
    } else if ((c >> 5) == 0x6) {
      cp = c & 0x1F;
      extra = 1;
    } else if ((c >> 4) == 0xE) {
      cp = c & 0x0F;
      extra = 2;
    } else if ((c >> 3) == 0x1E) {
      cp = c & 0x07;
      extra = 3;
    } else {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    bool ok = true;
    for (int k = 1; k <= extra; ++k) {
      if (i + k >= text.size()) {
        ok = false;
        break;
      }
      const auto cc = static_cast<unsigned char>(text[i + k]);
      if ((cc >> 6) != 0x2) {
        ok = false;
        break;
      }
      cp = (cp << 6) | (cc & 0x3F);
    }
    if (!ok) {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += extra + 1;
  }
  return out;
}

std::string Encode(char32_t cp) {
  std::string s;
  if (cp < 0x80) {
    s.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    s.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    s.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    s.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    s.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    s.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    s.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
  return s;
}

std::string Encode(const std::vector<char32_t>& cps) {
  std::string s;
  for (char32_t cp : cps) s += Encode(cp);
  return s;
}

}  // namespace utf8

namespace {

std::string_view TrimView(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\f\v");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> SplitLines(std::string_view text) {
  std::vector<std::string_view> lines;
  size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    if (end == std::string_view::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

// Diacritics and modifier letters that belong to the preceding base symbol.
bool IsAttached(char32_t cp) {
  return (cp >= 0x0300 && cp <= 0x036F) || (cp >= 0x02B0 && cp <= 0x02B8) ||
         (cp >= 0x02E0 && cp <= 0x02E4) || cp == 0x02DE || (cp >= 0x1DC0 && cp <= 0x1DFF);
}

bool IsPunctuation(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) || (cp >= 0x5B && cp <= 0x60) ||
           (cp >= 0x7B && cp <= 0x7E);
  }
  return cp == 0x00A1 || cp == 0x00A7 || cp == 0x00AB || cp == 0x00B6 || cp == 0x00B7 || cp == 0x00BB ||
         cp == 0x00BF || (cp >= 0x2010 && cp <= 0x2027) || (cp >= 0x2030 && cp <= 0x205E) ||
         (cp >= 0x3000 && cp <= 0x303F) || (cp >= 0xFF01 && cp <= 0xFF0F) || (cp >= 0xFF1A && cp <= 0xFF20) ||
         (cp >= 0xFF3B && cp <= 0xFF40) || (cp >= 0xFF5B && cp <= 0xFF65);
}

bool IsSpace(char32_t cp) {
  return cp == ' ' || cp == '\t' || cp == '\r' || cp == '\f' || cp == '\v' || cp == 0x00A0 || cp == 0x3000 ||
         (cp >= 0x2000 && cp <= 0x200B);
}

std::vector<std::string> SplitWords(std::string_view line) {
  std::vector<std::string> words;
  std::vector<char32_t> current;
  for (char32_t cp : utf8::Decode(line)) {
    if (IsSpace(cp)) {
      if (!current.empty()) words.push_back(utf8::Encode(current));
      current.clear();
    } else {
      current.push_back(cp);
    }
  }
  if (!current.empty()) words.push_back(utf8::Encode(current));
  return words;
}

std::string AsciiLower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

size_t CodepointCount(std::string_view s) { return utf8::Decode(s).size(); }

}  // namespace

std::vector<std::string> SplitLyricLines(std::string_view raw_lyrics) {
  std::vector<std::string> out;
  for (auto line : SplitLines(raw_lyrics)) {
    auto trimmed = TrimView(line);
    if (!trimmed.empty()) out.emplace_back(trimmed);
  }
  return out;
}

std::string StripPunctuation(std::string_view word) {
  std::vector<char32_t> kept;
  for (char32_t cp : utf8::Decode(word)) {
    if (!IsPunctuation(cp)) kept.push_back(cp);
  }
  return utf8::Encode(kept);
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary Vocabulary::Parse(std::string_view vocab_text, std::string_view fallback_text) {
  Vocabulary v;
  auto lines = SplitLines(vocab_text);
  while (!lines.empty() && TrimView(lines.back()).empty()) lines.pop_back();
  for (size_t i = 0; i < lines.size(); ++i) {
    std::string sym(TrimView(lines[i]));
    if (sym.empty()) throw Error(ErrorCode::kParseError, "vocabulary line " + std::to_string(i + 1) + " is empty");
    if (v.index_.count(sym)) throw Error(ErrorCode::kParseError, "duplicate vocabulary symbol '" + sym + "'");
    v.index_.emplace(sym, static_cast<TokenId>(v.symbols_.size()));
    if (sym == kSilenceSymbol) v.silence_id_ = static_cast<TokenId>(v.symbols_.size());
    v.max_symbol_bytes_ = std::max(v.max_symbol_bytes_, sym.size());
    v.symbols_.push_back(std::move(sym));
  }
  if (v.symbols_.size() != static_cast<size_t>(kSize)) {
    throw Error(ErrorCode::kParseError,
                "vocabulary must hold exactly 76 entries, got " + std::to_string(v.symbols_.size()));
  }
  if (v.silence_id_ < 0) throw Error(ErrorCode::kParseError, "vocabulary lacks the <sil> entry");

  int line_no = 0;
  for (auto line : SplitLines(fallback_text)) {
    ++line_no;
    auto t = TrimView(line);
    if (t.empty() || t.front() == '#') continue;
    std::istringstream ss{std::string(t)};
    std::string from, to, extra;
    ss >> from >> to;
    if (from.empty() || to.empty() || (ss >> extra)) {
      throw Error(ErrorCode::kParseError, "fallback line " + std::to_string(line_no) + " must have two columns");
    }
    if (!v.index_.count(to)) {
      throw Error(ErrorCode::kParseError, "fallback target '" + to + "' is not in the vocabulary");
    }
    if (v.index_.count(from)) {
      throw Error(ErrorCode::kParseError, "fallback key '" + from + "' is already in the vocabulary");
    }
    v.max_symbol_bytes_ = std::max(v.max_symbol_bytes_, from.size());
    v.fallback_[from] = to;
  }
  return v;
}

namespace {
std::string ReadWholeFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}
}  // namespace

Vocabulary Vocabulary::Load(const std::string& vocab_path, const std::string& fallback_path) {
  return Parse(ReadWholeFile(vocab_path), ReadWholeFile(fallback_path));
}

const Vocabulary& Vocabulary::Default() {
  static const Vocabulary v = Parse(embedded::kVocabV1, embedded::kFallbackV1);
  return v;
}

const std::string& Vocabulary::Symbol(TokenId id) const {
  if (id < 0 || id >= size()) throw Error(ErrorCode::kTokenOutOfRange, "token id " + std::to_string(id));
  return symbols_[static_cast<size_t>(id)];
}

TokenId Vocabulary::Find(std::string_view symbol) const {
  auto it = index_.find(std::string(symbol));
  return it == index_.end() ? -1 : it->second;
}

TokenId MapOovSymbol(std::string_view symbol, const Vocabulary& vocab) {
  if (auto id = vocab.Find(symbol); id >= 0) return id;
  const auto& fb = vocab.fallback_map();
  if (auto it = fb.find(std::string(symbol)); it != fb.end()) return vocab.Find(it->second);
  throw Error(ErrorCode::kNoMapping, "IPA symbol '" + std::string(symbol) + "' has no vocabulary mapping");
}

std::vector<TokenId> SegmentIpa(std::string_view ipa, const Vocabulary& vocab) {
  const auto cps = utf8::Decode(ipa);
  size_t max_cps = 1;
  for (const auto& s : vocab.symbols()) max_cps = std::max(max_cps, CodepointCount(s));
  for (const auto& [k, _] : vocab.fallback_map()) max_cps = std::max(max_cps, CodepointCount(k));

  std::vector<TokenId> out;
  size_t i = 0;
  while (i < cps.size()) {
    if (IsSpace(cps[i]) || IsAttached(cps[i])) {
      ++i;  // stray modifier without a base
      continue;
    }
    bool matched = false;
    const size_t limit = std::min(max_cps, cps.size() - i);
    for (size_t n = limit; n >= 1 && !matched; --n) {
      const size_t end = i + n;
      if (end < cps.size() && IsAttached(cps[end])) continue;
      const std::string cand = utf8::Encode(std::vector<char32_t>(cps.begin() + static_cast<long>(i),
                                                                   cps.begin() + static_cast<long>(end)));
      if (vocab.Contains(cand) || vocab.fallback_map().count(cand)) {
        out.push_back(MapOovSymbol(cand, vocab));
        i = end;
        matched = true;
      }
    }
    if (matched) continue;
    size_t cluster_end = i + 1;
    while (cluster_end < cps.size() && IsAttached(cps[cluster_end])) ++cluster_end;
    const std::string base = utf8::Encode(cps[i]);
    if (vocab.Contains(base) || vocab.fallback_map().count(base)) {
      out.push_back(MapOovSymbol(base, vocab));
      i = cluster_end;
      continue;
    }
    const std::string cluster = utf8::Encode(std::vector<char32_t>(cps.begin() + static_cast<long>(i),
                                                                    cps.begin() + static_cast<long>(cluster_end)));
    throw Error(ErrorCode::kNoMapping, "IPA symbol '" + cluster + "' has no vocabulary mapping");
  }
  return out;
}

// ---------------------------------------------------------------------------
// TokenSequence

void TokenSequence::Validate(int vocab_size) const {
  const int n = size();
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kInvalidArgument, "TokenSequence: " + m); };
  for (auto t : tokens) {
    if (t < 0 || t >= vocab_size) throw Error(ErrorCode::kTokenOutOfRange, "token id " + std::to_string(t));
  }
  for (size_t i = 0; i < word_starts.size(); ++i) {
    if (word_starts[i] < 0 || word_starts[i] >= n) fail("word start out of range");
    if (i > 0 && word_starts[i] <= word_starts[i - 1]) fail("word starts not strictly increasing");
  }
  for (size_t i = 0; i < sentence_starts.size(); ++i) {
    if (sentence_starts[i] < 0 || sentence_starts[i] >= n) fail("sentence start out of range");
    if (i > 0 && sentence_starts[i] <= sentence_starts[i - 1]) fail("sentence starts not strictly increasing");
    if (!std::binary_search(word_starts.begin(), word_starts.end(), sentence_starts[i])) {
      fail("sentence start is not a word start");
    }
  }
  if (source_words.size() != word_starts.size()) fail("source_words and word_starts differ in length");
}

int TokenSequence::WordOfToken(int i) const {
  if (i < 0 || i >= size()) return -1;
  if (tokens[static_cast<size_t>(i)] == Vocabulary::Default().silence_id()) return -1;
  auto it = std::upper_bound(word_starts.begin(), word_starts.end(), i);
  if (it == word_starts.begin()) return -1;
  return static_cast<int>(it - word_starts.begin()) - 1;
}

std::pair<int, int> TokenSequence::SentenceWords(int s) const {
  if (s < 0 || s >= static_cast<int>(sentence_starts.size())) {
    throw Error(ErrorCode::kInvalidArgument, "sentence index " + std::to_string(s));
  }
  const int begin_tok = sentence_starts[static_cast<size_t>(s)];
  const int end_tok = s + 1 < static_cast<int>(sentence_starts.size()) ? sentence_starts[static_cast<size_t>(s) + 1]
                                                                         : size();
  const auto first = std::lower_bound(word_starts.begin(), word_starts.end(), begin_tok) - word_starts.begin();
  const auto last = std::lower_bound(word_starts.begin(), word_starts.end(), end_tok) - word_starts.begin();
  return {static_cast<int>(first), static_cast<int>(last)};
}

TokenSequence TokenSequence::Sentence(int s) const {
  const auto [w0, w1] = SentenceWords(s);
  const int begin_tok = sentence_starts[static_cast<size_t>(s)];
  int end_tok = s + 1 < static_cast<int>(sentence_starts.size()) ? sentence_starts[static_cast<size_t>(s) + 1]
                                                                   : size();
  const TokenId sil = Vocabulary::Default().silence_id();
  while (end_tok > begin_tok && tokens[static_cast<size_t>(end_tok) - 1] == sil) --end_tok;
  TokenSequence out;
  out.language_tag = language_tag;
  out.tokens.assign(tokens.begin() + begin_tok, tokens.begin() + end_tok);
  for (int w = w0; w < w1; ++w) {
    out.word_starts.push_back(word_starts[static_cast<size_t>(w)] - begin_tok);
    out.source_words.push_back(source_words[static_cast<size_t>(w)]);
  }
  out.sentence_starts = {0};
  return out;
}

// ---------------------------------------------------------------------------
// G2P backends

namespace {

std::string SpellDigit(char d) {
  static const std::array<const char*, 10> kDigits = {"ˈzɪɹoʊ", "ˈwʌn", "ˈtu",  "ˈθɹi",  "ˈfɔɹ",
                                                      "ˈfaɪv",  "ˈsɪks", "ˈsɛvən", "ˈeɪt", "ˈnaɪn"};
  return kDigits[static_cast<size_t>(d - '0')];
}

char FoldLatin(char32_t cp) {
  if (cp < 0x80) {
    char c = static_cast<char>(cp);
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return c;
  }
  switch (cp) {
    case 0xE0: case 0xE1: case 0xE2: case 0xE3: case 0xE4: case 0xE5: case 0xC0: case 0xC1: case 0xC2:
    case 0xC3: case 0xC4: case 0xC5:
      return 'a';
    case 0xE8: case 0xE9: case 0xEA: case 0xEB: case 0xC8: case 0xC9: case 0xCA: case 0xCB:
      return 'e';
    case 0xEC: case 0xED: case 0xEE: case 0xEF: case 0xCC: case 0xCD: case 0xCE: case 0xCF:
      return 'i';
    case 0xF2: case 0xF3: case 0xF4: case 0xF5: case 0xF6: case 0xD2: case 0xD3: case 0xD4: case 0xD5:
    case 0xD6:
      return 'o';
    case 0xF9: case 0xFA: case 0xFB: case 0xFC: case 0xD9: case 0xDA: case 0xDB: case 0xDC:
      return 'u';
    case 0xE7: case 0xC7:
      return 'c';
    case 0xDF:
      return 's';
    default:
      return 0;
  }
}

bool IsVowelLetter(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' || c == 'y'; }

std::string LatinLetterRules(const std::string& w) {
  struct Rule {
    const char* graph;
    const char* ipa;
  };
  static const std::array<Rule, 25> kMulti = {{{"tch", "tʃ"}, {"igh", "aɪ"}, {"ch", "tʃ"}, {"sh", "ʃ"},
                                               {"th", "θ"},   {"ph", "f"},   {"ng", "ŋ"},  {"ck", "k"},
                                               {"qu", "kw"},  {"wh", "w"},   {"ee", "i"},  {"ea", "i"},
                                               {"oo", "u"},   {"ou", "aʊ"},  {"ow", "aʊ"}, {"oi", "ɔɪ"},
                                               {"oy", "ɔɪ"},  {"ai", "eɪ"},  {"ay", "eɪ"}, {"au", "ɔ"},
                                               {"aw", "ɔ"},   {"ew", "ju"},  {"ie", "i"},  {"ey", "eɪ"},
                                               {"gh", ""}}};
  std::string out;
  size_t i = 0;
  const size_t n = w.size();
  while (i < n) {
    // silent final e after a consonant
    if (w[i] == 'e' && i + 1 == n && n > 2 && !IsVowelLetter(w[i - 1])) break;
    bool hit = false;
    for (const auto& r : kMulti) {
      const size_t len = std::char_traits<char>::length(r.graph);
      if (w.compare(i, len, r.graph) == 0) {
        out += r.ipa;
        i += len;
        hit = true;
        break;
      }
    }
    if (hit) continue;
    const char c = w[i];
    if (i > 0 && c == w[i - 1] && !IsVowelLetter(c)) {
      ++i;  // doubled consonant
      continue;
    }
    const char next = i + 1 < n ? w[i + 1] : '\0';
    switch (c) {
      case 'a': out += "æ"; break;
      case 'b': out += "b"; break;
      case 'c': out += (next == 'e' || next == 'i' || next == 'y') ? "s" : "k"; break;
      case 'd': out += "d"; break;
      case 'e': out += "ɛ"; break;
      case 'f': out += "f"; break;
      case 'g': out += (next == 'e' || next == 'i') ? "dʒ" : "ɡ"; break;
      case 'h': out += "h"; break;
      case 'i': out += "ɪ"; break;
      case 'j': out += "dʒ"; break;
      case 'k': out += "k"; break;
      case 'l': out += "l"; break;
      case 'm': out += "m"; break;
      case 'n': out += "n"; break;
      case 'o': out += "ɑ"; break;
      case 'p': out += "p"; break;
      case 'q': out += "k"; break;
      case 'r': out += "ɹ"; break;
      case 's': out += "s"; break;
      case 't': out += "t"; break;
      case 'u': out += "ʌ"; break;
      case 'v': out += "v"; break;
      case 'w': out += "w"; break;
      case 'x': out += "ks"; break;
      case 'y': out += (i == 0) ? "j" : "i"; break;
      case 'z': out += "z"; break;
      case '0': case '1': case '2': case '3': case '4': case '5': case '6': case '7': case '8': case '9':
        out += SpellDigit(c);
        break;
      default: break;
    }
    ++i;
  }
  return out;
}

bool IsHangulSyllable(char32_t cp) { return cp >= 0xAC00 && cp <= 0xD7A3; }

}  // namespace

std::string CharacterIpaFallback::Phonemize(std::string_view word) const {
  std::string out;
  std::string latin_run;
  std::vector<char32_t> hangul_run;
  auto flush = [&] {
    if (!latin_run.empty()) out += LatinLetterRules(latin_run);
    latin_run.clear();
    if (!hangul_run.empty()) out += KoreanG2p{}.Phonemize(utf8::Encode(hangul_run));
    hangul_run.clear();
  };
  for (char32_t cp : utf8::Decode(word)) {
    if (IsHangulSyllable(cp)) {
      if (!latin_run.empty()) flush();
      hangul_run.push_back(cp);
      continue;
    }
    if (!hangul_run.empty()) flush();
    if (cp == 0xF1 || cp == 0xD1) {  // ñ
      flush();
      out += "ɲ";
      continue;
    }
    const char folded = FoldLatin(cp);
    if (folded != 0 && ((folded >= 'a' && folded <= 'z') || (folded >= '0' && folded <= '9'))) {
      latin_run.push_back(folded);
    } else if (cp >= 0x80) {
      flush();
      out += utf8::Encode(cp);  // possibly IPA already; SegmentIpa decides
    }
  }
  flush();
  return out;
}

EnglishG2p::EnglishG2p(std::string_view lexicon_text) {
  for (auto line : SplitLines(lexicon_text)) {
    auto t = TrimView(line);
    if (t.empty() || t.front() == '#') continue;
    std::istringstream ss{std::string(t)};
    std::string word, ipa;
    ss >> word >> ipa;
    if (word.empty() || ipa.empty()) continue;
    lexicon_[AsciiLower(StripPunctuation(word))] = ipa;
  }
}

const EnglishG2p& EnglishG2p::Default() {
  static const EnglishG2p g2p(embedded::kEnLexiconV1);
  return g2p;
}

bool EnglishG2p::InLexicon(std::string_view word) const {
  return lexicon_.count(AsciiLower(StripPunctuation(word))) > 0;
}

std::string EnglishG2p::Phonemize(std::string_view word) const {
  const std::string key = AsciiLower(StripPunctuation(word));
  if (auto it = lexicon_.find(key); it != lexicon_.end()) return it->second;
  return CharacterIpaFallback{}.Phonemize(key);
}

std::string KoreanG2p::Phonemize(std::string_view word) const {
  static const std::array<const char*, 19> kInitial = {"k", "k͈", "n", "t", "t͈", "ɾ", "m", "p", "p͈", "s",
                                                       "s͈", "",  "tɕ", "t͈ɕ", "tɕʰ", "kʰ", "tʰ", "pʰ", "h"};
  static const std::array<const char*, 21> kMedial = {"a",  "ɛ",  "ja", "jɛ", "ʌ", "e",  "jʌ", "je", "o", "wa", "wɛ",
                                                      "ø", "jo", "u",  "wʌ", "we", "y", "ju", "ɯ", "ɰi", "i"};
  static const std::array<const char*, 28> kFinal = {"",   "k̚", "k̚", "k̚", "n",  "n",  "n",  "t̚", "l",  "k̚",
                                                     "m",  "l",  "l",  "l",  "p̚", "l",  "m",  "p̚", "p̚", "t̚",
                                                     "t̚", "ŋ",  "t̚", "t̚", "k̚", "t̚", "p̚", "t̚"};
  // Final → (remaining coda index, released onset moved by liaison).
  struct Liaison {
    int coda;
    const char* onset;
  };
  static const std::array<Liaison, 28> kLiaison = {{{0, ""},   {0, "k"},  {0, "k͈"}, {1, "s"},  {0, "n"},
                                                    {4, "tɕ"}, {4, ""},   {0, "t"},  {0, "ɾ"},  {8, "k"},
                                                    {8, "m"},  {8, "p"},  {8, "s"},  {8, "tʰ"}, {8, "pʰ"},
                                                    {8, ""},   {0, "m"},  {0, "p"},  {17, "s"}, {0, "s"},
                                                    {0, "s͈"}, {21, ""}, {0, "tɕ"}, {0, "tɕʰ"}, {0, "kʰ"},
                                                    {0, "tʰ"}, {0, "pʰ"}, {0, ""}}};
  struct Syl {
    std::string onset;
    std::string vowel;
    int coda = 0;
  };
  std::vector<Syl> syls;
  std::string out;
  auto emit = [&] {
    auto voiced_tail = [](const std::string& s) {
      if (s.empty()) return false;
      static const std::array<const char*, 5> kVoicedCodas = {"n", "m", "ŋ", "l", ""};
      for (auto* c : kVoicedCodas) {
        if (s == c) return true;
      }
      return false;
    };
    for (size_t i = 0; i < syls.size(); ++i) {
      auto& s = syls[i];
      std::string onset = s.onset;
      const std::string& v = s.vowel;
      const bool front_high = v.rfind("i", 0) == 0 || v.rfind("j", 0) == 0;
      if (i > 0) {
        const auto& prev = syls[i - 1];
        const std::string prev_coda = kFinal[static_cast<size_t>(prev.coda)];
        const bool prev_voiced = prev.coda == 0 || voiced_tail(prev_coda);
        if (prev_voiced) {
          if (onset == "k") onset = "ɡ";
          else if (onset == "t") onset = "d";
          else if (onset == "p") onset = "b";
          else if (onset == "tɕ") onset = "dʑ";
        }
        if (onset == "ɾ" && prev_coda == "l") onset = "l";
        if (onset == "n" && prev_coda == "l") onset = "l";
        if (onset == "h" && prev_voiced && !front_high) onset = "ɦ";
      }
      if (onset == "s" && front_high) onset = "ɕ";
      if (onset == "n" && front_high) onset = "ɲ";
      if (onset == "h") {
        if (front_high) onset = "ç";
        else if (v.rfind("u", 0) == 0 || v.rfind("w", 0) == 0) onset = "ɸ";
        else if (v.rfind("ɯ", 0) == 0) onset = "x";
      }
      if (onset == "l" && front_high) onset = "ʎ";
      out += onset;
      out += v;
      out += kFinal[static_cast<size_t>(s.coda)];
    }
    syls.clear();
  };
  for (char32_t cp : utf8::Decode(word)) {
    if (!IsHangulSyllable(cp)) {
      emit();
      out += CharacterIpaFallback{}.Phonemize(utf8::Encode(cp));
      continue;
    }
    const int idx = static_cast<int>(cp - 0xAC00);
    Syl s;
    s.onset = kInitial[static_cast<size_t>(idx / 588)];
    s.vowel = kMedial[static_cast<size_t>((idx % 588) / 28)];
    s.coda = idx % 28;
    if (!syls.empty() && idx / 588 == 11) {
      auto& prev = syls.back();
      const auto& l = kLiaison[static_cast<size_t>(prev.coda)];
      if (prev.coda != 0 && prev.coda != 21) {
        s.onset = l.onset;
        prev.coda = l.coda;
      }
    }
    syls.push_back(std::move(s));
  }
  emit();
  return out;
}

G2pRegistry G2pRegistry::WithBuiltins() {
  G2pRegistry r;
  r.Register("en", std::shared_ptr<const G2pBackend>(&EnglishG2p::Default(), [](const G2pBackend*) {}));
  r.Register("ko", std::make_shared<KoreanG2p>());
  r.Register("ipa", std::make_shared<IpaPassthrough>());
  return r;
}

void G2pRegistry::Register(const std::string& language, std::shared_ptr<const G2pBackend> backend) {
  backends_[language] = std::move(backend);
}

const G2pBackend& G2pRegistry::Resolve(const std::string& language) const {
  if (auto it = backends_.find(language); it != backends_.end()) return *it->second;
  if (character_fallback_) return fallback_;
  throw Error(ErrorCode::kUnknownLanguage, "no g2p backend for language '" + language + "'");
}

TokenSequence LyricsToIpa(std::string_view raw_lyrics, const std::string& language, const G2pRegistry& g2p,
                          const Vocabulary& vocab, const LyricsOptions& options) {
  const G2pBackend& backend = g2p.Resolve(language);
  TokenSequence seq;
  seq.language_tag = language;
  if (options.leading_silence) seq.tokens.push_back(vocab.silence_id());
  bool any_line = false;
  for (const auto& line : SplitLyricLines(raw_lyrics)) {
    std::vector<std::pair<std::string, std::vector<TokenId>>> words;
    for (const auto& raw_word : SplitWords(line)) {
      const std::string word = StripPunctuation(raw_word);
      if (word.empty()) continue;
      auto ids = SegmentIpa(backend.Phonemize(word), vocab);
      if (ids.empty()) continue;
      words.emplace_back(word, std::move(ids));
    }
    if (words.empty()) continue;
    if (any_line) seq.tokens.push_back(vocab.silence_id());
    any_line = true;
    seq.sentence_starts.push_back(seq.size());
    for (auto& [word, ids] : words) {
      seq.word_starts.push_back(seq.size());
      seq.source_words.push_back(word);
      seq.tokens.insert(seq.tokens.end(), ids.begin(), ids.end());
    }
  }
  if (!any_line) throw Error(ErrorCode::kEmptyLyrics, "lyrics contain no non-blank line");
  if (options.trailing_silence) seq.tokens.push_back(vocab.silence_id());
  return seq;
}

}  // namespace lyricsync
