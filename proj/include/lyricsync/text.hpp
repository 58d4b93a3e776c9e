// Copyright 2026 The lyricsync Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lyricsync {

using TokenId = int;

/// Fixed IPA vocabulary: 75 phone symbols plus one silence token. Ids are the
/// line indices of the vocabulary file.
class Vocabulary {
 public:
  static constexpr int kSize = 76;
  static constexpr std::string_view kSilenceSymbol = "<sil>";

  /// Parses the line-oriented vocabulary text and the two-column fallback
  /// table. Throws kParseError when the result violates the invariants.
  static Vocabulary Parse(std::string_view vocab_text, std::string_view fallback_text);
  static Vocabulary Load(const std::string& vocab_path, const std::string& fallback_path);
  /// The bundled v1 tables.
  static const Vocabulary& Default();

  int size() const { return static_cast<int>(symbols_.size()); }
  TokenId silence_id() const { return silence_id_; }
  const std::vector<std::string>& symbols() const { return symbols_; }
  const std::map<std::string, std::string>& fallback_map() const { return fallback_; }

  const std::string& Symbol(TokenId id) const;
  /// Exact in-vocabulary lookup; -1 when absent.
  TokenId Find(std::string_view symbol) const;
  bool Contains(std::string_view symbol) const { return Find(symbol) >= 0; }
  /// Longest symbol (vocabulary or fallback key) in bytes.
  size_t max_symbol_bytes() const { return max_symbol_bytes_; }

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, TokenId> index_;
  std::map<std::string, std::string> fallback_;
  TokenId silence_id_ = -1;
  size_t max_symbol_bytes_ = 0;
};

/// Maps an IPA symbol onto the vocabulary: in-vocabulary symbols map to
/// themselves, others through the fallback table. Throws kNoMapping.
TokenId MapOovSymbol(std::string_view symbol, const Vocabulary& vocab);

/// Splits an IPA string into vocabulary ids. Multi-codepoint symbols are
/// matched greedily (longest first) and never split a base character from its
/// attached diacritics; unknown clusters go through MapOovSymbol, then through
/// a diacritic-stripped retry.
std::vector<TokenId> SegmentIpa(std::string_view ipa, const Vocabulary& vocab);

struct TokenSequence {
  std::vector<TokenId> tokens;
  std::vector<int> word_starts;
  std::vector<int> sentence_starts;
  std::vector<std::string> source_words;
  std::string language_tag;

  int size() const { return static_cast<int>(tokens.size()); }
  /// Throws kInvalidArgument naming the violated invariant.
  void Validate(int vocab_size = Vocabulary::kSize) const;
  /// Index of the word that owns token `i` (-1 for separator tokens).
  int WordOfToken(int i) const;
  /// Range of word indices [first, last) belonging to sentence `s`.
  std::pair<int, int> SentenceWords(int s) const;
  /// Tokens of a single sentence as a standalone one-line sequence.
  TokenSequence Sentence(int s) const;
};

/// Grapheme-to-phoneme backend. Implementations return an IPA string for one
/// punctuation-stripped word. All bundled backends are reentrant.
class G2pBackend {
 public:
  virtual ~G2pBackend() = default;
  virtual std::string Phonemize(std::string_view word) const = 0;
};

/// Lexicon lookup with rule-based letter-to-sound fallback for unknown words.
class EnglishG2p : public G2pBackend {
 public:
  explicit EnglishG2p(std::string_view lexicon_text);
  static const EnglishG2p& Default();
  std::string Phonemize(std::string_view word) const override;
  bool InLexicon(std::string_view word) const;

 private:
  std::unordered_map<std::string, std::string> lexicon_;
};

/// Hangul syllable decomposition with basic allophony (lenis voicing,
/// liaison, palatalisation of s/h/n before i).
class KoreanG2p : public G2pBackend {
 public:
  std::string Phonemize(std::string_view word) const override;
};

/// Text that is already IPA; returned verbatim.
class IpaPassthrough : public G2pBackend {
 public:
  std::string Phonemize(std::string_view word) const override { return std::string(word); }
};

/// Naive character-level letter-to-sound rules for Latin script. Used as the
/// fallback backend for languages without a registered backend.
class CharacterIpaFallback : public G2pBackend {
 public:
  std::string Phonemize(std::string_view word) const override;
};

class G2pRegistry {
 public:
  /// Registry with "en", "ko" and "ipa" registered and the character fallback
  /// enabled.
  static G2pRegistry WithBuiltins();

  void Register(const std::string& language, std::shared_ptr<const G2pBackend> backend);
  void set_character_fallback(bool enabled) { character_fallback_ = enabled; }
  bool character_fallback() const { return character_fallback_; }
  /// Throws kUnknownLanguage when nothing is registered and the fallback is
  /// disabled.
  const G2pBackend& Resolve(const std::string& language) const;

 private:
  std::map<std::string, std::shared_ptr<const G2pBackend>> backends_;
  bool character_fallback_ = true;
  CharacterIpaFallback fallback_;
};

struct LyricsOptions {
  bool leading_silence = false;
  bool trailing_silence = false;
};

/// Newline-segmented lyrics to an IPA token stream with one silence token
/// between consecutive non-blank lines. Punctuation is stripped; words follow
/// whitespace tokenisation. Throws kEmptyLyrics, kUnknownLanguage, kNoMapping.
TokenSequence LyricsToIpa(std::string_view raw_lyrics, const std::string& language,
                          const G2pRegistry& g2p, const Vocabulary& vocab = Vocabulary::Default(),
                          const LyricsOptions& options = {});

/// Non-blank lines after trimming, in order.
std::vector<std::string> SplitLyricLines(std::string_view raw_lyrics);
/// Removes punctuation codepoints; keeps letters, digits, IPA and marks.
std::string StripPunctuation(std::string_view word);

namespace utf8 {
std::vector<char32_t> Decode(std::string_view text);
std::string Encode(char32_t cp);
std::string Encode(const std::vector<char32_t>& cps);
}  // namespace utf8

}  // namespace lyricsync
