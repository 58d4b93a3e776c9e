#include <algorithm>
#include <atomic>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "json.hpp"
#include "lyricsync/error.hpp"
#include "lyricsync/text.hpp"

using namespace lyricsync;

namespace {

ErrorCode CodeOf(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kInvalidArgument;
}

int CountSilence(const TokenSequence& seq) {
  int n = 0;
  for (int t : seq.tokens) n += t == Vocabulary::Default().silence_id();
  return n;
}

}  // namespace

TEST_CASE("vocabulary has 76 entries with a bijective symbol map") {
  const auto& v = Vocabulary::Default();
  CHECK(v.size() == 76);
  CHECK(v.Symbol(v.silence_id()) == "<sil>");
  std::set<std::string> seen;
  for (int id = 0; id < v.size(); ++id) {
    CHECK(seen.insert(v.Symbol(id)).second);
    CHECK(v.Find(v.Symbol(id)) == id);
  }
}

TEST_CASE("fallback targets are vocabulary members and mapping is idempotent") {
  const auto& v = Vocabulary::Default();
  CHECK_FALSE(v.fallback_map().empty());
  for (const auto& [from, to] : v.fallback_map()) {
    CHECK(v.Contains(to));
    CHECK(MapOovSymbol(from, v) == v.Find(to));
    CHECK(MapOovSymbol(to, v) == v.Find(to));
  }
  for (int id = 0; id < v.size(); ++id) CHECK(MapOovSymbol(v.Symbol(id), v) == id);
  CHECK(CodeOf([&] { MapOovSymbol("\xe2\x98\x83", v); }) == ErrorCode::kNoMapping);
}

TEST_CASE("empty and blank lyrics are rejected") {
  const auto g2p = G2pRegistry::WithBuiltins();
  CHECK(CodeOf([&] { LyricsToIpa("", "en", g2p); }) == ErrorCode::kEmptyLyrics);
  CHECK(CodeOf([&] { LyricsToIpa("  \n\t\n", "en", g2p); }) == ErrorCode::kEmptyLyrics);
}

TEST_CASE("two lines are separated by exactly one silence token") {
  const auto g2p = G2pRegistry::WithBuiltins();
  const auto seq = LyricsToIpa("la\nla", "en", g2p);
  CHECK(seq.sentence_starts.size() == 2);
  CHECK(CountSilence(seq) == 1);
  const int sil_pos = seq.sentence_starts[1] - 1;
  CHECK(seq.tokens[static_cast<size_t>(sil_pos)] == Vocabulary::Default().silence_id());
  seq.Validate();
}

TEST_CASE("hello world matches the golden fixture") {
  std::ifstream in(std::string(LYRICSYNC_TEST_DATA) + "/hello_world.json");
  REQUIRE(in);
  const auto golden = nlohmann::json::parse(in);
  const auto g2p = G2pRegistry::WithBuiltins();
  const auto seq = LyricsToIpa(golden["text"].get<std::string>(), golden["language"].get<std::string>(), g2p);
  CHECK(seq.tokens == golden["token_ids"].get<std::vector<int>>());
  CHECK(seq.word_starts == golden["word_starts"].get<std::vector<int>>());
  CHECK(seq.sentence_starts == golden["sentence_starts"].get<std::vector<int>>());
  CHECK(seq.source_words == std::vector<std::string>{"hello", "world"});
  CHECK(seq.language_tag == "en");
}

TEST_CASE("S non-blank lines give S sentences and S-1 separators") {
  const auto g2p = G2pRegistry::WithBuiltins();
  const std::vector<std::string> lines = {"the night is young", "we sing along", "", "hold on, hold on!",
                                          "never let go", "ooh"};
  for (size_t n = 1; n <= lines.size(); ++n) {
    std::string text;
    int nonblank = 0;
    for (size_t i = 0; i < n; ++i) {
      text += lines[i] + "\n";
      nonblank += !lines[i].empty();
    }
    const auto seq = LyricsToIpa(text, "en", g2p);
    CHECK(static_cast<int>(seq.sentence_starts.size()) == nonblank);
    CHECK(CountSilence(seq) == nonblank - 1);
    seq.Validate();
    for (int s : seq.sentence_starts) {
      CHECK(std::find(seq.word_starts.begin(), seq.word_starts.end(), s) != seq.word_starts.end());
    }
  }
}

TEST_CASE("punctuation is stripped and digits are spoken") {
  const auto g2p = G2pRegistry::WithBuiltins();
  const auto a = LyricsToIpa("hello, world!", "en", g2p);
  const auto b = LyricsToIpa("hello world", "en", g2p);
  CHECK(a.tokens == b.tokens);
  CHECK(a.source_words == std::vector<std::string>{"hello", "world"});
  const auto d = LyricsToIpa("7", "en", g2p);
  CHECK(d.size() > 0);
}

TEST_CASE("optional leading and trailing silence") {
  const auto g2p = G2pRegistry::WithBuiltins();
  LyricsOptions opt;
  opt.leading_silence = opt.trailing_silence = true;
  const auto seq = LyricsToIpa("la", "en", g2p, Vocabulary::Default(), opt);
  const int sil = Vocabulary::Default().silence_id();
  CHECK(seq.tokens.front() == sil);
  CHECK(seq.tokens.back() == sil);
  CHECK(seq.word_starts[0] == 1);
}

TEST_CASE("korean and raw ipa inputs stay inside the vocabulary") {
  const auto g2p = G2pRegistry::WithBuiltins();
  const auto ko = LyricsToIpa("\xec\x82\xac\xeb\x9e\x91\xed\x95\xb4 \xeb\x84\x88\xeb\xa5\xbc", "ko", g2p);
  ko.Validate();
  CHECK(ko.word_starts.size() == 2);
  const auto ipa = LyricsToIpa("həˈloʊ", "ipa", g2p);
  CHECK(ipa.tokens == std::vector<int>{15, 36, 40, 21, 32, 33});
}

TEST_CASE("unknown language uses the character fallback unless disabled") {
  auto g2p = G2pRegistry::WithBuiltins();
  const auto seq = LyricsToIpa("bonjour monde", "fr", g2p);
  CHECK(seq.word_starts.size() == 2);
  g2p.set_character_fallback(false);
  CHECK(CodeOf([&] { LyricsToIpa("bonjour", "fr", g2p); }) == ErrorCode::kUnknownLanguage);
}

TEST_CASE("out-of-vocabulary symbols are mapped through the fallback table") {
  const auto& v = Vocabulary::Default();
  REQUIRE_FALSE(v.fallback_map().empty());
  const auto& [oov, target] = *v.fallback_map().begin();
  const auto ids = SegmentIpa(oov, v);
  REQUIRE(ids.size() == 1);
  CHECK(ids[0] == v.Find(target));
}

TEST_CASE("sentence extraction yields a standalone line") {
  const auto g2p = G2pRegistry::WithBuiltins();
  const auto seq = LyricsToIpa("hello world\nla la la", "en", g2p);
  const auto line = seq.Sentence(1);
  CHECK(line.sentence_starts == std::vector<int>{0});
  CHECK(line.word_starts.size() == 3);
  CHECK(line.word_starts[0] == 0);
  const auto first = seq.Sentence(0);
  CHECK(first.tokens.back() != Vocabulary::Default().silence_id());
  CHECK(seq.SentenceWords(1) == std::pair<int, int>{2, 5});
  CHECK(seq.WordOfToken(seq.sentence_starts[1] - 1) == -1);
}

TEST_CASE("token sequence validation names violated invariants") {
  TokenSequence bad;
  bad.tokens = {1, 2, 3};
  bad.word_starts = {0, 2};
  bad.sentence_starts = {1};
  bad.source_words = {"a", "b"};
  CHECK(CodeOf([&] { bad.Validate(); }) == ErrorCode::kInvalidArgument);
  bad.sentence_starts = {0};
  bad.source_words = {"a"};
  CHECK(CodeOf([&] { bad.Validate(); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("conversion is deterministic and safe across threads") {
  const auto g2p = G2pRegistry::WithBuiltins();
  const std::string text = "some words to sing\nand some more";
  const auto ref = LyricsToIpa(text, "en", g2p);
  std::vector<std::thread> pool;
  std::atomic<int> mismatches{0};
  for (int t = 0; t < 4; ++t) {
    pool.emplace_back([&] {
      for (int i = 0; i < 20; ++i) mismatches += LyricsToIpa(text, "en", g2p).tokens != ref.tokens;
    });
  }
  for (auto& th : pool) th.join();
  CHECK(mismatches == 0);
}
