#include <filesystem>
#include <fstream>
#include <thread>

#include "doctest.h"
#include "lyricsync/datasets.hpp"
#include "lyricsync/error.hpp"

using namespace lyricsync;
namespace fs = std::filesystem;

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

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("lyricsync_ds_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& f) const { return (path / f).string(); }
};

void Write(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

SongLabels MachineLabels() {
  SongLabels l;
  l.sentences = {{10.0, "one two three"}, {12.0, "four five"}};
  l.words = {{10.0, "one"}, {10.8, "two"}, {11.5, "three"}, {12.4, "four"}, {13.0, "five"}};
  l.duration_sec = 20.0;
  return l;
}

void Seed(ReviewStore& store, const std::string& id = "song-a") {
  SongRecord r;
  r.id = id;
  r.audio_path = "/tmp/x.wav";
  r.lyrics_path = "/tmp/x.txt";
  r.duration_sec = 20.0;
  store.UpsertSong(r);
  store.ImportAlignment(id, MachineLabels(), "{\"song_id\":\"" + id + "\"}");
}

}  // namespace

TEST_CASE("status machine") {
  using S = SongStatus;
  CHECK(IsLegalTransition(S::kUnlabeled, S::kMachineLabeled));
  CHECK(IsLegalTransition(S::kMachineLabeled, S::kVerified));
  CHECK(IsLegalTransition(S::kMachineLabeled, S::kRejected));
  CHECK(IsLegalTransition(S::kRejected, S::kMachineLabeled));
  CHECK(IsLegalTransition(S::kVerified, S::kVerified));
  CHECK_FALSE(IsLegalTransition(S::kUnlabeled, S::kVerified));
  CHECK_FALSE(IsLegalTransition(S::kVerified, S::kMachineLabeled));
  CHECK_FALSE(IsLegalTransition(S::kRejected, S::kVerified));
  for (auto s : {S::kUnlabeled, S::kMachineLabeled, S::kVerified, S::kRejected}) CHECK(ParseStatus(StatusName(s)) == s);
  CHECK(CodeOf([] { ParseStatus("done"); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("manifest loading") {
  TempDir dir("manifest");
  Write(dir / "empty.jsonl", "");
  CHECK(LoadManifest(dir / "empty.jsonl").empty());

  Write(dir / "dup.jsonl",
        "{\"id\":\"a\",\"audio_path\":\"a.wav\",\"lyrics_path\":\"a.txt\"}\n"
        "{\"id\":\"a\",\"audio_path\":\"b.wav\",\"lyrics_path\":\"b.txt\"}\n");
  CHECK(CodeOf([&] { LoadManifest(dir / "dup.jsonl"); }) == ErrorCode::kDuplicateId);

  Write(dir / "missing.jsonl", "{\"id\":\"a\",\"lyrics_path\":\"a.txt\"}\n");
  try {
    LoadManifest(dir / "missing.jsonl");
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kParseError);
    CHECK(std::string(e.what()).find("audio_path") != std::string::npos);
    CHECK(std::string(e.what()).find(":1:") != std::string::npos);
  }

  Write(dir / "ok.jsonl",
        "{\"id\":\"a\",\"audio_path\":\"audio/a.wav\",\"lyrics_path\":\"a.txt\",\"language\":\"ko\","
        "\"duration_sec\":3.5,\"status\":\"machine_labeled\"}\n\n"
        "{\"id\":\"b\",\"feature_cache_path\":\"/abs/b.lsfc\",\"lyrics_path\":\"b.txt\"}\n");
  const auto recs = LoadManifest(dir / "ok.jsonl");
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].audio_path == (dir.path / "audio/a.wav").string());
  CHECK(recs[0].language == "ko");
  CHECK(recs[0].status == SongStatus::kMachineLabeled);
  CHECK(recs[1].feature_cache_path == "/abs/b.lsfc");
  CHECK(recs[1].language == "en");

  WriteManifest(dir / "copy.jsonl", recs);
  const auto again = LoadManifest(dir / "copy.jsonl");
  REQUIRE(again.size() == 2);
  CHECK(again[0].audio_path == recs[0].audio_path);
  CHECK(again[0].duration_sec == 3.5);
}

TEST_CASE("labels json round trip") {
  const auto l = MachineLabels();
  CHECK(SongLabels::FromJson(l.ToJson()) == l);
  const auto s = SongLabels::FromJson("{\"sentences\":[{\"start_sec\":1.5,\"text\":\"x\"}]}");
  CHECK(s.words.empty());
  CHECK_FALSE(s.duration_sec.has_value());
  CHECK(CodeOf([] { SongLabels::FromJson("{\"words\":[]}"); }) == ErrorCode::kParseError);
}

TEST_CASE("unit references") {
  CHECK(UnitRef::Parse("word:3").is_word);
  CHECK(UnitRef::Parse("word:3").index == 3);
  CHECK_FALSE(UnitRef::Parse("sentence:0").is_word);
  CHECK(UnitRef::Parse("sentence:0").ToString() == "sentence:0");
  for (const char* bad : {"word", "word:-1", "line:2", "word:x", ""}) {
    CHECK(CodeOf([&] { UnitRef::Parse(bad); }) == ErrorCode::kUnknownUnit);
  }
}

TEST_CASE("a correction updates labels and appends one audit entry") {
  TempDir dir("correct");
  ReviewStore store(dir.path.string());
  Seed(store);
  const size_t before = store.AuditLog().size();
  const auto r = store.RecordCorrection("song-a", "word:3", 12.1, "alice");
  CHECK(r.unit.start_sec == 12.1);
  CHECK(store.Labels("song-a").words[3].start_sec == 12.1);
  const auto log = store.AuditLog();
  REQUIRE(log.size() == before + 1);
  CHECK(log.back().kind == "correction");
  CHECK(log.back().reviewer == "alice");
  CHECK(log.back().old_onset == 12.4);
  CHECK(log.back().new_onset == 12.1);
  CHECK_FALSE(log.back().timestamp.empty());
  CHECK(store.MachineLabels("song-a").words[3].start_sec == 12.4);
}

TEST_CASE("sequential corrections keep the latest value and both entries") {
  TempDir dir("seq");
  ReviewStore store(dir.path.string());
  Seed(store);
  const size_t before = store.AuditLog().size();
  store.RecordCorrection("song-a", "word:3", 12.1, "alice");
  store.RecordCorrection("song-a", "word:3", 12.2, "bob");
  CHECK(store.Labels("song-a").words[3].start_sec == 12.2);
  CHECK(store.AuditLog().size() == before + 2);
}

TEST_CASE("correction errors") {
  TempDir dir("errors");
  ReviewStore store(dir.path.string());
  Seed(store);
  CHECK(CodeOf([&] { store.RecordCorrection("nope", "word:0", 1.0, "r"); }) == ErrorCode::kUnknownSong);
  CHECK(CodeOf([&] { store.RecordCorrection("song-a", "word:99", 1.0, "r"); }) == ErrorCode::kUnknownUnit);
  CHECK(CodeOf([&] { store.RecordCorrection("song-a", "bogus", 1.0, "r"); }) == ErrorCode::kUnknownUnit);
  CHECK(CodeOf([&] { store.RecordCorrection("song-a", "word:0", -1.0, "r"); }) == ErrorCode::kInvalidOnset);
  CHECK(CodeOf([&] { store.RecordCorrection("song-a", "word:0", 25.0, "r"); }) == ErrorCode::kInvalidOnset);
}

TEST_CASE("request ids deduplicate, including across reopen") {
  TempDir dir("dedupe");
  {
    ReviewStore store(dir.path.string());
    Seed(store);
    CHECK_FALSE(store.RecordCorrection("song-a", "word:1", 10.7, "r", "req-1").duplicate);
    CHECK(store.RecordCorrection("song-a", "word:1", 10.7, "r", "req-1").duplicate);
  }
  ReviewStore reopened(dir.path.string());
  CHECK(reopened.RecordCorrection("song-a", "word:1", 10.7, "r", "req-1").duplicate);
  int n = 0;
  for (const auto& e : reopened.AuditLog()) n += e.request_id == "req-1";
  CHECK(n == 1);
}

TEST_CASE("replaying the audit log reproduces current labels") {
  TempDir dir("replay");
  ReviewStore store(dir.path.string());
  Seed(store);
  store.RecordCorrection("song-a", "word:0", 9.9, "a");
  store.RecordCorrection("song-a", "sentence:1", 12.3, "a");
  store.RecordCorrection("song-a", "word:4", 13.3, "b");
  CHECK(ReplayCorrections(store.MachineLabels("song-a"), store.AuditLog(), "song-a") == store.Labels("song-a"));

  // A re-import fences off earlier corrections.
  store.SetStatus("song-a", SongStatus::kRejected, "b");
  store.ImportAlignment("song-a", MachineLabels(), "{}");
  store.RecordCorrection("song-a", "word:2", 11.6, "c");
  const auto replayed = ReplayCorrections(store.MachineLabels("song-a"), store.AuditLog(), "song-a");
  CHECK(replayed == store.Labels("song-a"));
  CHECK(replayed.words[0].start_sec == 10.0);
  CHECK(replayed.words[2].start_sec == 11.6);
}

TEST_CASE("status changes follow the state machine") {
  TempDir dir("status");
  ReviewStore store(dir.path.string());
  SongRecord r;
  r.id = "fresh";
  r.audio_path = "x.wav";
  r.lyrics_path = "x.txt";
  store.UpsertSong(r);
  CHECK(CodeOf([&] { store.SetStatus("fresh", SongStatus::kVerified); }) == ErrorCode::kIllegalTransition);
  Seed(store);
  CHECK(store.SetStatus("song-a", SongStatus::kVerified, "r") == SongStatus::kVerified);
  CHECK(store.FindSong("song-a")->status == SongStatus::kVerified);
  CHECK(CodeOf([&] { store.ImportAlignment("song-a", MachineLabels(), "{}"); }) == ErrorCode::kIllegalTransition);
  CHECK(CodeOf([&] { store.SetStatus("ghost", SongStatus::kVerified); }) == ErrorCode::kUnknownSong);
  ReviewStore reopened(dir.path.string());
  CHECK(reopened.FindSong("song-a")->status == SongStatus::kVerified);
}

TEST_CASE("mark_verified moves a corrected song to verified") {
  TempDir dir("verify");
  ReviewStore store(dir.path.string());
  Seed(store);
  store.RecordCorrection("song-a", "word:0", 9.8, "r", "", true);
  CHECK(store.FindSong("song-a")->status == SongStatus::kVerified);
}

TEST_CASE("concurrent corrections all land in the audit log") {
  TempDir dir("concurrent");
  ReviewStore store(dir.path.string());
  Seed(store, "s1");
  Seed(store, "s2");
  const size_t before = store.AuditLog().size();
  std::vector<std::thread> pool;
  for (int t = 0; t < 4; ++t) {
    pool.emplace_back([&, t] {
      for (int i = 0; i < 10; ++i) {
        store.RecordCorrection(t % 2 ? "s1" : "s2", "word:" + std::to_string(i % 5), 5.0 + i * 0.1, "r",
                               "t" + std::to_string(t) + "-" + std::to_string(i));
      }
    });
  }
  for (auto& th : pool) th.join();
  CHECK(store.AuditLog().size() == before + 40);
  for (const char* id : {"s1", "s2"}) {
    CHECK(ReplayCorrections(store.MachineLabels(id), store.AuditLog(), id) == store.Labels(id));
  }
}
