#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "lyricsync/cascade.hpp"
#include "lyricsync/cli.hpp"
#include "lyricsync/datasets.hpp"

using namespace lyricsync;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

Run Cli(std::vector<std::string> args) {
  args.insert(args.begin(), "lyricsync");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = RunCli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// A synthetic corpus plus two tiny trained models, shared by the tests below.
struct Workspace {
  fs::path root = fs::temp_directory_path() / "lyricsync_cli";
  std::string corpus, sentence, word;

  Workspace() {
    fs::remove_all(root);
    corpus = (root / "corpus").string();
    REQUIRE(Cli({"synth", "--n", "5", "--seed", "3", "--out", corpus}).code == kExitOk);
    for (const char* level : {"sentence", "word"}) {
      const auto out = (root / level).string();
      const auto r = Cli({"train", "--level", level, "--manifest", Manifest(), "--out", out, "--model", "toy",
                          "--c-encoder", "4", "--steps", "2", "--batch-size", "2", "--seed", "1"});
      REQUIRE_MESSAGE(r.code == kExitOk, r.err);
      (std::string(level) == "sentence" ? sentence : word) = out + "/weights.lswt";
    }
  }
  ~Workspace() { fs::remove_all(root); }
  std::string Manifest() const { return corpus + "/manifest.jsonl"; }
  std::string Path(const std::string& name) const { return (root / name).string(); }
};

Workspace& Shared() {
  static Workspace ws;
  return ws;
}

}  // namespace

TEST_CASE("synth writes a loadable corpus") {
  auto& ws = Shared();
  const auto records = LoadManifest(ws.Manifest());
  CHECK(records.size() == 5);
  for (const auto& r : records) {
    CHECK(fs::exists(r.feature_cache_path));
    CHECK(fs::exists(r.labels_path));
  }
}

TEST_CASE("train reports its loss and writes artifacts") {
  auto& ws = Shared();
  CHECK(fs::exists(ws.sentence));
  CHECK(fs::exists(fs::path(ws.word).parent_path() / "loss.csv"));
  CHECK(fs::exists(fs::path(ws.word).parent_path() / "train_spec.json"));
}

TEST_CASE("train resumes after an interruption") {
  auto& ws = Shared();
  const auto out = ws.Path("resume");
  const std::vector<std::string> base = {"train", "--level", "word", "--manifest", ws.Manifest(), "--out", out,
                                         "--model", "toy", "--c-encoder", "4", "--steps", "4", "--batch-size", "2",
                                         "--checkpoint-every", "1"};
  auto first = base;
  first.insert(first.end(), {"--stop-after", "2"});
  REQUIRE(Cli(first).code == kExitOk);
  auto second = base;
  second.push_back("--resume");
  const auto r = Cli(second);
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("steps 2..4") != std::string::npos);
  std::ifstream csv(out + "/loss.csv");
  int rows = 0;
  for (std::string line; std::getline(csv, line);) rows += !line.empty();
  CHECK(rows == 1 + 4);
}

TEST_CASE("train rejects labels without the requested level") {
  auto& ws = Shared();
  auto records = LoadManifest(ws.Manifest());
  auto labels = SongLabels::Load(records[0].labels_path);
  labels.words.clear();
  const auto stripped = ws.Path("sentences_only.json");
  labels.Save(stripped);
  records[0].labels_path = stripped;
  records.resize(1);
  const auto manifest = ws.Path("sentences_only.jsonl");
  WriteManifest(manifest, records);
  const auto r = Cli({"train", "--level", "word", "--manifest", manifest, "--out", ws.Path("mismatch"), "--model",
                      "toy", "--steps", "1"});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("DataLevelMismatch") != std::string::npos);
}

TEST_CASE("align writes json and lrc and is deterministic") {
  auto& ws = Shared();
  const auto out1 = ws.Path("align1"), out2 = ws.Path("align2");
  for (const auto& out : {out1, out2}) {
    const auto r = Cli({"align", "--manifest", ws.Manifest(), "--weights-sentence", ws.sentence, "--weights-word",
                        ws.word, "--out-dir", out, "--lrc"});
    REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  }
  for (const auto& rec : LoadManifest(ws.Manifest())) {
    const auto a = ReadTextFile(out1 + "/" + rec.id + ".json");
    CHECK(a == ReadTextFile(out2 + "/" + rec.id + ".json"));
    CHECK(fs::exists(out1 + "/" + rec.id + ".lrc"));
    const auto parsed = json::parse(a);
    for (const char* key : {"song_id", "sentences", "words", "segments", "song_confidence", "duration_sec",
                            "model_versions"}) {
      CHECK(parsed.contains(key));
    }
  }
}

TEST_CASE("align reports per-song failures with exit code 2") {
  auto& ws = Shared();
  auto records = LoadManifest(ws.Manifest());
  records.resize(2);
  records[1].feature_cache_path = ws.Path("missing.lsfc");
  const auto manifest = ws.Path("partial.jsonl");
  WriteManifest(manifest, records);
  const auto out = ws.Path("partial");
  const auto r = Cli({"align", "--manifest", manifest, "--weights-sentence", ws.sentence, "--weights-word", ws.word,
                      "--out-dir", out});
  CHECK(r.code == kExitPartial);
  CHECK(fs::exists(out + "/" + records[0].id + ".json"));
  const auto failures = json::parse(ReadTextFile(out + "/failures.json"));
  REQUIRE(failures.size() == 1);
  CHECK(failures[0]["song_id"] == records[1].id);
}

TEST_CASE("usage errors exit with code 1") {
  auto& ws = Shared();
  CHECK(Cli({"align", "--manifest", ws.Manifest(), "--out-dir", ws.Path("x")}).code == kExitUsage);
  CHECK(Cli({"eval", "--predictions", "a", "--references", "b", "--bogus"}).code == kExitUsage);
  CHECK(Cli({"frobnicate"}).code == kExitUsage);
  CHECK(Cli({"--help"}).code == kExitOk);
}

TEST_CASE("eval of references against themselves is perfect") {
  auto& ws = Shared();
  const auto preds = ws.Path("identity");
  fs::create_directories(preds);
  for (const auto& rec : LoadManifest(ws.Manifest())) {
    const auto labels = SongLabels::Load(rec.labels_path);
    SongAlignment a;
    a.song_id = rec.id;
    a.duration_sec = *labels.duration_sec;
    a.song_confidence = 0.9;
    for (size_t i = 0; i < labels.sentences.size(); ++i) {
      a.sentences.units.push_back({labels.sentences[i].text, labels.sentences[i].start_sec, 0.9, int(i)});
    }
    for (const auto& w : labels.words) a.words.units.push_back({w.text, w.start_sec, 0.9, 0});
    WriteTextFile(preds + "/" + rec.id + ".json", a.ToJson());
  }
  const auto report = ws.Path("identity_report");
  const auto r = Cli({"eval", "--predictions", preds, "--references", ws.Manifest(), "--taus", "0.2,0.3", "--out",
                      report});
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  CHECK(r.out.find("MAE 0\n") != std::string::npos);
  CHECK(r.out.find("Mauch_0.2 1\n") != std::string::npos);
  CHECK(r.out.find("Mauch_0.3 1\n") != std::string::npos);
  for (const char* f : {"report.json", "per_song.csv", "triage.csv", "histogram.svg", "threshold.svg", "pr_curve.svg"}) {
    CHECK(fs::exists(report + "/" + f));
  }
}

TEST_CASE("triage rejects the requested fraction") {
  auto& ws = Shared();
  const auto out = ws.Path("triage_align");
  REQUIRE(Cli({"align", "--manifest", ws.Manifest(), "--weights-sentence", ws.sentence, "--weights-word", ws.word,
               "--out-dir", out})
              .code == kExitOk);
  const auto song = Cli({"triage", "--predictions", out, "--references", ws.Manifest(), "--reject-fraction", "0.2"});
  REQUIRE(song.code == kExitOk);
  CHECK(song.out.find("accepted 4 rejected 1 (song level)") != std::string::npos);
  CHECK(song.out.find("full_mae") != std::string::npos);
  const auto none = Cli({"triage", "--predictions", out, "--reject-fraction", "0"});
  CHECK(none.out.find("rejected 0") != std::string::npos);
  const auto report = ws.Path("triage.json");
  const auto words = Cli({"triage", "--predictions", out, "--references", ws.Manifest(), "--reject-fraction", "0.1",
                          "--unit", "word", "--out", report});
  REQUIRE(words.code == kExitOk);
  const auto j = json::parse(ReadTextFile(report));
  const size_t total = j["accepted"].size() + j["rejected"].size();
  CHECK(j["rejected"].size() == static_cast<size_t>(std::llround(0.1 * total)));
  CHECK(Cli({"triage", "--predictions", out}).code == kExitUsage);
}
