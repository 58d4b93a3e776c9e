#include <cmath>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "lyricsync/cascade.hpp"
#include "lyricsync/error.hpp"

using namespace lyricsync;
namespace fs = std::filesystem;

namespace {

struct ToyCascade {
  AlignerModel sentence{ModelConfig::Toy(Level::kSentence, 4), 1};
  AlignerModel word{ModelConfig::Toy(Level::kWord, 4), 2};
  CascadeModels models() const { return {{&sentence}, {&word}}; }
};

AlignmentResult Onsets(std::vector<double> onsets) {
  AlignmentResult r;
  r.level = Level::kSentence;
  for (size_t i = 0; i < onsets.size(); ++i) r.units.push_back({"l" + std::to_string(i), onsets[i], 1.0, int(i)});
  return r;
}

}  // namespace

TEST_CASE("segments pad each line and end at the next line") {
  const auto s = SliceSegments(Onsets({10.0, 20.0}), 35.0);
  REQUIRE(s.size() == 2);
  CHECK(s[0].start_sec == doctest::Approx(9.5));
  CHECK(s[0].end_sec == doctest::Approx(20.5));
  CHECK(s[1].start_sec == doctest::Approx(19.5));
  CHECK(s[1].end_sec == doctest::Approx(35.0));

  const auto one = SliceSegments(Onsets({3.0}), 12.0);
  REQUIRE(one.size() == 1);
  CHECK(one[0].start_sec == doctest::Approx(2.5));
  CHECK(one[0].end_sec == doctest::Approx(12.0));

  CHECK(SliceSegments(Onsets({0.2, 5.0}), 10.0)[0].start_sec == 0.0);
  // An out-of-order next onset does not shrink the segment below its own onset.
  const auto crossed = SliceSegments(Onsets({8.0, 6.0}), 10.0);
  CHECK(crossed[0].end_sec == doctest::Approx(8.5));
}

TEST_CASE("segment frames cover the segment") {
  const double spf = 512.0 / 16000.0;
  const Segment seg{0, 9.5, 20.5};
  const auto [f0, f1] = SegmentFrames(seg, spf, 2000);
  CHECK(f0 * spf >= seg.start_sec - 1e-9);
  CHECK((f0 - 1) * spf < seg.start_sec);
  CHECK((f1 - 1) * spf <= seg.end_sec + 1e-9);
  CHECK(f1 * spf > seg.end_sec);
  CHECK(SegmentFrames(seg, spf, 100).second == 100);
}

TEST_CASE("word onsets shift by the segment offset") {
  ToyCascade toy;
  const auto song = SynthCorpus(1, 21)[0];
  const auto line = song.tokens.Sentence(0);
  const auto feats = SliceFrames(song.features, 0, 120);
  const auto a = AlignWords(feats, line, {&toy.word}, 0.0, 0);
  const auto b = AlignWords(feats, line, {&toy.word}, 12.5, 3);
  REQUIRE(a.units.size() == line.word_starts.size());
  for (size_t i = 0; i < a.units.size(); ++i) {
    CHECK(b.units[i].onset_sec == doctest::Approx(a.units[i].onset_sec + 12.5));
    CHECK(b.units[i].confidence == a.units[i].confidence);
    CHECK(b.units[i].segment_id == 3);
  }
}

TEST_CASE("cascade output is contained, deterministic and serialisable") {
  ToyCascade toy;
  const auto song = SynthCorpus(1, 22)[0];
  const double duration = song.features.num_frames * song.features.seconds_per_frame();
  CascadeOptions opt;
  opt.keep_matrices = true;
  const auto a = AlignSongFeatures(song.id, song.features, duration, song.tokens, toy.models(), opt);
  const auto b = AlignSongFeatures(song.id, song.features, duration, song.tokens, toy.models(), opt);
  CHECK(a.ToJson() == b.ToJson());
  REQUIRE(a.sentences.units.size() == song.tokens.sentence_starts.size());
  REQUIRE(a.words.units.size() == song.tokens.word_starts.size());
  REQUIRE(a.segments.size() == a.sentences.units.size());
  for (const auto& w : a.words.units) {
    const auto& seg = a.segments[static_cast<size_t>(w.segment_id)];
    CHECK(w.onset_sec >= seg.start_sec - 1e-9);
    CHECK(w.onset_sec <= seg.end_sec + 1e-9);
    CHECK(w.confidence >= 0.0);
    CHECK(w.confidence <= 1.0);
  }
  double mean = 0.0;
  for (const auto& s : a.sentences.units) mean += s.confidence;
  CHECK(a.song_confidence == doctest::Approx(mean / a.sentences.units.size()));
  CHECK(a.model_versions.size() == 2);

  const auto back = SongAlignment::FromJson(a.ToJson());
  CHECK(back.ToJson() == a.ToJson());

  const std::string lrc = a.ToLrc();
  int lines = 0;
  std::istringstream in(lrc);
  for (std::string l; std::getline(in, l);) lines += !l.empty();
  CHECK(lines == static_cast<int>(a.sentences.units.size()));
  CHECK(lrc.rfind("[", 0) == 0);

  const auto labels = a.ToLabels();
  CHECK(labels.words.size() == a.words.units.size());
  CHECK(labels.duration_sec == duration);

  REQUIRE(a.sentences.matrix.has_value());
  const auto path = (fs::temp_directory_path() / "lyricsync_matrix.lsam").string();
  WriteMatrix(path, *a.sentences.matrix);
  const auto m = ReadMatrix(path);
  CHECK(m.rows == a.sentences.matrix->rows);
  CHECK(m.cols == a.sentences.matrix->cols);
  for (size_t i = 0; i < m.probs.size(); i += 7) CHECK(m.probs[i] == doctest::Approx(a.sentences.matrix->probs[i]).epsilon(1e-6));
  fs::remove(path);
}

TEST_CASE("monotonic option orders onsets within a line") {
  ToyCascade toy;
  const auto song = SynthCorpus(1, 23)[0];
  const double duration = song.features.num_frames * song.features.seconds_per_frame();
  CascadeOptions opt;
  opt.monotonic = true;
  const auto a = AlignSongFeatures(song.id, song.features, duration, song.tokens, toy.models(), opt);
  for (size_t i = 1; i < a.words.units.size(); ++i) {
    if (a.words.units[i].segment_id == a.words.units[i - 1].segment_id) {
      CHECK(a.words.units[i].onset_sec >= a.words.units[i - 1].onset_sec);
    }
  }
}

TEST_CASE("lrc timestamps") {
  CHECK(FormatLrcTime(0.0) == "00:00.00");
  CHECK(FormatLrcTime(75.256) == "01:15.26");
}

TEST_CASE("cascade errors") {
  ToyCascade toy;
  CascadeModels none;
  CHECK_THROWS_AS(none.Validate(), Error);
  CascadeModels swapped{{&toy.word}, {&toy.sentence}};
  CHECK_THROWS_AS(swapped.Validate(), Error);

  SongRecord rec;
  rec.id = "blank";
  rec.feature_cache_path = "/nonexistent.lsfc";
  try {
    AlignSong(rec, "   \n", G2pRegistry::WithBuiltins(), toy.models());
    FAIL("expected EmptyLyrics");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kEmptyLyrics);
    CHECK(std::string(e.what()).find("blank: ") != std::string::npos);
  }
}
