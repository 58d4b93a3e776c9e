// Runs against the toy models left behind by the acceptance driver.

#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "lyricsync/cascade.hpp"

using namespace lyricsync;
namespace fs = std::filesystem;

namespace {

struct Trained {
  AlignerModel sentence = AlignerModel::Load(std::string(LYRICSYNC_ARTIFACTS) + "/sentence.lswt");
  AlignerModel word = AlignerModel::Load(std::string(LYRICSYNC_ARTIFACTS) + "/word.lswt");
};

const Trained& Models() {
  static const Trained t;
  return t;
}

}  // namespace

TEST_CASE("two-line songs get both line onsets within two stacked frames") {
  SynthOptions opt;
  opt.min_lines = opt.max_lines = 2;
  const auto songs = SynthCorpus(5, 3003, Vocabulary::Default(), opt);
  for (const auto& song : songs) {
    const auto r = AlignSentences(StackFrames(song.features, 4), song.tokens, {&Models().sentence});
    REQUIRE(r.units.size() == 2);
    for (size_t i = 0; i < 2; ++i) {
      CHECK(std::abs(r.units[i].onset_sec - song.labels.sentences[i].start_sec) <= 0.256 + 1e-9);
    }
  }
}

TEST_CASE("three-word lines are aligned within three frames on average") {
  SynthOptions opt;
  opt.min_words = opt.max_words = 3;
  const auto songs = SynthCorpus(5, 3004, Vocabulary::Default(), opt);
  for (const auto& song : songs) {
    const double spf = song.features.seconds_per_frame();
    const auto& onsets = song.labels.sentences;
    const int f0 = std::max(0, static_cast<int>(std::ceil((onsets[0].start_sec - 0.5) / spf)));
    const int f1 = static_cast<int>(std::floor((onsets[1].start_sec + 0.5) / spf)) + 1;
    const auto r = AlignWords(SliceFrames(song.features, f0, f1), song.tokens.Sentence(0), {&Models().word}, f0 * spf, 0);
    REQUIRE(r.units.size() == 3);
    double mae = 0.0;
    for (size_t w = 0; w < 3; ++w) mae += std::abs(r.units[w].onset_sec - song.labels.words[w].start_sec) / 3.0;
    CHECK(mae < 0.096);
  }
}

TEST_CASE("pseudo-labelling keeps a subset that shrinks as the floor rises") {
  std::vector<TrainingItem> items;
  for (const auto& s : SynthCorpus(6, 3005)) {
    auto item = ToTrainingItem(s);
    item.labels = {};
    items.push_back(std::move(item));
  }
  const CascadeModels models{{&Models().sentence}, {&Models().word}};
  const auto all = PseudoLabel(models, items, 0.0);
  CHECK(all.size() == items.size());
  for (const auto& it : all) CHECK(it.labels.words.size() == it.tokens.word_starts.size());
  const auto strict = PseudoLabel(models, items, 0.999999);
  CHECK(strict.size() <= all.size());
}
