#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "lyricsync/error.hpp"
#include "lyricsync/training.hpp"

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

AlignmentMatrix Matrix(int rows, int cols, std::vector<double> logits) {
  return AlignmentMatrix::FromLogits(rows, cols, std::move(logits));
}

TrainTarget Target(std::vector<std::pair<int, int>> pairs, int frames) {
  TrainTarget t;
  t.target_frames = std::move(pairs);
  t.num_frames = frames;
  return t;
}

std::vector<TrainingItem> SmallCorpus(int n, uint64_t seed) {
  std::vector<TrainingItem> items;
  for (const auto& s : SynthCorpus(n, seed)) items.push_back(ToTrainingItem(s));
  return items;
}

TrainSpec SmallSpec(Level level, int steps) {
  TrainSpec spec = level == Level::kSentence ? TrainSpec::Sentence() : TrainSpec::Word();
  spec.batch_size = 2;
  spec.max_steps = steps;
  spec.learning_rate = 1e-3;
  spec.seed = 9;
  return spec;
}

}  // namespace

TEST_CASE("loss of a uniform row is log T") {
  const auto a = Matrix(1, 4, {0, 0, 0, 0});
  CHECK(AlignmentLoss(a, Target({{0, 2}}, 4)) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("loss of a confident correct row is near zero") {
  const auto a = Matrix(1, 3, {-50, 50, -50});
  CHECK(AlignmentLoss(a, Target({{0, 1}}, 3)) < 1e-12);
}

TEST_CASE("loss averages over supervised rows only") {
  // Independent softmax cross entropy per row.
  const std::vector<double> logits = {1.0, 2.0, 0.5, -1.0, 0.0, 3.0, 0.0, 0.0, 0.0};
  auto ce = [&](int r, int f) {
    double z = 0.0;
    for (int c = 0; c < 3; ++c) z += std::exp(logits[static_cast<size_t>(r * 3 + c)]);
    return -(logits[static_cast<size_t>(r * 3 + f)] - std::log(z));
  };
  const auto a = Matrix(3, 3, logits);
  const double expect = (ce(0, 1) + ce(1, 2)) / 2.0;
  CHECK(AlignmentLoss(a, Target({{0, 1}, {1, 2}}, 3)) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(AlignmentLoss(a, Target({{1, 2}, {0, 1}}, 3)) == doctest::Approx(expect).epsilon(1e-12));

  // Changing the unsupervised row leaves the loss untouched.
  auto other = logits;
  other[6] = 9.0;
  CHECK(AlignmentLoss(Matrix(3, 3, other), Target({{0, 1}, {1, 2}}, 3)) == doctest::Approx(expect).epsilon(1e-12));

  CHECK(CodeOf([&] { AlignmentLoss(a, Target({}, 3)); }) == ErrorCode::kNoSupervisedRows);
  CHECK(CodeOf([&] { AlignmentLoss(a, Target({{0, 1}}, 5)); }) == ErrorCode::kShapeMismatch);
}

TEST_CASE("differentiable loss agrees with the matrix loss") {
  const std::vector<double> logits = {0.3, -0.2, 1.1, 0.0, 2.0, -1.0};
  const auto t = Target({{0, 2}, {1, 0}}, 3);
  const auto v = nn::Var::Constant({2, 3}, logits);
  CHECK(AlignmentLoss(v, t).item() == doctest::Approx(AlignmentLoss(Matrix(2, 3, logits), t)).epsilon(1e-12));
}

TEST_CASE("targets come from word and sentence onsets") {
  const auto song = SynthCorpus(1, 3)[0];
  const double spf = song.features.seconds_per_frame();
  const auto words = MakeTarget(song.tokens, song.labels, Level::kWord, spf, song.features.num_frames);
  REQUIRE(words.target_frames.size() == song.tokens.word_starts.size());
  for (size_t w = 0; w < words.target_frames.size(); ++w) {
    CHECK(words.target_frames[w].first == song.tokens.word_starts[w]);
    CHECK(words.target_frames[w].second == static_cast<int>(std::lround(song.labels.words[w].start_sec / spf)));
  }
  const auto lines = MakeTarget(song.tokens, song.labels, Level::kSentence, spf, song.features.num_frames);
  CHECK(lines.rows() == song.tokens.sentence_starts);
  words.Validate();

  // A crop drops pairs outside its window and shifts the rest.
  const int first = words.target_frames[1].second;
  const auto crop = MakeTarget(song.tokens, song.labels, Level::kWord, spf, song.features.num_frames - first, first);
  CHECK(crop.target_frames.front().second == 0);
  CHECK(crop.target_frames.size() == words.target_frames.size() - 1);
}

TEST_CASE("labels lacking the requested level are rejected") {
  auto item = ToTrainingItem(SynthCorpus(1, 4)[0]);
  item.labels.words.clear();
  CHECK(CodeOf([&] { CheckItemLevel(item, Level::kWord); }) == ErrorCode::kDataLevelMismatch);
  AlignerModel model(ModelConfig::Toy(Level::kWord, 4), 1);
  CHECK(CodeOf([&] { Train(model, SmallSpec(Level::kWord, 1), {item}); }) == ErrorCode::kDataLevelMismatch);
}

TEST_CASE("zero steps leaves the weights unchanged") {
  AlignerModel model(ModelConfig::Toy(Level::kWord, 4), 1);
  const std::string before = model.Version();
  const auto r = Train(model, SmallSpec(Level::kWord, 0), SmallCorpus(2, 5));
  CHECK(r.log.empty());
  CHECK(model.Version() == before);
}

TEST_CASE("training is reproducible and reduces the loss") {
  const auto corpus = SmallCorpus(4, 6);
  const auto spec = SmallSpec(Level::kSentence, 12);
  AlignerModel a(ModelConfig::Toy(Level::kSentence, 4), 1), b(ModelConfig::Toy(Level::kSentence, 4), 1);
  const auto ra = Train(a, spec, corpus), rb = Train(b, spec, corpus);
  REQUIRE(ra.log.size() == 12);
  for (size_t i = 0; i < ra.log.size(); ++i) {
    CHECK(ra.log[i].step == static_cast<long>(i + 1));
    CHECK(ra.log[i].loss == rb.log[i].loss);
  }
  CHECK(a.Version() == b.Version());
  CHECK(ra.log.back().loss < ra.log.front().loss);
}

TEST_CASE("non-finite losses abort with context") {
  const auto corpus = SmallCorpus(1, 7);
  AlignerModel model(ModelConfig::Toy(Level::kSentence, 4), 1);
  auto spec = SmallSpec(Level::kSentence, 50);
  spec.learning_rate = 1e300;
  try {
    Train(model, spec, corpus);
    FAIL("expected DivergedLoss");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDivergedLoss);
    CHECK(std::string(e.what()).find(corpus[0].id) != std::string::npos);
  }
}

TEST_CASE("resuming from a checkpoint continues the same trajectory") {
  const auto corpus = SmallCorpus(3, 8);
  const auto spec = SmallSpec(Level::kWord, 6);
  const fs::path dir = fs::temp_directory_path() / "lyricsync_resume";
  fs::remove_all(dir);

  AlignerModel full(ModelConfig::Toy(Level::kWord, 4), 1);
  const auto ref = Train(full, spec, corpus);

  AlignerModel part(ModelConfig::Toy(Level::kWord, 4), 1);
  TrainOptions opt;
  opt.checkpoint_dir = (dir / "ckpt").string();
  opt.checkpoint_every = 1;
  opt.log_csv = (dir / "loss.csv").string();
  opt.stop_after = 3;
  const auto first = Train(part, spec, corpus, opt);
  CHECK(first.last_step == 3);

  AlignerModel resumed(ModelConfig::Toy(Level::kWord, 4), 99);
  opt.resume = true;
  opt.stop_after = -1;
  const auto second = Train(resumed, spec, corpus, opt);
  CHECK(second.first_step == 3);
  REQUIRE(second.log.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(second.log[i].step == ref.log[i + 3].step);
    CHECK(second.log[i].loss == doctest::Approx(ref.log[i + 3].loss).epsilon(1e-9));
  }
  CHECK(resumed.Version() == full.Version());
  fs::remove_all(dir);
}

TEST_CASE("stock training specs") {
  const auto s = TrainSpec::Sentence();
  CHECK(s.batch_size == 24);
  CHECK(s.learning_rate == 5e-4);
  CHECK(s.weight_decay == 1e-3);
  const auto w = TrainSpec::Word();
  CHECK(w.batch_size == 64);
  CHECK(w.learning_rate == 5e-4);
  CHECK(w.weight_decay == 1e-7);
  auto custom = TrainSpec::Word();
  custom.max_steps = 17;
  custom.augmentations = DefaultAugmentations();
  const auto back = TrainSpec::FromJson(custom.ToJson());
  CHECK(back.max_steps == 17);
  CHECK(back.augmentations.size() == custom.augmentations.size());
  CHECK(TrainSpec::FromJson("{\"level\":\"sentence\"}").batch_size == 24);
}

TEST_CASE("synthetic corpus is deterministic and well formed") {
  const auto a = SynthCorpus(3, 11), b = SynthCorpus(3, 11);
  REQUIRE(a.size() == 3);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].features.frames == b[i].features.frames);
    CHECK(a[i].tokens.tokens == b[i].tokens.tokens);
    a[i].tokens.Validate();
    CHECK(a[i].labels.words.size() == a[i].tokens.word_starts.size());
    CHECK(a[i].labels.sentences.size() == a[i].tokens.sentence_starts.size());
    for (size_t t = 1; t < a[i].token_onsets.size(); ++t) CHECK(a[i].token_onsets[t] > a[i].token_onsets[t - 1]);
  }
  CHECK(SynthCorpus(1, 12)[0].features.frames != a[0].features.frames);
}

TEST_CASE("noise-free synthesis reproduces the templates") {
  SynthOptions opt;
  opt.noise = 0.0;
  const auto song = SynthCorpus(1, 13, Vocabulary::Default(), opt)[0];
  const auto templates = SynthTemplates(opt);
  const int t0 = song.token_onsets[0];
  const int token = song.tokens.tokens[0];
  for (int f = 0; f < kMelBins; ++f) {
    CHECK(song.features.at(t0, f) == doctest::Approx(templates[static_cast<size_t>(token * kMelBins + f)]).epsilon(1e-5));
  }
}

TEST_CASE("written synthetic corpora load back for training") {
  const fs::path dir = fs::temp_directory_path() / "lyricsync_synth_write";
  fs::remove_all(dir);
  const auto songs = SynthCorpus(2, 14);
  const auto records = WriteSynthCorpus(dir.string(), songs);
  REQUIRE(records.size() == 2);
  const auto items = LoadTrainingItems(LoadManifest((dir / "manifest.jsonl").string()), G2pRegistry::WithBuiltins());
  REQUIRE(items.size() == 2);
  CHECK(items[0].tokens.tokens == songs[0].tokens.tokens);
  CHECK(items[0].labels.words.size() == songs[0].labels.words.size());
  CHECK(items[0].features.num_frames == songs[0].features.num_frames);
  fs::remove_all(dir);
}
