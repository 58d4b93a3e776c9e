// Aligner model: shapes, cross-correlation oracle, decoding, persistence.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "lyricsync/error.hpp"
#include "lyricsync/model.hpp"

using namespace lyricsync;
using nn::Var;

namespace {

MelFeatures RandomFeatures(int frames, int stack, std::mt19937& rng) {
  MelFeatures f;
  f.num_frames = frames;
  f.stack_factor = stack;
  std::normal_distribution<float> dist(-3.0f, 1.0f);
  f.frames.resize(static_cast<size_t>(frames) * f.num_bins());
  for (auto& v : f.frames) v = dist(rng);
  return f;
}

std::vector<int> RandomTokens(int n, std::mt19937& rng) {
  std::uniform_int_distribution<int> dist(0, 75);
  std::vector<int> t(n);
  for (auto& v : t) v = dist(rng);
  return t;
}

Var RandomVar(nn::Shape shape, std::mt19937& rng) {
  std::normal_distribution<double> dist;
  std::vector<double> v(nn::NumElements(shape));
  for (auto& x : v) x = dist(rng);
  return Var::Constant(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("stock configs satisfy their invariants") {
  const auto s = ModelConfig::Sentence();
  const auto w = ModelConfig::Word();
  CHECK(s.c_encoder == 256);
  CHECK(s.unet_channels == std::vector<int>{32, 64, 128, 256});
  CHECK(s.n_mels_effective == 320);
  CHECK(w.c_encoder == 512);
  CHECK(w.unet_channels == std::vector<int>{32, 64, 128});
  CHECK(w.n_mels_effective == 80);
  CHECK(s.c_in == 8);
  s.Validate();
  w.Validate();
  auto bad = w;
  bad.unet_channels = {32, 48};
  CHECK_THROWS_AS(bad.Validate(), Error);
  bad.unet_channels = {16, 32};
  CHECK_THROWS_AS(bad.Validate(), Error);
  CHECK(ModelConfig::FromJson(s.ToJson()) == s);
}

TEST_CASE("encoder output shapes") {
  std::mt19937 rng(1);
  AlignerModel model(ModelConfig::Toy(Level::kWord, 8, 2, 3), 3);
  auto tokens = RandomTokens(7, rng);
  CHECK(model.EncodeText(tokens).shape() == nn::Shape{2, 8, 7});
  std::vector<int> one = {5};
  CHECK(model.EncodeText(one).shape() == nn::Shape{2, 8, 1});
  auto feats = RandomFeatures(50, 1, rng);
  CHECK(model.EncodeAudio(feats).shape() == nn::Shape{2, 8, 50});

  std::vector<int> bad = {3, 76};
  CHECK_THROWS_WITH_AS(model.EncodeText(bad), doctest::Contains("TokenOutOfRange"), Error);
  AlignerModel sentence(ModelConfig::Toy(Level::kSentence, 8, 2, 2));
  CHECK_THROWS_WITH_AS(sentence.EncodeAudio(feats), doctest::Contains("StackFactorMismatch"), Error);
}

TEST_CASE("encoders are deterministic and finite") {
  std::mt19937 rng(2);
  AlignerModel model(ModelConfig::Toy(Level::kWord), 11);
  auto tokens = RandomTokens(9, rng);
  nn::NoGradGuard guard;
  const auto a = model.EncodeText(tokens), b = model.EncodeText(tokens);
  CHECK(std::equal(a.value().begin(), a.value().end(), b.value().begin()));
  MelFeatures zeros = RandomFeatures(20, 1, rng);
  std::fill(zeros.frames.begin(), zeros.frames.end(), 0.0f);
  const auto z = model.EncodeAudio(zeros);
  for (double v : z.value()) REQUIRE(std::isfinite(v));
}

TEST_CASE("cross-correlation closed forms") {
  // All ones with C_enc = 2: every inner product equals 2.
  auto text = Var::Constant({1, 2, 3}, std::vector<double>(6, 1.0));
  auto audio = Var::Constant({1, 2, 4}, std::vector<double>(8, 1.0));
  auto m = CrossCorrelate(text, audio);
  CHECK(m.shape() == nn::Shape{1, 3, 4});
  for (double v : m.value()) CHECK(v == 2.0);

  // Text column (1, 0) against audio columns (0, x): row of zeros.
  auto t2 = Var::Constant({1, 2, 1}, {1.0, 0.0});
  auto a2 = Var::Constant({1, 2, 3}, {0.0, 0.0, 0.0, 3.0, -1.0, 2.0});
  const auto m2 = CrossCorrelate(t2, a2);
  for (double v : m2.value()) CHECK(v == 0.0);

  CHECK_THROWS_AS(CrossCorrelate(Var::Zeros({2, 3, 4}), Var::Zeros({2, 4, 4})), Error);
  CHECK_THROWS_AS(CrossCorrelate(Var::Zeros({2, 3, 4}), Var::Zeros({1, 3, 4})), Error);
}

TEST_CASE("cross-correlation matches triple loop on a small instance") {
  std::mt19937 rng(3);
  auto text = RandomVar({2, 3, 4}, rng), audio = RandomVar({2, 3, 5}, rng);
  auto m = CrossCorrelate(text, audio);
  for (int c = 0; c < 2; ++c)
    for (int l = 0; l < 4; ++l)
      for (int t = 0; t < 5; ++t) {
        double s = 0;
        for (int k = 0; k < 3; ++k) s += text.value()[(c * 3 + k) * 4 + l] * audio.value()[(c * 3 + k) * 5 + t];
        CHECK(m.value()[(c * 4 + l) * 5 + t] == doctest::Approx(s).epsilon(1e-12));
      }
}

TEST_CASE("predictor pads and crops arbitrary lengths") {
  std::mt19937 rng(4);
  AlignerModel model(ModelConfig::Toy(Level::kWord, 8, 2, 3), 5);
  nn::NoGradGuard guard;
  CHECK(PaddedLength(17, 3) == 24);
  CHECK(PaddedLength(16, 3) == 16);
  CHECK(PaddedLength(1, 2) == 4);
  CHECK(model.PredictAlignment(RandomVar({2, 16, 64}, rng)).shape() == nn::Shape{16, 64});
  CHECK(model.PredictAlignment(RandomVar({2, 17, 13}, rng)).shape() == nn::Shape{17, 13});
  CHECK(model.PredictAlignment(RandomVar({2, 1, 1}, rng)).shape() == nn::Shape{1, 1});
  CHECK_THROWS_WITH_AS(model.PredictAlignment(RandomVar({3, 4, 4}, rng)), doctest::Contains("ShapeMismatch"), Error);
  CHECK_THROWS_WITH_AS(model.PredictAlignment(Var::Zeros({2, 0, 4})), doctest::Contains("InputTooShort"), Error);

  auto a = model.Align(RandomTokens(5, rng), RandomFeatures(30, 1, rng));
  for (int r = 0; r < a.rows; ++r) {
    double s = 0;
    for (int c = 0; c < a.cols; ++c) {
      CHECK(a.prob(r, c) >= 0.0);
      s += a.prob(r, c);
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("reflect index") {
  CHECK(ReflectIndex(5, 5) == 3);
  CHECK(ReflectIndex(-1, 5) == 1);
  CHECK(ReflectIndex(9, 3) == 1);  // 0 1 2 1 0 1 2 1 0 [1]
  CHECK(ReflectIndex(7, 1) == 0);
}

TEST_CASE("decode onsets") {
  auto a = AlignmentMatrix::FromLogits(2, 3, {std::log(0.1), std::log(0.9), -1e9, 0.0, 0.0, 0.0});
  std::vector<int> rows = {0};
  auto d = DecodeOnsets(a, rows, 512.0 / 16000.0);
  CHECK(d[0].frame == 1);
  CHECK(d[0].onset_sec == doctest::Approx(0.032));
  CHECK(d[0].confidence == doctest::Approx(0.9));

  auto u = AlignmentMatrix::FromLogits(1, 4, {0.3, 0.3, 0.3, 0.3});
  std::vector<int> r0 = {0};
  auto du = DecodeOnsets(u, r0, 1.0);
  CHECK(du[0].frame == 0);
  CHECK(du[0].confidence == doctest::Approx(0.25));

  // Strictly increasing transforms keep the argmax.
  auto t = AlignmentMatrix::FromLogits(1, 4, {0.1, 2.0, -1.0, 1.5});
  auto t3 = AlignmentMatrix::FromLogits(1, 4, {std::pow(0.1, 3), 8.0, -1.0, std::pow(1.5, 3)});
  CHECK(DecodeOnsets(t, r0, 1.0)[0].frame == DecodeOnsets(t3, r0, 1.0)[0].frame);
}

TEST_CASE("ensemble logits") {
  std::mt19937 rng(5);
  std::normal_distribution<double> dist;
  auto make = [&] {
    std::vector<double> v(12);
    for (auto& x : v) x = dist(rng);
    return AlignmentMatrix::FromLogits(3, 4, v);
  };
  const auto a = make(), b = make(), c = make();
  std::vector<AlignmentMatrix> three = {a, b, c};
  const auto e = EnsembleLogits(three);
  for (size_t i = 0; i < 12; ++i) CHECK(e.logits[i] == doctest::Approx((a.logits[i] + b.logits[i] + c.logits[i]) / 3).epsilon(1e-12));
  std::vector<AlignmentMatrix> perm = {c, a, b};
  const auto ep = EnsembleLogits(perm);
  for (size_t i = 0; i < 12; ++i) CHECK(ep.logits[i] == doctest::Approx(e.logits[i]).epsilon(1e-12));

  std::vector<AlignmentMatrix> same = {a, a, a};
  for (size_t i = 0; i < 12; ++i) CHECK(EnsembleLogits(same).logits[i] == doctest::Approx(a.logits[i]));

  std::vector<double> neg(a.logits);
  for (auto& x : neg) x = -x;
  std::vector<AlignmentMatrix> sym = {a, AlignmentMatrix::FromLogits(3, 4, neg)};
  for (double p : EnsembleLogits(sym).probs) CHECK(p == doctest::Approx(0.25));

  std::vector<AlignmentMatrix> none;
  CHECK_THROWS_WITH_AS(EnsembleLogits(none), doctest::Contains("EmptyEnsemble"), Error);
  std::vector<AlignmentMatrix> mixed = {a, AlignmentMatrix::FromLogits(4, 3, a.logits)};
  CHECK_THROWS_WITH_AS(EnsembleLogits(mixed), doctest::Contains("ShapeMismatch"), Error);
}

TEST_CASE("weights round trip") {
  std::mt19937 rng(6);
  AlignerModel model(ModelConfig::Toy(Level::kSentence, 8, 2, 2), 9);
  std::vector<double> mean(320, 0.5), sd(320, 2.0);
  model.SetFeatureNormalization(mean, sd);
  const auto path = (std::filesystem::temp_directory_path() / "lyricsync_test_weights.bin").string();
  model.Save(path);
  const auto loaded = AlignerModel::Load(path);
  CHECK(loaded.config() == model.config());
  CHECK(loaded.Version() == model.Version());
  auto tokens = RandomTokens(6, rng);
  auto feats = RandomFeatures(12, 4, rng);
  CHECK(loaded.Align(tokens, feats).logits == model.Align(tokens, feats).logits);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(AlignerModel::Load(path), Error);
}
