#include <cmath>
#include <numbers>

#include "doctest.h"
#include "lyricsync/augment.hpp"
#include "lyricsync/error.hpp"

using namespace lyricsync;

namespace {

std::vector<float> Sine(double hz, int n, int rate = kSampleRate) {
  std::vector<float> x(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) x[static_cast<size_t>(i)] = static_cast<float>(0.3 * std::sin(2 * std::numbers::pi * hz * i / rate));
  return x;
}

double Rms(const std::vector<float>& x, size_t from = 0) {
  double s = 0.0;
  for (size_t i = from; i < x.size(); ++i) s += double(x[i]) * x[i];
  return std::sqrt(s / static_cast<double>(x.size() - from));
}

}  // namespace

TEST_CASE("augmentation preserves length") {
  Waveform w;
  w.samples = Sine(300.0, 12345);
  auto specs = DefaultAugmentations();
  CHECK(specs.size() == 5);
  for (auto& s : specs) s.probability = 1.0;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 5; ++i) CHECK(Augment(w, specs, rng).samples.size() == w.samples.size());
}

TEST_CASE("polarity and gain") {
  const auto x = Sine(200.0, 1000);
  auto y = x;
  InvertPolarity(y);
  for (size_t i = 0; i < x.size(); ++i) CHECK(y[i] == -x[i]);
  auto g = x;
  ApplyGain(g, 6.0);
  CHECK(Rms(g) / Rms(x) == doctest::Approx(std::pow(10.0, 6.0 / 20.0)).epsilon(1e-4));
}

TEST_CASE("band pass keeps the centre and attenuates far bands") {
  auto in = Sine(1000.0, 16000), out_band = Sine(100.0, 16000);
  BandPass(in, kSampleRate, 1000.0, 0.707);
  BandPass(out_band, kSampleRate, 1000.0, 2.0);
  CHECK(Rms(in, 2000) / Rms(Sine(1000.0, 16000), 2000) == doctest::Approx(1.0).epsilon(0.05));
  CHECK(Rms(out_band, 2000) < 0.2 * Rms(Sine(100.0, 16000), 2000));
}

TEST_CASE("pitch shift keeps length and zero shift is near identity") {
  const auto x = Sine(440.0, 8000);
  CHECK(PitchShift(x, kSampleRate, 3.0).size() == x.size());
  CHECK(PitchShift(x, kSampleRate, -4.0).size() == x.size());
  const auto same = PitchShift(x, kSampleRate, 0.0);
  CHECK(Rms(same) == doctest::Approx(Rms(x)).epsilon(0.1));
}

TEST_CASE("gaussian noise has the requested scale") {
  std::vector<float> x(20000, 0.0f);
  std::mt19937_64 rng(2);
  AddGaussianNoise(x, 0.01, rng);
  CHECK(Rms(x) == doctest::Approx(0.01).epsilon(0.05));
}

TEST_CASE("unknown transforms are rejected") {
  AugmentSpec bad;
  bad.name = "reverb";
  try {
    ValidateAugmentations({bad});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInvalidArgument);
  }
  ValidateAugmentations(DefaultAugmentations());
}
