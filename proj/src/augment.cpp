// Copyright 2026 The lyricsync Authors
// SPDX-License-Identifier: Apache-2.0

#include "lyricsync/augment.hpp"

#include <algorithm>
#include <cmath>

#include "lyricsync/error.hpp"

namespace lyricsync {

double AugmentSpec::param(const std::string& key, double fallback) const {
  auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

std::vector<AugmentSpec> DefaultAugmentations() {
  return {{"gaussian_noise", {}, 0.5}, {"pitch_shift", {}, 0.5}, {"polarity_inversion", {}, 0.5},
          {"band_pass", {}, 0.5},      {"gain", {}, 0.5}};
}

void ValidateAugmentations(const std::vector<AugmentSpec>& specs) {
  for (const auto& s : specs) {
    if (s.name != "gaussian_noise" && s.name != "gain" && s.name != "polarity_inversion" && s.name != "band_pass" &&
        s.name != "pitch_shift") {
      throw Error(ErrorCode::kInvalidArgument, "unknown augmentation '" + s.name + "'");
    }
    if (s.probability < 0.0 || s.probability > 1.0) {
      throw Error(ErrorCode::kInvalidArgument, "augmentation probability must lie in [0, 1]");
    }
  }
}

void AddGaussianNoise(std::vector<float>& x, double amplitude, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, amplitude);
  for (auto& v : x) v = static_cast<float>(v + dist(rng));
}

void ApplyGain(std::vector<float>& x, double db) {
  const double g = std::pow(10.0, db / 20.0);
  for (auto& v : x) v = static_cast<float>(v * g);
}

void InvertPolarity(std::vector<float>& x) {
  for (auto& v : x) v = -v;
}

void BandPass(std::vector<float>& x, int sample_rate, double center_hz, double q) {
  const double w0 = 2.0 * M_PI * center_hz / sample_rate;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  const double b0 = alpha / a0, b2 = -alpha / a0;
  const double a1 = -2.0 * std::cos(w0) / a0, a2 = (1.0 - alpha) / a0;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (auto& v : x) {
    const double in = v;
    const double out = b0 * in + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = in;
    y2 = y1;
    y1 = out;
    v = static_cast<float>(out);
  }
}

std::vector<float> PitchShift(const std::vector<float>& x, int sample_rate, double semitones) {
  if (x.empty() || semitones == 0.0) return x;
  const double ratio = std::pow(2.0, semitones / 12.0);
  // Playing back `ratio` times faster raises pitch by `semitones`.
  const int shifted_rate = std::max(1, static_cast<int>(std::lround(sample_rate / ratio)));
  const std::vector<float> fast = Resample(x, sample_rate, shifted_rate);
  if (fast.empty()) return std::vector<float>(x.size(), 0.0f);

  // Overlap-add stretch of `fast` back to x.size() samples.
  const int win = 1024, hop_out = win / 4;
  const double hop_in = hop_out * static_cast<double>(fast.size()) / static_cast<double>(x.size());
  std::vector<double> out(x.size() + win, 0.0), norm(x.size() + win, 0.0);
  std::vector<double> window(win);
  for (int i = 0; i < win; ++i) window[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / win);
  for (size_t f = 0;; ++f) {
    const size_t out_pos = f * hop_out;
    if (out_pos >= x.size()) break;
    const long in_pos = std::lround(f * hop_in);
    for (int i = 0; i < win; ++i) {
      const long src = in_pos + i;
      const double s = (src >= 0 && src < static_cast<long>(fast.size())) ? fast[static_cast<size_t>(src)] : 0.0;
      out[out_pos + i] += s * window[i];
      norm[out_pos + i] += window[i];
    }
  }
  std::vector<float> result(x.size());
  for (size_t i = 0; i < x.size(); ++i) result[i] = static_cast<float>(norm[i] > 1e-8 ? out[i] / norm[i] : 0.0);
  return result;
}

Waveform Augment(const Waveform& wave, const std::vector<AugmentSpec>& specs, std::mt19937_64& rng) {
  ValidateAugmentations(specs);
  Waveform out = wave;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (const auto& s : specs) {
    if (unit(rng) >= s.probability) continue;
    auto draw = [&](const char* lo, double dlo, const char* hi, double dhi) {
      return std::uniform_real_distribution<double>(s.param(lo, dlo), s.param(hi, dhi))(rng);
    };
    if (s.name == "gaussian_noise") {
      AddGaussianNoise(out.samples, draw("min_amplitude", 0.001, "max_amplitude", 0.015), rng);
    } else if (s.name == "gain") {
      ApplyGain(out.samples, draw("min_db", -12.0, "max_db", 12.0));
    } else if (s.name == "polarity_inversion") {
      InvertPolarity(out.samples);
    } else if (s.name == "band_pass") {
      const double nyquist = out.sample_rate / 2.0;
      const double lo = std::log(s.param("min_center_hz", 200.0)), hi = std::log(std::min(s.param("max_center_hz", 4000.0), 0.9 * nyquist));
      const double center = std::exp(std::uniform_real_distribution<double>(lo, std::max(lo, hi))(rng));
      BandPass(out.samples, out.sample_rate, center, s.param("q", 0.707));
    } else if (s.name == "pitch_shift") {
      out.samples = PitchShift(out.samples, out.sample_rate, draw("min_semitones", -4.0, "max_semitones", 4.0));
    }
  }
  return out;
}

}  // namespace lyricsync
