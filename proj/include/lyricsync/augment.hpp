// Copyright 2026 The lyricsync Authors
// SPDX-License-Identifier: Apache-2.0

// Time-preserving waveform augmentations applied before feature extraction.

#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "lyricsync/audio.hpp"

namespace lyricsync {

/// A named transform with numeric parameters and an application probability.
/// Known names and parameters (defaults in brackets):
///   gaussian_noise  min_amplitude [0.001], max_amplitude [0.015]
///   gain            min_db [-12], max_db [12]
///   polarity_inversion
///   band_pass       min_center_hz [200], max_center_hz [4000], q [0.707]
///   pitch_shift     min_semitones [-4], max_semitones [4]
struct AugmentSpec {
  std::string name;
  std::map<std::string, double> params;
  double probability = 0.5;

  double param(const std::string& key, double fallback) const;
};

/// The five stock transforms with default parameters.
std::vector<AugmentSpec> DefaultAugmentations();

/// Throws kInvalidArgument for an unknown transform name.
void ValidateAugmentations(const std::vector<AugmentSpec>& specs);

/// Applies each spec with its probability, in order. Output length always
/// equals input length.
Waveform Augment(const Waveform& wave, const std::vector<AugmentSpec>& specs, std::mt19937_64& rng);

// Individual transforms, exposed for testing.
void AddGaussianNoise(std::vector<float>& x, double amplitude, std::mt19937_64& rng);
void ApplyGain(std::vector<float>& x, double db);
void InvertPolarity(std::vector<float>& x);
/// RBJ constant-peak-gain band-pass biquad.
void BandPass(std::vector<float>& x, int sample_rate, double center_hz, double q);
/// Resampling pitch change followed by windowed overlap-add time stretch back
/// to the original length.
std::vector<float> PitchShift(const std::vector<float>& x, int sample_rate, double semitones);

}  // namespace lyricsync
