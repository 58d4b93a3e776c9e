// Copyright 2026 The lyricsync Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lyricsync {

inline constexpr int kSampleRate = 16000;
inline constexpr int kWindowSize = 1024;
inline constexpr int kHopSize = 512;
inline constexpr int kMelBins = 80;
inline constexpr int kSentenceStack = 4;
/// Added to mel magnitudes before the natural log.
inline constexpr double kLogOffset = 1e-5;

struct Waveform {
  std::vector<float> samples;  // mono
  int sample_rate = kSampleRate;

  double duration_sec() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

/// Log-mel frames, row-major [T x F] with F == n_mels * stack_factor.
struct MelFeatures {
  std::vector<float> frames;
  int num_frames = 0;
  int sample_rate = kSampleRate;
  int hop = kHopSize;
  int n_mels = kMelBins;
  int stack_factor = 1;

  int num_bins() const { return n_mels * stack_factor; }
  double seconds_per_frame() const {
    return static_cast<double>(hop) * stack_factor / static_cast<double>(sample_rate);
  }
  float at(int t, int f) const { return frames[static_cast<size_t>(t) * num_bins() + f]; }
  std::span<const float> frame(int t) const {
    return {frames.data() + static_cast<size_t>(t) * num_bins(), static_cast<size_t>(num_bins())};
  }
  /// Throws kInvalidArgument when shape or finiteness invariants fail.
  void Validate() const;
};

/// Reads RIFF/WAVE (PCM 8/16/24/32-bit or IEEE float), downmixing to mono by
/// averaging channels. Throws kIoError, kEmptyAudio, kCorruptAudio.
Waveform ReadWav(const std::string& path);
/// Writes 16-bit PCM mono.
void WriteWav(const std::string& path, const Waveform& wave);

/// Band-limited (Hann-windowed sinc) sample-rate conversion.
std::vector<float> Resample(std::span<const float> samples, int from_rate, int to_rate);

/// 1024-point Hann STFT, hop 512, reflection centre padding, 80-bin HTK mel
/// filterbank over [0, 8 kHz], natural log of (magnitude + 1e-5).
/// T == 1 + floor(N / 512) for N samples at 16 kHz. Resamples to 16 kHz first.
MelFeatures WavToMel(std::span<const float> samples, int sample_rate);
inline MelFeatures WavToMel(const Waveform& wave) { return WavToMel(wave.samples, wave.sample_rate); }

/// HTK mel scale.
double HzToMel(double hz);
double MelToHz(double mel);
/// [n_mels x (n_fft/2+1)] triangular filters, row-major.
std::vector<double> MelFilterbank(int n_mels = kMelBins, int n_fft = kWindowSize, int sample_rate = kSampleRate,
                                  double fmin = 0.0, double fmax = kSampleRate / 2.0);

/// Concatenates `factor` consecutive frames along frequency. A trailing
/// partial group is completed by repeating the final frame. Throws
/// kAlreadyStacked.
MelFeatures StackFrames(const MelFeatures& features, int factor = kSentenceStack);
/// Inverse reshape of StackFrames (the padding frames are kept).
MelFeatures UnstackFrames(const MelFeatures& features);
/// Frames [begin, end) clamped to the available range.
MelFeatures SliceFrames(const MelFeatures& features, int begin, int end);

inline double FrameToSeconds(int frame_index, const MelFeatures& features) {
  return frame_index * features.seconds_per_frame();
}

/// Binary feature cache: magic "LSFC", u32 version, u32 {sample_rate, hop,
/// n_mels, stack_factor, T}, then T*F little-endian float32.
void WriteFeatureCache(const std::string& path, const MelFeatures& features);
MelFeatures ReadFeatureCache(const std::string& path);

}  // namespace lyricsync
