// Copyright 2026 The lyricsync Authors
// SPDX-License-Identifier: Apache-2.0

#include "lyricsync/audio.hpp"

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numbers>

#include "lyricsync/error.hpp"

namespace lyricsync {

void MelFeatures::Validate() const {
  if (stack_factor < 1) throw Error(ErrorCode::kInvalidArgument, "stack_factor must be >= 1");
  if (num_frames < 0 || frames.size() != static_cast<size_t>(num_frames) * num_bins()) {
    throw Error(ErrorCode::kInvalidArgument, "frame buffer does not match T x F");
  }
  for (float v : frames) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidArgument, "non-finite feature value");
  }
}

// ---------------------------------------------------------------------------
// WAV I/O

namespace {

uint32_t ReadU32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) | (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}
uint16_t ReadU16(const unsigned char* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }

void PutU32(std::ostream& out, uint32_t v) {
  const std::array<char, 4> b = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                                 static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  out.write(b.data(), 4);
}
void PutU16(std::ostream& out, uint16_t v) {
  const std::array<char, 2> b = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF)};
  out.write(b.data(), 2);
}

}  // namespace

Waveform ReadWav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open audio file " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), "fLaC", 4) == 0) {
    throw Error(ErrorCode::kCorruptAudio, path + ": FLAC decoding is not available in this build; convert to WAV");
  }
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error(ErrorCode::kCorruptAudio, path + ": not a RIFF/WAVE file");
  }
  int format = 0, channels = 0, rate = 0, bits = 0;
  const unsigned char* data = nullptr;
  size_t data_len = 0;
  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const uint32_t len = ReadU32(chunk + 4);
    const size_t body = pos + 8;
    const size_t avail = std::min<size_t>(len, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw Error(ErrorCode::kCorruptAudio, path + ": truncated fmt chunk");
      format = ReadU16(bytes.data() + body);
      channels = ReadU16(bytes.data() + body + 2);
      rate = static_cast<int>(ReadU32(bytes.data() + body + 4));
      bits = ReadU16(bytes.data() + body + 14);
      if (format == 0xFFFE && avail >= 26) format = ReadU16(bytes.data() + body + 24);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = avail;
    }
    pos = body + len + (len & 1);
  }
  if (channels <= 0 || rate <= 0 || data == nullptr) {
    throw Error(ErrorCode::kCorruptAudio, path + ": missing fmt or data chunk");
  }
  const bool is_float = format == 3;
  if (!(format == 1 || is_float) || (is_float && bits != 32) ||
      (!is_float && bits != 8 && bits != 16 && bits != 24 && bits != 32)) {
    throw Error(ErrorCode::kCorruptAudio, path + ": unsupported sample format");
  }
  const size_t bytes_per = static_cast<size_t>(bits / 8);
  const size_t n_frames = data_len / (bytes_per * static_cast<size_t>(channels));
  if (n_frames == 0) throw Error(ErrorCode::kEmptyAudio, path + ": no samples");
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(n_frames);
  for (size_t i = 0; i < n_frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      const unsigned char* p = data + (i * static_cast<size_t>(channels) + static_cast<size_t>(c)) * bytes_per;
      double v = 0.0;
      if (is_float) {
        float f;
        std::memcpy(&f, p, 4);
        v = f;
      } else if (bits == 8) {
        v = (static_cast<int>(p[0]) - 128) / 128.0;
      } else if (bits == 16) {
        v = static_cast<int16_t>(ReadU16(p)) / 32768.0;
      } else if (bits == 24) {
        int32_t s = p[0] | (p[1] << 8) | (p[2] << 16);
        if (s & 0x800000) s |= ~0xFFFFFF;
        v = s / 8388608.0;
      } else {
        v = static_cast<int32_t>(ReadU32(p)) / 2147483648.0;
      }
      acc += v;
    }
    w.samples[i] = static_cast<float>(acc / channels);
  }
  return w;
}

void WriteWav(const std::string& path, const Waveform& wave) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  const uint32_t data_len = static_cast<uint32_t>(wave.samples.size() * 2);
  out.write("RIFF", 4);
  PutU32(out, 36 + data_len);
  out.write("WAVEfmt ", 8);
  PutU32(out, 16);
  PutU16(out, 1);
  PutU16(out, 1);
  PutU32(out, static_cast<uint32_t>(wave.sample_rate));
  PutU32(out, static_cast<uint32_t>(wave.sample_rate * 2));
  PutU16(out, 2);
  PutU16(out, 16);
  out.write("data", 4);
  PutU32(out, data_len);
  for (float s : wave.samples) {
    const double c = std::clamp(static_cast<double>(s), -1.0, 1.0);
    PutU16(out, static_cast<uint16_t>(static_cast<int16_t>(std::lround(c * 32767.0))));
  }
}

// ---------------------------------------------------------------------------
// Resampling

std::vector<float> Resample(std::span<const float> samples, int from_rate, int to_rate) {
  if (from_rate <= 0 || to_rate <= 0) throw Error(ErrorCode::kInvalidArgument, "sample rates must be positive");
  if (from_rate == to_rate || samples.empty()) return {samples.begin(), samples.end()};
  constexpr int kZeroCrossings = 16;
  const double ratio = static_cast<double>(to_rate) / from_rate;
  const double cutoff = 0.95 * std::min(1.0, ratio);
  const double half_width = kZeroCrossings / cutoff;
  const auto n_out = static_cast<size_t>(std::floor(samples.size() * ratio));
  std::vector<float> out(n_out);
  const auto n_in = static_cast<long>(samples.size());
  for (size_t j = 0; j < n_out; ++j) {
    const double center = j / ratio;
    const long lo = std::max<long>(0, static_cast<long>(std::ceil(center - half_width)));
    const long hi = std::min<long>(n_in - 1, static_cast<long>(std::floor(center + half_width)));
    double acc = 0.0;
    for (long i = lo; i <= hi; ++i) {
      const double x = (i - center) * cutoff;
      const double sinc = x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
      const double win = 0.5 + 0.5 * std::cos(std::numbers::pi * (i - center) / half_width);
      acc += samples[static_cast<size_t>(i)] * sinc * win;
    }
    out[j] = static_cast<float>(acc * cutoff);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mel spectrogram

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double MelToHz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> MelFilterbank(int n_mels, int n_fft, int sample_rate, double fmin, double fmax) {
  const int n_bins = n_fft / 2 + 1;
  std::vector<double> hz(static_cast<size_t>(n_mels) + 2);
  const double mlo = HzToMel(fmin), mhi = HzToMel(fmax);
  for (int i = 0; i < n_mels + 2; ++i) hz[static_cast<size_t>(i)] = MelToHz(mlo + (mhi - mlo) * i / (n_mels + 1));
  std::vector<double> fb(static_cast<size_t>(n_mels) * n_bins, 0.0);
  for (int m = 0; m < n_mels; ++m) {
    const double left = hz[static_cast<size_t>(m)], center = hz[static_cast<size_t>(m) + 1],
                 right = hz[static_cast<size_t>(m) + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / n_fft;
      double w = 0.0;
      if (f > left && f <= center) w = (f - left) / (center - left);
      else if (f > center && f < right) w = (right - f) / (right - center);
      fb[static_cast<size_t>(m) * n_bins + k] = w;
    }
  }
  return fb;
}

namespace {

// Mirror index into [0, n) repeating the reflection for arbitrarily long pads.
long ReflectIndex(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

class RealFft {
 public:
  static RealFft& Instance() {
    static RealFft fft;
    return fft;
  }
  // |X[k]| for k in [0, n/2].
  void Magnitude(const double* frame, double* mag) const {
    double* in = fftw_alloc_real(kWindowSize);
    fftw_complex* out = fftw_alloc_complex(kWindowSize / 2 + 1);
    std::memcpy(in, frame, sizeof(double) * kWindowSize);
    fftw_execute_dft_r2c(plan_, in, out);
    for (int k = 0; k <= kWindowSize / 2; ++k) mag[k] = std::hypot(out[k][0], out[k][1]);
    fftw_free(in);
    fftw_free(out);
  }

 private:
  RealFft() {
    static std::mutex planner_mutex;
    std::lock_guard lock(planner_mutex);
    double* in = fftw_alloc_real(kWindowSize);
    fftw_complex* out = fftw_alloc_complex(kWindowSize / 2 + 1);
    plan_ = fftw_plan_dft_r2c_1d(kWindowSize, in, out, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
  }
  fftw_plan plan_;
};

}  // namespace

MelFeatures WavToMel(std::span<const float> samples, int sample_rate) {
  if (samples.empty()) throw Error(ErrorCode::kEmptyAudio, "waveform has no samples");
  std::vector<float> resampled;
  if (sample_rate != kSampleRate) {
    resampled = Resample(samples, sample_rate, kSampleRate);
    samples = resampled;
    if (samples.empty()) throw Error(ErrorCode::kEmptyAudio, "waveform too short after resampling");
  }
  for (float s : samples) {
    if (!std::isfinite(s)) throw Error(ErrorCode::kCorruptAudio, "non-finite sample");
  }
  static const std::vector<double> filterbank = MelFilterbank();
  static const std::vector<double> window = [] {
    std::vector<double> w(kWindowSize);
    for (int i = 0; i < kWindowSize; ++i) w[static_cast<size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / kWindowSize);
    return w;
  }();
  constexpr int n_bins = kWindowSize / 2 + 1;
  const long n = static_cast<long>(samples.size());
  const int num_frames = 1 + static_cast<int>(n / kHopSize);

  MelFeatures out;
  out.num_frames = num_frames;
  out.frames.resize(static_cast<size_t>(num_frames) * kMelBins);
  std::array<double, kWindowSize> frame{};
  std::array<double, n_bins> mag{};
  auto& fft = RealFft::Instance();
  for (int t = 0; t < num_frames; ++t) {
    const long start = static_cast<long>(t) * kHopSize - kWindowSize / 2;
    for (int i = 0; i < kWindowSize; ++i) {
      frame[static_cast<size_t>(i)] = samples[static_cast<size_t>(ReflectIndex(start + i, n))] * window[static_cast<size_t>(i)];
    }
    fft.Magnitude(frame.data(), mag.data());
    for (int m = 0; m < kMelBins; ++m) {
      const double* row = filterbank.data() + static_cast<size_t>(m) * n_bins;
      double acc = 0.0;
      for (int k = 0; k < n_bins; ++k) acc += row[k] * mag[static_cast<size_t>(k)];
      out.frames[static_cast<size_t>(t) * kMelBins + m] = static_cast<float>(std::log(acc + kLogOffset));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Frame stacking

MelFeatures StackFrames(const MelFeatures& features, int factor) {
  if (features.stack_factor != 1) throw Error(ErrorCode::kAlreadyStacked, "features are already stacked");
  if (factor < 1) throw Error(ErrorCode::kInvalidArgument, "stack factor must be >= 1");
  if (features.num_frames == 0) throw Error(ErrorCode::kEmptyAudio, "no frames to stack");
  const int f = features.n_mels;
  const int groups = (features.num_frames + factor - 1) / factor;
  MelFeatures out = features;
  out.stack_factor = factor;
  out.num_frames = groups;
  out.frames.resize(static_cast<size_t>(groups) * factor * f);
  for (int g = 0; g < groups; ++g) {
    for (int k = 0; k < factor; ++k) {
      const int src = std::min(g * factor + k, features.num_frames - 1);
      std::copy_n(features.frames.begin() + static_cast<long>(src) * f, f,
                  out.frames.begin() + (static_cast<long>(g) * factor + k) * f);
    }
  }
  return out;
}

MelFeatures UnstackFrames(const MelFeatures& features) {
  MelFeatures out = features;  // row-major storage is already the frame sequence
  out.num_frames = features.num_frames * features.stack_factor;
  out.stack_factor = 1;
  return out;
}

MelFeatures SliceFrames(const MelFeatures& features, int begin, int end) {
  begin = std::clamp(begin, 0, features.num_frames);
  end = std::clamp(end, begin, features.num_frames);
  MelFeatures out = features;
  out.num_frames = end - begin;
  const long w = features.num_bins();
  out.frames.assign(features.frames.begin() + begin * w, features.frames.begin() + end * w);
  return out;
}

// ---------------------------------------------------------------------------
// Feature cache

namespace {
constexpr std::array<char, 4> kCacheMagic = {'L', 'S', 'F', 'C'};
constexpr uint32_t kCacheVersion = 1;

uint32_t GetU32(std::istream& in, const std::string& path) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw Error(ErrorCode::kCorruptAudio, path + ": truncated header");
  return ReadU32(b.data());
}
}  // namespace

void WriteFeatureCache(const std::string& path, const MelFeatures& features) {
  features.Validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out.write(kCacheMagic.data(), 4);
  PutU32(out, kCacheVersion);
  PutU32(out, static_cast<uint32_t>(features.sample_rate));
  PutU32(out, static_cast<uint32_t>(features.hop));
  PutU32(out, static_cast<uint32_t>(features.n_mels));
  PutU32(out, static_cast<uint32_t>(features.stack_factor));
  PutU32(out, static_cast<uint32_t>(features.num_frames));
  for (float v : features.frames) {
    uint32_t bitsv;
    std::memcpy(&bitsv, &v, 4);
    PutU32(out, bitsv);
  }
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path);
}

MelFeatures ReadFeatureCache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open feature cache " + path);
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (!in || magic != kCacheMagic) throw Error(ErrorCode::kCorruptAudio, path + ": bad feature cache magic");
  const uint32_t version = GetU32(in, path);
  if (version != kCacheVersion) {
    throw Error(ErrorCode::kCorruptAudio, path + ": unsupported feature cache version " + std::to_string(version));
  }
  MelFeatures f;
  f.sample_rate = static_cast<int>(GetU32(in, path));
  f.hop = static_cast<int>(GetU32(in, path));
  f.n_mels = static_cast<int>(GetU32(in, path));
  f.stack_factor = static_cast<int>(GetU32(in, path));
  f.num_frames = static_cast<int>(GetU32(in, path));
  if (f.sample_rate <= 0 || f.hop <= 0 || f.n_mels <= 0 || f.stack_factor <= 0) {
    throw Error(ErrorCode::kCorruptAudio, path + ": invalid feature cache header");
  }
  f.frames.resize(static_cast<size_t>(f.num_frames) * f.num_bins());
  std::vector<unsigned char> raw(f.frames.size() * 4);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<long>(raw.size()))) {
    throw Error(ErrorCode::kCorruptAudio, path + ": truncated frame data");
  }
  for (size_t i = 0; i < f.frames.size(); ++i) {
    const uint32_t bitsv = ReadU32(raw.data() + 4 * i);
    std::memcpy(&f.frames[i], &bitsv, 4);
  }
  return f;
}

}  // namespace lyricsync
