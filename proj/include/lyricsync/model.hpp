// Copyright 2026 The lyricsync Authors
// SPDX-License-Identifier: Apache-2.0

// Alignment network: CBHG text and audio encoders, channel expansion,
// cross-correlation fusion, and a UNet predictor with a recurrent bottleneck.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lyricsync/audio.hpp"
#include "lyricsync/nn.hpp"

namespace lyricsync {

enum class Level { kSentence, kWord };

std::string_view LevelName(Level level);
/// Accepts "sentence" or "word"; throws kInvalidArgument otherwise.
Level ParseLevel(std::string_view name);
/// Frame stacking expected by a level: 4 for sentence, 1 for word.
int StackFactorFor(Level level);

struct ModelConfig {
  Level level = Level::kWord;
  int c_encoder = 512;
  int c_in = 8;
  int cbhg_layers = 2;
  std::vector<int> unet_channels = {32, 64, 128};
  int vocab_size = 76;
  int n_mels_effective = kMelBins;
  int bank_size = 8;
  int highway_layers = 4;

  static ModelConfig Sentence();
  static ModelConfig Word();
  /// Small configuration for tests and the synthetic experiment.
  static ModelConfig Toy(Level level, int c_encoder = 8, int c_in = 2, int depth = 2);

  int depth() const { return static_cast<int>(unet_channels.size()); }
  int stack_factor() const { return StackFactorFor(level); }
  /// Throws kInvalidArgument on a violated invariant.
  void Validate() const;

  std::string ToJson() const;
  static ModelConfig FromJson(const std::string& json);
  bool operator==(const ModelConfig&) const = default;
};

/// Row-major [rows x cols] logits with their softmax along columns.
struct AlignmentMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> logits;
  std::vector<double> probs;

  static AlignmentMatrix FromLogits(int rows, int cols, std::vector<double> logits);
  double logit(int r, int c) const { return logits[static_cast<size_t>(r) * cols + c]; }
  double prob(int r, int c) const { return probs[static_cast<size_t>(r) * cols + c]; }
};

struct DecodedOnset {
  int row = 0;
  int frame = 0;
  double onset_sec = 0.0;
  double confidence = 0.0;
};

/// Argmax along time for each requested row (lowest index wins ties);
/// confidence is the winning probability.
std::vector<DecodedOnset> DecodeOnsets(const AlignmentMatrix& a, std::span<const int> rows, double seconds_per_frame);

/// Element-wise mean of member logits; probabilities recomputed.
/// Throws kEmptyEnsemble or kShapeMismatch.
AlignmentMatrix EnsembleLogits(std::span<const AlignmentMatrix> members);

/// text [C_in x C_enc x L], audio [C_in x C_enc x T] -> [C_in x L x T].
/// Throws kShapeMismatch.
nn::Var CrossCorrelate(const nn::Var& text_features, const nn::Var& audio_features);

/// Amount of padding applied to a length before the UNet: the next multiple
/// of 2^depth.
int PaddedLength(int length, int depth);

struct NamedParameter {
  std::string name;
  nn::Var var;
};

class AlignerModel {
 public:
  explicit AlignerModel(ModelConfig config, uint64_t seed = 0);

  const ModelConfig& config() const { return config_; }
  const std::vector<NamedParameter>& named_parameters() const { return params_; }
  std::vector<nn::Var> parameters() const;
  size_t num_parameters() const;

  /// Per-bin input normalisation applied before the audio prenet.
  const std::vector<double>& feature_mean() const { return feature_mean_; }
  const std::vector<double>& feature_std() const { return feature_std_; }
  void SetFeatureNormalization(std::vector<double> mean, std::vector<double> std);

  /// [C_in x C_enc x L]. Throws kTokenOutOfRange.
  nn::Var EncodeText(std::span<const int> tokens) const;
  /// [C_in x C_enc x T]. Throws kStackFactorMismatch, kShapeMismatch.
  nn::Var EncodeAudio(const MelFeatures& features) const;
  /// [C_in x L x T] -> logits [L x T]. Throws kShapeMismatch, kInputTooShort.
  nn::Var PredictAlignment(const nn::Var& m) const;

  /// Full differentiable forward pass, logits [L x T].
  nn::Var Forward(std::span<const int> tokens, const MelFeatures& features) const;
  /// Inference without graph recording.
  AlignmentMatrix Align(std::span<const int> tokens, const MelFeatures& features) const;

  /// Short content hash of config and weights.
  std::string Version() const;

  /// Binary container: "LSWT", u32 version, u64 header length, JSON header
  /// (config, normalisation, parameter names and shapes), then float64 data.
  void Save(const std::string& path) const;
  /// Validates parameter names and shapes against the stored config.
  static AlignerModel Load(const std::string& path);

  void CopyWeightsFrom(const AlignerModel& other);

 private:
  struct Cbhg;
  nn::Var& Param(const std::string& name, nn::Shape shape, double bound, uint64_t& state, bool gaussian = false);
  nn::Var Find(const std::string& name) const;
  void BuildCbhg(const std::string& prefix, int in_dim, uint64_t& state);
  nn::Var RunCbhg(const std::string& prefix, const nn::Var& x) const;
  nn::Var Highway(const std::string& prefix, const nn::Var& x) const;
  nn::Var EncodeTextRows(std::span<const int> tokens) const;
  nn::Var EncodeAudioRows(const MelFeatures& features) const;
  nn::Var Block(const std::string& prefix, const nn::Var& x) const;

  ModelConfig config_;
  std::vector<NamedParameter> params_;
  std::vector<double> feature_mean_;
  std::vector<double> feature_std_;
};

/// Reflection index for padding: maps any integer to [0, n) by mirroring
/// without repeating the edge sample; n == 1 always maps to 0.
int ReflectIndex(int i, int n);

}  // namespace lyricsync
