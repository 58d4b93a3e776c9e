// Copyright 2026 The lyricsync Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lyricsync/audio.hpp"
#include "lyricsync/augment.hpp"
#include "lyricsync/datasets.hpp"
#include "lyricsync/model.hpp"
#include "lyricsync/text.hpp"

namespace lyricsync {

/// Supervision for one alignment matrix: (token row, frame) pairs.
struct TrainTarget {
  std::vector<std::pair<int, int>> target_frames;
  int num_frames = 0;

  std::vector<int> rows() const;
  std::vector<int> frames() const;
  /// Throws kInvalidArgument on out-of-range frames or duplicate rows.
  void Validate() const;
};

/// Row targets for `level`: word-initial tokens paired with word onsets, or
/// line-initial tokens paired with sentence onsets. Frame = round(onset /
/// seconds_per_frame) - first_frame; pairs outside [0, num_frames) are dropped.
/// Throws kDataLevelMismatch when the labels lack that level or disagree with
/// the token structure.
TrainTarget MakeTarget(const TokenSequence& tokens, const SongLabels& labels, Level level, double seconds_per_frame,
                       int num_frames, int first_frame = 0);

/// Mean over supervised rows of -log softmax(logits[row])[frame].
/// Throws kNoSupervisedRows, kShapeMismatch.
double AlignmentLoss(const AlignmentMatrix& a, const TrainTarget& target);
nn::Var AlignmentLoss(const nn::Var& logits, const TrainTarget& target);

struct TrainSpec {
  Level level = Level::kWord;
  int batch_size = 64;
  double learning_rate = 5e-4;
  double weight_decay = 1e-7;
  int max_steps = 1000;
  std::vector<AugmentSpec> augmentations;
  uint64_t seed = 0;
  int max_frames = 2048;         // sentence level, stacked frames
  double crop_pad_sec = 0.5;     // word level line crops
  double crop_jitter_sec = 0.25; // uniform extra context on each side

  static TrainSpec Sentence();
  static TrainSpec Word();
  std::string ToJson() const;
  /// Unspecified fields keep the stock value for the given level.
  static TrainSpec FromJson(const std::string& json);
};

/// One song available for training.
struct TrainingItem {
  std::string id;
  TokenSequence tokens;
  MelFeatures features;  // stack factor 1
  SongLabels labels;
  std::optional<Waveform> audio;  // present when augmentations can apply
};

/// Reads lyrics, labels and audio or cached features for each record.
/// Records without labels are skipped unless `allow_unlabeled`.
std::vector<TrainingItem> LoadTrainingItems(const std::vector<SongRecord>& records, const G2pRegistry& g2p,
                                            bool allow_unlabeled = false);

/// One (input, target) pair drawn for an optimisation step.
struct TrainingSample {
  std::vector<int> tokens;
  MelFeatures features;
  TrainTarget target;
};

/// Builds the sample for `item` at `spec.level`: the whole song (stacked and
/// truncated) for sentence level, one jittered line crop for word level.
/// Returns nullopt when the crop holds no supervised rows.
std::optional<TrainingSample> DrawSample(const TrainingItem& item, const TrainSpec& spec, std::mt19937_64& rng);

/// Throws kDataLevelMismatch when `item` cannot supervise `level`.
void CheckItemLevel(const TrainingItem& item, Level level);

struct TrainLogEntry {
  long step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;
};

struct TrainOptions {
  std::string checkpoint_dir;  // empty: no checkpoints
  int checkpoint_every = 0;    // steps; 0 writes only at the end
  bool resume = false;
  std::string log_csv;            // appended to on resume
  bool fit_normalization = true;  // fitted from the corpus on a fresh start
  std::function<void(const TrainLogEntry&)> on_step;
  /// Stops after this many steps in this call (simulates interruption).
  int stop_after = -1;
};

struct TrainResult {
  std::vector<TrainLogEntry> log;
  long first_step = 0;  // step index the run started at
  long last_step = 0;   // step index of the last completed update
};

/// Gradient-accumulation training with decoupled weight decay. Throws
/// kDataLevelMismatch, kDivergedLoss (with step and item context).
TrainResult Train(AlignerModel& model, const TrainSpec& spec, const std::vector<TrainingItem>& corpus,
                  const TrainOptions& options = {});

/// Per-bin mean and standard deviation over all frames of the corpus, tiled
/// to the level's stacked width.
std::pair<std::vector<double>, std::vector<double>> FeatureStatistics(const std::vector<TrainingItem>& corpus,
                                                                      Level level);

// ---------------------------------------------------------------------------
// synthetic corpus

struct SynthOptions {
  int min_lines = 3, max_lines = 5;
  int min_words = 2, max_words = 4;
  int min_symbols = 1, max_symbols = 3;
  int min_token_frames = 3, max_token_frames = 10;
  int min_gap_frames = 8, max_gap_frames = 24;
  int min_lead_frames = 4, max_lead_frames = 24;
  int min_tail_frames = 8, max_tail_frames = 24;
  double noise = 0.5;           // std of additive gaussian noise
  double coarticulation = 0.0;  // blend weight of the previous template on a token's first frames
  int coarticulation_frames = 2;
  uint64_t template_seed = 20240917;  // shared by every corpus
  double template_spread = 2.0;
};

struct SynthSong {
  std::string id;
  std::string lyrics;  // one line per sentence, IPA words separated by spaces
  TokenSequence tokens;
  MelFeatures features;
  SongLabels labels;
  std::vector<int> token_onsets;  // frame of every token
};

/// Deterministic in (seed, options). Each song is rendered from fixed
/// per-token spectral templates.
std::vector<SynthSong> SynthCorpus(int n_songs, uint64_t seed, const Vocabulary& vocab = Vocabulary::Default(),
                                   const SynthOptions& options = {});

/// Writes manifest.jsonl plus features/, lyrics/ and labels/ under `dir`.
std::vector<SongRecord> WriteSynthCorpus(const std::string& dir, const std::vector<SynthSong>& songs);

TrainingItem ToTrainingItem(const SynthSong& song);

/// The per-token template matrix [76 x 80] used by the renderer.
std::vector<double> SynthTemplates(const SynthOptions& options);

}  // namespace lyricsync
