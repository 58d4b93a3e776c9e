// Copyright 2026 The lyricsync Authors
// SPDX-License-Identifier: Apache-2.0

// Two-stage inference: a sentence-level pass over the whole song, then a
// word-level pass inside each sliced line segment.

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lyricsync/audio.hpp"
#include "lyricsync/datasets.hpp"
#include "lyricsync/model.hpp"
#include "lyricsync/text.hpp"
#include "lyricsync/training.hpp"

namespace lyricsync {

struct AlignedUnit {
  std::string text;
  double onset_sec = 0.0;
  double confidence = 0.0;
  int segment_id = 0;  // sentence index for both levels
};

struct AlignmentResult {
  Level level = Level::kWord;
  std::vector<AlignedUnit> units;
  double song_confidence = 0.0;  // mean unit confidence
  std::optional<AlignmentMatrix> matrix;
};

struct Segment {
  int segment_id = 0;
  double start_sec = 0.0;
  double end_sec = 0.0;
};

/// Ensembles per level; logits are averaged across members.
struct CascadeModels {
  std::vector<const AlignerModel*> sentence;
  std::vector<const AlignerModel*> word;
  /// Throws kEmptyEnsemble, kInvalidArgument (wrong level).
  void Validate() const;
  std::vector<std::string> Versions() const;
};

struct CascadeOptions {
  double pad_pre_sec = 0.5;
  double pad_post_sec = 0.5;
  bool monotonic = false;
  int max_sentence_frames = 2048;  // stacked frames seen by the sentence model
  bool keep_matrices = false;
  /// External vocal separation run before feature extraction, with `{in}`
  /// and `{out}` replaced by WAV paths. Empty: audio is used as given.
  std::string separator_command;
};

/// Averages member logits for one input.
AlignmentMatrix EnsembleAlign(const std::vector<const AlignerModel*>& members, std::span<const int> tokens,
                              const MelFeatures& features);

/// One unit per line, decoded from its first-token row. `stacked` must have
/// stack factor 4. Throws kInputTooShort, kStackFactorMismatch.
AlignmentResult AlignSentences(const MelFeatures& stacked, const TokenSequence& lyrics,
                               const std::vector<const AlignerModel*>& models, const CascadeOptions& options = {});

/// Segment i spans [onset_i - pad_pre, max(onset_i, onset_{i+1}) + pad_post]
/// clamped to [0, duration]; the last segment ends at the duration.
std::vector<Segment> SliceSegments(const AlignmentResult& sentences, double song_duration, double pad_pre = 0.5,
                                   double pad_post = 0.5);

/// Frame range [first, last) of word-level features covering a segment, so
/// that every decoded onset lies inside [start_sec, end_sec].
std::pair<int, int> SegmentFrames(const Segment& segment, double seconds_per_frame, int num_frames);

/// One unit per word of a single-line token sequence; onsets are offset by
/// `segment_offset`. Throws kInputTooShort.
AlignmentResult AlignWords(const MelFeatures& segment_features, const TokenSequence& line,
                           const std::vector<const AlignerModel*>& models, double segment_offset, int segment_id,
                           const CascadeOptions& options = {});

struct SongAlignment {
  std::string song_id;
  AlignmentResult sentences;
  AlignmentResult words;
  std::vector<Segment> segments;
  double song_confidence = 0.0;  // mean sentence confidence
  double duration_sec = 0.0;
  std::vector<std::string> model_versions;

  /// Canonical output JSON; deterministic for identical inputs.
  std::string ToJson() const;
  static SongAlignment FromJson(const std::string& json);
  /// `[mm:ss.xx]` per line with `<mm:ss.xx>` before every word.
  std::string ToLrc() const;
  SongLabels ToLabels() const;
};

struct StageTimings {
  double text_ms = 0.0;
  double audio_ms = 0.0;
  double sentence_ms = 0.0;
  double word_ms = 0.0;
};

/// Full pipeline over word-level (stack 1) features.
SongAlignment AlignSongFeatures(const std::string& song_id, const MelFeatures& features, double duration_sec,
                                const TokenSequence& lyrics, const CascadeModels& models,
                                const CascadeOptions& options = {}, StageTimings* timings = nullptr);

/// Reads audio (WAV) or a feature cache, converts lyrics, and runs the
/// cascade. Errors are rethrown with the song id prefixed.
SongAlignment AlignSong(const SongRecord& record, const std::string& lyrics_text, const G2pRegistry& g2p,
                        const CascadeModels& models, const CascadeOptions& options = {},
                        StageTimings* timings = nullptr);

/// Runs the cascade over unlabeled items and keeps those whose song
/// confidence is at least `confidence_floor`, labelled with the decoded
/// onsets.
std::vector<TrainingItem> PseudoLabel(const CascadeModels& models, const std::vector<TrainingItem>& unlabeled,
                                      double confidence_floor, const CascadeOptions& options = {});

/// Binary matrix dump for the inspection service: "LSAM", u32 rows, u32
/// cols, then float32 probabilities row-major.
void WriteMatrix(const std::string& path, const AlignmentMatrix& matrix);
/// Returns probabilities only (logits are not stored).
AlignmentMatrix ReadMatrix(const std::string& path);

std::string FormatLrcTime(double seconds);

}  // namespace lyricsync
