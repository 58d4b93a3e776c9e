// Copyright 2026 The lyricsync Authors
// SPDX-License-Identifier: Apache-2.0

// Word-onset evaluation metrics, deviation histograms and confidence triage.

#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lyricsync/datasets.hpp"

namespace lyricsync {

struct WordTiming {
  int word_index = 0;
  double t_ref = 0.0;
  double t_pred = 0.0;
  std::optional<double> e_ref;   // derived from the next reference onset when absent
  std::optional<double> e_pred;  // derived from the next predicted onset when absent
  double confidence = 1.0;
};

/// Pairs reference and predicted word onsets by index. Throws
/// kInvalidArgument when the word counts differ.
std::vector<WordTiming> PairWords(const SongLabels& reference, const SongLabels& predicted,
                                  std::span<const double> confidences = {});

// All four throw kEmptySong for an empty word list.
double Mae(std::span<const WordTiming> words);
/// Even counts use the mean of the two central values.
double MedAe(std::span<const WordTiming> words);
/// Total overlap of reference and predicted word intervals over `duration`.
/// A word's missing end is the next onset; the last word ends at
/// min(t + default_word_length, duration). Throws kNonpositiveDuration.
double Perc(std::span<const WordTiming> words, double duration, double default_word_length = 0.5);
/// Fraction of words with |t_pred - t_ref| strictly below `tau`.
double Mauch(std::span<const WordTiming> words, double tau);

struct TriageItem {
  double confidence = 0.0;
  double deviation = 0.0;  // t_pred - t_ref
};

struct TriageRow {
  double threshold = 0.0;
  long tp = 0, fp = 0, tn = 0, fn = 0;  // accept/reject x within/outside the bound
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> accepted_mae;  // absent when nothing is accepted
};

/// Precision, recall and F1 from confusion entries (counts or rates).
/// Undefined ratios are reported as 0.
struct PrF1 {
  double precision, recall, f1;
};
PrF1 F1FromConfusion(double tp, double fp, double fn);

/// Accept when confidence >= h; an item is correct when |deviation| < true_bound.
/// Throws kEmptyInput, kInvalidArgument (true_bound <= 0).
std::vector<TriageRow> TriageSweep(std::span<const TriageItem> items, double true_bound,
                                   std::span<const double> thresholds);

/// `n` evenly spaced thresholds in [0, 1].
std::vector<double> DefaultThresholds(int n = 101);

struct DeviationHistogram {
  double range = 0.0;  // bins cover [-range, +range)
  std::vector<long> counts;
  long underflow = 0;
  long overflow = 0;

  long total() const;
  double bin_lower(int i) const;
  double bin_width() const;
};

/// Throws kEmptyInput, kInvalidArgument (bins < 1 or range <= 0).
DeviationHistogram MakeHistogram(std::span<const double> deviations, int bins = 80, double range = 2.0);

struct SongMetrics {
  std::string song_id;
  double mae = 0.0;
  double medae = 0.0;
  double perc = 0.0;
  std::map<double, double> mauch;  // tau -> value
  int n_words = 0;
};

/// One song's words plus what the report needs besides the timings.
struct SongEvaluation {
  std::string song_id;
  std::vector<WordTiming> words;
  double duration = 0.0;
  double song_confidence = 0.0;
};

struct MetricsOptions {
  std::vector<double> taus = {0.2};
  double default_word_length = 0.5;
  int histogram_bins = 80;
  double histogram_range = 2.0;
  double true_bound = 0.2;
  std::vector<double> thresholds = DefaultThresholds();
};

struct MetricsReport {
  std::vector<SongMetrics> per_song;
  SongMetrics aggregate;  // unweighted means of the per-song values
  DeviationHistogram histogram;
  std::vector<TriageRow> triage;

  std::string ToJson() const;
  /// One row per song plus a final "mean" row.
  std::string ToCsv() const;
};

SongMetrics EvaluateSong(const SongEvaluation& song, const MetricsOptions& options = {});
/// Throws kEmptyInput for no songs.
MetricsReport Evaluate(std::span<const SongEvaluation> songs, const MetricsOptions& options = {});

struct Scored {
  std::string id;
  double confidence = 0.0;
};

/// Ids of the round(fraction * n) lowest-confidence items, ties broken by id.
std::vector<std::string> RejectLowest(std::span<const Scored> items, double fraction);

}  // namespace lyricsync
