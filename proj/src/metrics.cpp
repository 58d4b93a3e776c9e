// Copyright 2026 The lyricsync Authors
// SPDX-License-Identifier: Apache-2.0

#include "lyricsync/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "lyricsync/error.hpp"

namespace lyricsync {

namespace {

void RequireWords(std::span<const WordTiming> words) {
  if (words.empty()) throw Error(ErrorCode::kEmptySong, "song has no words");
}

// End time of word i; `pred` selects the predicted or reference track.
double WordEnd(std::span<const WordTiming> words, size_t i, bool pred, double duration, double default_len) {
  const auto& w = words[i];
  const auto& explicit_end = pred ? w.e_pred : w.e_ref;
  if (explicit_end) return *explicit_end;
  if (i + 1 < words.size()) return pred ? words[i + 1].t_pred : words[i + 1].t_ref;
  const double t = pred ? w.t_pred : w.t_ref;
  return std::min(t + default_len, duration);
}

}  // namespace

std::vector<WordTiming> PairWords(const SongLabels& reference, const SongLabels& predicted,
                                  std::span<const double> confidences) {
  if (reference.words.size() != predicted.words.size()) {
    throw Error(ErrorCode::kInvalidArgument, "reference has " + std::to_string(reference.words.size()) +
                                                 " words, prediction has " + std::to_string(predicted.words.size()));
  }
  if (!confidences.empty() && confidences.size() != reference.words.size()) {
    throw Error(ErrorCode::kInvalidArgument, "confidence count does not match word count");
  }
  std::vector<WordTiming> out(reference.words.size());
  for (size_t i = 0; i < out.size(); ++i) {
    out[i].word_index = static_cast<int>(i);
    out[i].t_ref = reference.words[i].start_sec;
    out[i].t_pred = predicted.words[i].start_sec;
    if (!confidences.empty()) out[i].confidence = confidences[i];
  }
  return out;
}

double Mae(std::span<const WordTiming> words) {
  RequireWords(words);
  double s = 0.0;
  for (const auto& w : words) s += std::abs(w.t_pred - w.t_ref);
  return s / static_cast<double>(words.size());
}

double MedAe(std::span<const WordTiming> words) {
  RequireWords(words);
  std::vector<double> d;
  d.reserve(words.size());
  for (const auto& w : words) d.push_back(std::abs(w.t_pred - w.t_ref));
  std::sort(d.begin(), d.end());
  const size_t n = d.size();
  return n % 2 ? d[n / 2] : 0.5 * (d[n / 2 - 1] + d[n / 2]);
}

double Perc(std::span<const WordTiming> words, double duration, double default_word_length) {
  RequireWords(words);
  if (!(duration > 0.0)) throw Error(ErrorCode::kNonpositiveDuration, "duration must be positive");
  double overlap = 0.0;
  for (size_t i = 0; i < words.size(); ++i) {
    const double e_ref = WordEnd(words, i, false, duration, default_word_length);
    const double e_pred = WordEnd(words, i, true, duration, default_word_length);
    overlap += std::max(std::min(e_ref, e_pred) - std::max(words[i].t_ref, words[i].t_pred), 0.0);
  }
  return overlap / duration;
}

double Mauch(std::span<const WordTiming> words, double tau) {
  RequireWords(words);
  long hits = 0;
  for (const auto& w : words) hits += std::abs(w.t_pred - w.t_ref) < tau;
  return static_cast<double>(hits) / static_cast<double>(words.size());
}

PrF1 F1FromConfusion(double tp, double fp, double fn) {
  const double p = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  const double r = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  const double f = p + r > 0 ? 2.0 * p * r / (p + r) : 0.0;
  return {p, r, f};
}

std::vector<TriageRow> TriageSweep(std::span<const TriageItem> items, double true_bound,
                                   std::span<const double> thresholds) {
  if (items.empty()) throw Error(ErrorCode::kEmptyInput, "no items to triage");
  if (!(true_bound > 0.0)) throw Error(ErrorCode::kInvalidArgument, "true bound must be positive");
  std::vector<TriageRow> rows;
  rows.reserve(thresholds.size());
  for (double h : thresholds) {
    TriageRow row;
    row.threshold = h;
    double abs_sum = 0.0;
    for (const auto& it : items) {
      const bool accept = it.confidence >= h;
      const bool correct = std::abs(it.deviation) < true_bound;
      if (accept) {
        abs_sum += std::abs(it.deviation);
        (correct ? row.tp : row.fp)++;
      } else {
        (correct ? row.fn : row.tn)++;
      }
    }
    const auto m = F1FromConfusion(static_cast<double>(row.tp), static_cast<double>(row.fp), static_cast<double>(row.fn));
    row.precision = m.precision;
    row.recall = m.recall;
    row.f1 = m.f1;
    const long accepted = row.tp + row.fp;
    if (accepted > 0) row.accepted_mae = abs_sum / static_cast<double>(accepted);
    rows.push_back(row);
  }
  return rows;
}

std::vector<double> DefaultThresholds(int n) {
  std::vector<double> out;
  for (int i = 0; i < n; ++i) out.push_back(n > 1 ? static_cast<double>(i) / (n - 1) : 0.0);
  return out;
}

long DeviationHistogram::total() const {
  long s = underflow + overflow;
  for (long c : counts) s += c;
  return s;
}

double DeviationHistogram::bin_width() const { return counts.empty() ? 0.0 : 2.0 * range / counts.size(); }

double DeviationHistogram::bin_lower(int i) const { return -range + i * bin_width(); }

DeviationHistogram MakeHistogram(std::span<const double> deviations, int bins, double range) {
  if (deviations.empty()) throw Error(ErrorCode::kEmptyInput, "no deviations");
  if (bins < 1 || !(range > 0.0)) throw Error(ErrorCode::kInvalidArgument, "histogram needs bins >= 1 and range > 0");
  DeviationHistogram h;
  h.range = range;
  h.counts.assign(static_cast<size_t>(bins), 0);
  for (double d : deviations) {
    if (d < -range) {
      ++h.underflow;
    } else if (d >= range) {
      ++h.overflow;
    } else {
      // Tolerate representation error at bin edges (0.05 over [-2, 2] is bin 41).
      const long i = static_cast<long>(std::floor((d + range) * bins / (2.0 * range) + 1e-9));
      ++h.counts[static_cast<size_t>(std::clamp<long>(i, 0, bins - 1))];
    }
  }
  return h;
}

SongMetrics EvaluateSong(const SongEvaluation& song, const MetricsOptions& options) {
  SongMetrics m;
  m.song_id = song.song_id;
  m.mae = Mae(song.words);
  m.medae = MedAe(song.words);
  m.perc = Perc(song.words, song.duration, options.default_word_length);
  for (double tau : options.taus) m.mauch[tau] = Mauch(song.words, tau);
  m.n_words = static_cast<int>(song.words.size());
  return m;
}

MetricsReport Evaluate(std::span<const SongEvaluation> songs, const MetricsOptions& options) {
  if (songs.empty()) throw Error(ErrorCode::kEmptyInput, "no songs to evaluate");
  MetricsReport r;
  std::vector<double> deviations;
  std::vector<TriageItem> items;
  for (const auto& s : songs) {
    r.per_song.push_back(EvaluateSong(s, options));
    for (const auto& w : s.words) {
      deviations.push_back(w.t_pred - w.t_ref);
      items.push_back({w.confidence, w.t_pred - w.t_ref});
    }
  }
  const double n = static_cast<double>(r.per_song.size());
  r.aggregate.song_id = "mean";
  for (const auto& m : r.per_song) {
    r.aggregate.mae += m.mae / n;
    r.aggregate.medae += m.medae / n;
    r.aggregate.perc += m.perc / n;
    for (const auto& [tau, v] : m.mauch) r.aggregate.mauch[tau] += v / n;
    r.aggregate.n_words += m.n_words;
  }
  r.histogram = MakeHistogram(deviations, options.histogram_bins, options.histogram_range);
  r.triage = TriageSweep(items, options.true_bound, options.thresholds);
  return r;
}

namespace {

std::string TauKey(double tau) {
  std::ostringstream os;
  os << tau;
  return "mauch_" + os.str();
}

nlohmann::ordered_json SongJson(const SongMetrics& m) {
  nlohmann::ordered_json j;
  j["song_id"] = m.song_id;
  j["mae"] = m.mae;
  j["medae"] = m.medae;
  j["perc"] = m.perc;
  for (const auto& [tau, v] : m.mauch) j[TauKey(tau)] = v;
  j["n_words"] = m.n_words;
  return j;
}

}  // namespace

std::string MetricsReport::ToJson() const {
  nlohmann::ordered_json j;
  j["aggregate"] = SongJson(aggregate);
  j["per_song"] = nlohmann::ordered_json::array();
  for (const auto& m : per_song) j["per_song"].push_back(SongJson(m));
  j["histogram"] = {{"range", histogram.range},
                    {"counts", histogram.counts},
                    {"underflow", histogram.underflow},
                    {"overflow", histogram.overflow}};
  j["triage"] = nlohmann::ordered_json::array();
  for (const auto& t : triage) {
    nlohmann::ordered_json row = {{"threshold", t.threshold}, {"tp", t.tp},         {"fp", t.fp},
                                  {"tn", t.tn},               {"fn", t.fn},         {"precision", t.precision},
                                  {"recall", t.recall},       {"f1", t.f1}};
    row["accepted_mae"] = t.accepted_mae ? nlohmann::ordered_json(*t.accepted_mae) : nlohmann::ordered_json(nullptr);
    j["triage"].push_back(std::move(row));
  }
  return j.dump(2) + "\n";
}

std::string MetricsReport::ToCsv() const {
  std::ostringstream os;
  os.precision(10);
  os << "song_id,mae,medae,perc";
  for (const auto& [tau, v] : aggregate.mauch) os << ',' << TauKey(tau);
  os << ",n_words\n";
  auto row = [&](const SongMetrics& m) {
    os << m.song_id << ',' << m.mae << ',' << m.medae << ',' << m.perc;
    for (const auto& [tau, v] : aggregate.mauch) {
      const auto it = m.mauch.find(tau);
      os << ',' << (it == m.mauch.end() ? 0.0 : it->second);
    }
    os << ',' << m.n_words << '\n';
  };
  for (const auto& m : per_song) row(m);
  row(aggregate);
  return os.str();
}

std::vector<std::string> RejectLowest(std::span<const Scored> items, double fraction) {
  if (fraction < 0.0 || fraction > 1.0) throw Error(ErrorCode::kInvalidArgument, "fraction must lie in [0, 1]");
  std::vector<Scored> sorted(items.begin(), items.end());
  std::sort(sorted.begin(), sorted.end(), [](const Scored& a, const Scored& b) {
    return a.confidence != b.confidence ? a.confidence < b.confidence : a.id < b.id;
  });
  const size_t k = std::min(sorted.size(), static_cast<size_t>(std::llround(fraction * static_cast<double>(sorted.size()))));
  std::vector<std::string> out;
  for (size_t i = 0; i < k; ++i) out.push_back(sorted[i].id);
  return out;
}

}  // namespace lyricsync
