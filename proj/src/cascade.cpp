// Copyright 2026 The lyricsync Authors
// SPDX-License-Identifier: Apache-2.0

#include "lyricsync/cascade.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "lyricsync/error.hpp"

namespace lyricsync {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

double MsSince(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

double MeanConfidence(const std::vector<AlignedUnit>& units) {
  if (units.empty()) return 0.0;
  double s = 0.0;
  for (const auto& u : units) s += u.confidence;
  return s / static_cast<double>(units.size());
}

std::string JoinWords(const TokenSequence& seq, int first, int last) {
  std::string out;
  for (int w = first; w < last; ++w) {
    if (!out.empty()) out += ' ';
    out += seq.source_words[static_cast<size_t>(w)];
  }
  return out;
}

void CheckMembers(const std::vector<const AlignerModel*>& members, Level level) {
  if (members.empty()) throw Error(ErrorCode::kEmptyEnsemble, std::string(LevelName(level)) + " ensemble is empty");
  for (const auto* m : members) {
    if (m == nullptr) throw Error(ErrorCode::kInvalidArgument, "null model in ensemble");
    if (m->config().level != level) {
      throw Error(ErrorCode::kInvalidArgument, std::string("expected a ") + std::string(LevelName(level)) +
                                                   "-level model, got " + std::string(LevelName(m->config().level)));
    }
  }
}

// Strips the "Name: " prefix that Error adds, so context can be prepended.
std::string BareMessage(const Error& e) {
  const std::string what = e.what();
  const std::string prefix = std::string(ErrorCodeName(e.code())) + ": ";
  return what.rfind(prefix, 0) == 0 ? what.substr(prefix.size()) : what;
}

}  // namespace

void CascadeModels::Validate() const {
  CheckMembers(sentence, Level::kSentence);
  CheckMembers(word, Level::kWord);
}

std::vector<std::string> CascadeModels::Versions() const {
  std::vector<std::string> out;
  for (const auto* m : sentence) out.push_back(m->Version());
  for (const auto* m : word) out.push_back(m->Version());
  return out;
}

AlignmentMatrix EnsembleAlign(const std::vector<const AlignerModel*>& members, std::span<const int> tokens,
                              const MelFeatures& features) {
  if (members.empty()) throw Error(ErrorCode::kEmptyEnsemble, "no ensemble members");
  if (members.size() == 1) return members[0]->Align(tokens, features);
  std::vector<AlignmentMatrix> outs;
  outs.reserve(members.size());
  for (const auto* m : members) outs.push_back(m->Align(tokens, features));
  return EnsembleLogits(outs);
}

AlignmentResult AlignSentences(const MelFeatures& stacked, const TokenSequence& lyrics,
                               const std::vector<const AlignerModel*>& models, const CascadeOptions& options) {
  CheckMembers(models, Level::kSentence);
  if (stacked.stack_factor != kSentenceStack) {
    throw Error(ErrorCode::kStackFactorMismatch,
                "sentence alignment needs stack factor 4, got " + std::to_string(stacked.stack_factor));
  }
  if (lyrics.size() == 0 || lyrics.sentence_starts.empty()) throw Error(ErrorCode::kInputTooShort, "no lyric tokens");
  if (stacked.num_frames == 0) throw Error(ErrorCode::kInputTooShort, "no audio frames");
  const MelFeatures input = options.max_sentence_frames > 0 && stacked.num_frames > options.max_sentence_frames
                                ? SliceFrames(stacked, 0, options.max_sentence_frames)
                                : stacked;
  AlignmentMatrix a = EnsembleAlign(models, lyrics.tokens, input);
  const auto decoded = DecodeOnsets(a, lyrics.sentence_starts, stacked.seconds_per_frame());

  AlignmentResult out;
  out.level = Level::kSentence;
  for (size_t s = 0; s < decoded.size(); ++s) {
    const auto [w0, w1] = lyrics.SentenceWords(static_cast<int>(s));
    out.units.push_back({JoinWords(lyrics, w0, w1), decoded[s].onset_sec, decoded[s].confidence, static_cast<int>(s)});
  }
  out.song_confidence = MeanConfidence(out.units);
  if (options.keep_matrices) out.matrix = std::move(a);
  return out;
}

std::vector<Segment> SliceSegments(const AlignmentResult& sentences, double song_duration, double pad_pre,
                                   double pad_post) {
  std::vector<Segment> out;
  const auto& u = sentences.units;
  for (size_t i = 0; i < u.size(); ++i) {
    Segment s;
    s.segment_id = u[i].segment_id;
    s.start_sec = std::clamp(u[i].onset_sec - pad_pre, 0.0, song_duration);
    s.end_sec = i + 1 < u.size() ? std::clamp(std::max(u[i].onset_sec, u[i + 1].onset_sec) + pad_post, 0.0, song_duration)
                                 : song_duration;
    s.end_sec = std::max(s.end_sec, s.start_sec);
    out.push_back(s);
  }
  return out;
}

std::pair<int, int> SegmentFrames(const Segment& segment, double seconds_per_frame, int num_frames) {
  constexpr double kEps = 1e-9;
  int first = static_cast<int>(std::ceil(segment.start_sec / seconds_per_frame - kEps));
  int last = static_cast<int>(std::floor(segment.end_sec / seconds_per_frame + kEps)) + 1;
  first = std::clamp(first, 0, num_frames);
  last = std::clamp(last, 0, num_frames);
  if (last <= first) {
    // Degenerate segment: keep one frame so the line still gets an onset.
    first = std::clamp(first, 0, std::max(num_frames - 1, 0));
    last = std::min(first + 1, num_frames);
  }
  return {first, last};
}

AlignmentResult AlignWords(const MelFeatures& segment_features, const TokenSequence& line,
                           const std::vector<const AlignerModel*>& models, double segment_offset, int segment_id,
                           const CascadeOptions& options) {
  CheckMembers(models, Level::kWord);
  if (line.size() == 0 || line.word_starts.empty()) throw Error(ErrorCode::kInputTooShort, "line has no words");
  if (segment_features.num_frames == 0) throw Error(ErrorCode::kInputTooShort, "segment has no frames");
  AlignmentMatrix a = EnsembleAlign(models, line.tokens, segment_features);
  const auto decoded = DecodeOnsets(a, line.word_starts, segment_features.seconds_per_frame());

  AlignmentResult out;
  out.level = Level::kWord;
  for (size_t w = 0; w < decoded.size(); ++w) {
    out.units.push_back(
        {line.source_words[w], segment_offset + decoded[w].onset_sec, decoded[w].confidence, segment_id});
  }
  if (options.monotonic) {
    std::vector<double> onsets;
    for (const auto& u : out.units) onsets.push_back(u.onset_sec);
    std::sort(onsets.begin(), onsets.end());
    for (size_t w = 0; w < onsets.size(); ++w) out.units[w].onset_sec = onsets[w];
  }
  out.song_confidence = MeanConfidence(out.units);
  if (options.keep_matrices) out.matrix = std::move(a);
  return out;
}

SongAlignment AlignSongFeatures(const std::string& song_id, const MelFeatures& features, double duration_sec,
                                const TokenSequence& lyrics, const CascadeModels& models,
                                const CascadeOptions& options, StageTimings* timings) {
  models.Validate();
  if (features.stack_factor != 1) {
    throw Error(ErrorCode::kStackFactorMismatch, "cascade input must be unstacked features");
  }
  if (!(duration_sec > 0.0)) duration_sec = features.num_frames * features.seconds_per_frame();

  auto t0 = std::chrono::steady_clock::now();
  const MelFeatures stacked = StackFrames(features, kSentenceStack);
  if (timings) timings->audio_ms += MsSince(t0);

  t0 = std::chrono::steady_clock::now();
  SongAlignment out;
  out.song_id = song_id;
  out.duration_sec = duration_sec;
  out.model_versions = models.Versions();
  out.sentences = AlignSentences(stacked, lyrics, models.sentence, options);
  for (auto& u : out.sentences.units) u.onset_sec = std::min(u.onset_sec, duration_sec);
  out.song_confidence = out.sentences.song_confidence;
  out.segments = SliceSegments(out.sentences, duration_sec, options.pad_pre_sec, options.pad_post_sec);
  if (timings) timings->sentence_ms += MsSince(t0);

  t0 = std::chrono::steady_clock::now();
  out.words.level = Level::kWord;
  const double spf = features.seconds_per_frame();
  for (const auto& seg : out.segments) {
    const TokenSequence line = lyrics.Sentence(seg.segment_id);
    const auto [first, last] = SegmentFrames(seg, spf, features.num_frames);
    const MelFeatures slice = SliceFrames(features, first, last);
    AlignmentResult words = AlignWords(slice, line, models.word, first * spf, seg.segment_id, options);
    for (auto& u : words.units) out.words.units.push_back(std::move(u));
  }
  out.words.song_confidence = MeanConfidence(out.words.units);
  if (timings) timings->word_ms += MsSince(t0);
  return out;
}

SongAlignment AlignSong(const SongRecord& record, const std::string& lyrics_text, const G2pRegistry& g2p,
                        const CascadeModels& models, const CascadeOptions& options, StageTimings* timings) {
  try {
    auto t0 = std::chrono::steady_clock::now();
    const TokenSequence tokens = LyricsToIpa(lyrics_text, record.language, g2p);
    if (timings) timings->text_ms += MsSince(t0);

    t0 = std::chrono::steady_clock::now();
    MelFeatures features;
    double duration = record.duration_sec;
    if (!record.feature_cache_path.empty()) {
      features = ReadFeatureCache(record.feature_cache_path);
    } else {
      std::string audio_path = record.audio_path;
      std::string separated;
      if (!options.separator_command.empty()) {
        separated = (fs::temp_directory_path() / ("lyricsync-vocals-" + record.id + ".wav")).string();
        std::string cmd = options.separator_command;
        for (const auto& [key, value] : {std::pair<std::string, std::string>{"{in}", audio_path}, {"{out}", separated}}) {
          for (size_t p = cmd.find(key); p != std::string::npos; p = cmd.find(key, p + value.size())) {
            cmd.replace(p, key.size(), value);
          }
        }
        if (std::system(cmd.c_str()) != 0) throw Error(ErrorCode::kIoError, "separator command failed: " + cmd);
        audio_path = separated;
      }
      const Waveform wave = ReadWav(audio_path);
      if (!separated.empty()) fs::remove(separated);
      if (duration <= 0.0 && wave.sample_rate > 0) {
        duration = static_cast<double>(wave.samples.size()) / wave.sample_rate;
      }
      features = WavToMel(wave);
    }
    if (timings) timings->audio_ms += MsSince(t0);
    return AlignSongFeatures(record.id, features, duration, tokens, models, options, timings);
  } catch (const Error& e) {
    throw Error(e.code(), record.id + ": " + BareMessage(e));
  }
}

std::vector<TrainingItem> PseudoLabel(const CascadeModels& models, const std::vector<TrainingItem>& unlabeled,
                                      double confidence_floor, const CascadeOptions& options) {
  std::vector<TrainingItem> out;
  for (const auto& item : unlabeled) {
    const double duration =
        item.labels.duration_sec.value_or(item.features.num_frames * item.features.seconds_per_frame());
    const SongAlignment a = AlignSongFeatures(item.id, item.features, duration, item.tokens, models, options);
    if (a.song_confidence < confidence_floor) continue;
    TrainingItem labeled = item;
    labeled.labels = a.ToLabels();
    out.push_back(std::move(labeled));
  }
  return out;
}

// ---------------------------------------------------------------------------
// serialization

std::string SongAlignment::ToJson() const {
  ojson j;
  j["song_id"] = song_id;
  ojson sents = ojson::array();
  for (const auto& u : sentences.units) {
    sents.push_back({{"text", u.text}, {"onset_sec", u.onset_sec}, {"confidence", u.confidence}});
  }
  j["sentences"] = std::move(sents);
  ojson words_j = ojson::array();
  for (const auto& u : words.units) {
    words_j.push_back(
        {{"text", u.text}, {"onset_sec", u.onset_sec}, {"confidence", u.confidence}, {"segment_id", u.segment_id}});
  }
  j["words"] = std::move(words_j);
  ojson segs = ojson::array();
  for (const auto& s : segments) {
    segs.push_back({{"segment_id", s.segment_id}, {"start_sec", s.start_sec}, {"end_sec", s.end_sec}});
  }
  j["segments"] = std::move(segs);
  j["song_confidence"] = song_confidence;
  j["duration_sec"] = duration_sec;
  j["model_versions"] = model_versions;
  return j.dump(2) + "\n";
}

SongAlignment SongAlignment::FromJson(const std::string& json) {
  SongAlignment out;
  try {
    const auto j = nlohmann::json::parse(json);
    out.song_id = j.at("song_id").get<std::string>();
    out.sentences.level = Level::kSentence;
    int idx = 0;
    for (const auto& u : j.at("sentences")) {
      out.sentences.units.push_back(
          {u.at("text").get<std::string>(), u.at("onset_sec").get<double>(), u.value("confidence", 0.0), idx++});
    }
    out.sentences.song_confidence = MeanConfidence(out.sentences.units);
    out.words.level = Level::kWord;
    for (const auto& u : j.at("words")) {
      out.words.units.push_back({u.at("text").get<std::string>(), u.at("onset_sec").get<double>(),
                                 u.value("confidence", 0.0), u.value("segment_id", 0)});
    }
    out.words.song_confidence = MeanConfidence(out.words.units);
    if (j.contains("segments")) {
      for (const auto& s : j["segments"]) {
        out.segments.push_back({s.at("segment_id").get<int>(), s.at("start_sec").get<double>(),
                                s.at("end_sec").get<double>()});
      }
    }
    out.song_confidence = j.value("song_confidence", out.sentences.song_confidence);
    out.duration_sec = j.value("duration_sec", 0.0);
    if (j.contains("model_versions")) out.model_versions = j["model_versions"].get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("alignment json: ") + e.what());
  }
  return out;
}

std::string FormatLrcTime(double seconds) {
  const long long cs = std::llround(std::max(seconds, 0.0) * 100.0);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%02lld:%02lld.%02lld", cs / 6000, (cs / 100) % 60, cs % 100);
  return buf;
}

std::string SongAlignment::ToLrc() const {
  std::string out;
  for (size_t s = 0; s < sentences.units.size(); ++s) {
    const auto& line = sentences.units[s];
    out += "[" + FormatLrcTime(line.onset_sec) + "]";
    bool any = false;
    for (const auto& w : words.units) {
      if (w.segment_id != static_cast<int>(s)) continue;
      out += (any ? " <" : "<") + FormatLrcTime(w.onset_sec) + ">" + w.text;
      any = true;
    }
    if (!any) out += line.text;
    out += "\n";
  }
  return out;
}

SongLabels SongAlignment::ToLabels() const {
  SongLabels labels;
  for (const auto& u : sentences.units) labels.sentences.push_back({u.onset_sec, u.text});
  for (const auto& u : words.units) labels.words.push_back({u.onset_sec, u.text});
  if (duration_sec > 0.0) labels.duration_sec = duration_sec;
  return labels;
}

// ---------------------------------------------------------------------------
// matrix files

void WriteMatrix(const std::string& path, const AlignmentMatrix& matrix) {
  std::string buf = "LSAM";
  auto put_u32 = [&](uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  put_u32(static_cast<uint32_t>(matrix.rows));
  put_u32(static_cast<uint32_t>(matrix.cols));
  buf.reserve(buf.size() + matrix.probs.size() * 4);
  for (double p : matrix.probs) {
    const float f = static_cast<float>(p);
    char b[4];
    std::memcpy(b, &f, 4);
    buf.append(b, 4);
  }
  WriteFileAtomic(path, buf);
}

AlignmentMatrix ReadMatrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || buf.compare(0, 4, "LSAM") != 0) throw Error(ErrorCode::kParseError, path + ": not a matrix file");
  auto get_u32 = [&](size_t off) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[off + i])) << (8 * i);
    return v;
  };
  const uint32_t rows = get_u32(4), cols = get_u32(8);
  const size_t n = static_cast<size_t>(rows) * cols;
  if (buf.size() != 12 + 4 * n) throw Error(ErrorCode::kParseError, path + ": truncated matrix");
  AlignmentMatrix m;
  m.rows = static_cast<int>(rows);
  m.cols = static_cast<int>(cols);
  m.probs.resize(n);
  m.logits.resize(n);
  for (size_t i = 0; i < n; ++i) {
    float f;
    std::memcpy(&f, buf.data() + 12 + 4 * i, 4);
    m.probs[i] = f;
    m.logits[i] = std::log(std::max<double>(f, 1e-300));
  }
  return m;
}

}  // namespace lyricsync
