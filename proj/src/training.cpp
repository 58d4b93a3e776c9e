// Copyright 2026 The lyricsync Authors
// SPDX-License-Identifier: Apache-2.0

#include "lyricsync/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "lyricsync/error.hpp"

namespace lyricsync {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// targets and loss

std::vector<int> TrainTarget::rows() const {
  std::vector<int> out;
  for (const auto& [r, f] : target_frames) out.push_back(r);
  return out;
}

std::vector<int> TrainTarget::frames() const {
  std::vector<int> out;
  for (const auto& [r, f] : target_frames) out.push_back(f);
  return out;
}

void TrainTarget::Validate() const {
  std::set<int> seen;
  for (const auto& [r, f] : target_frames) {
    if (f < 0 || f >= num_frames) throw Error(ErrorCode::kInvalidArgument, "target frame out of range");
    if (r < 0) throw Error(ErrorCode::kInvalidArgument, "negative target row");
    if (!seen.insert(r).second) throw Error(ErrorCode::kInvalidArgument, "duplicate target row");
  }
}

TrainTarget MakeTarget(const TokenSequence& tokens, const SongLabels& labels, Level level, double seconds_per_frame,
                       int num_frames, int first_frame) {
  const bool word = level == Level::kWord;
  const auto& starts = word ? tokens.word_starts : tokens.sentence_starts;
  const auto& units = word ? labels.words : labels.sentences;
  const char* name = word ? "word" : "sentence";
  if (units.empty()) {
    throw Error(ErrorCode::kDataLevelMismatch, std::string("labels have no ") + name + " onsets");
  }
  if (units.size() != starts.size()) {
    throw Error(ErrorCode::kDataLevelMismatch, std::to_string(units.size()) + " " + name + " labels for " +
                                                   std::to_string(starts.size()) + " " + name + "s in the lyrics");
  }
  TrainTarget t;
  t.num_frames = num_frames;
  for (size_t i = 0; i < starts.size(); ++i) {
    const int frame = static_cast<int>(std::lround(units[i].start_sec / seconds_per_frame)) - first_frame;
    if (frame >= 0 && frame < num_frames) t.target_frames.emplace_back(starts[i], frame);
  }
  return t;
}

double AlignmentLoss(const AlignmentMatrix& a, const TrainTarget& target) {
  if (target.target_frames.empty()) throw Error(ErrorCode::kNoSupervisedRows, "target has no supervised rows");
  if (target.num_frames != a.cols) throw Error(ErrorCode::kShapeMismatch, "target length differs from matrix width");
  double loss = 0.0;
  for (const auto& [r, f] : target.target_frames) {
    if (r >= a.rows) throw Error(ErrorCode::kShapeMismatch, "target row beyond matrix height");
    loss -= std::log(std::max(a.prob(r, f), 1e-300));
  }
  return loss / static_cast<double>(target.target_frames.size());
}

nn::Var AlignmentLoss(const nn::Var& logits, const TrainTarget& target) {
  if (target.target_frames.empty()) throw Error(ErrorCode::kNoSupervisedRows, "target has no supervised rows");
  if (logits.rank() != 2 || target.num_frames != logits.dim(1)) {
    throw Error(ErrorCode::kShapeMismatch, "target length differs from matrix width");
  }
  const auto rows = target.rows(), frames = target.frames();
  for (int r : rows) {
    if (r >= logits.dim(0)) throw Error(ErrorCode::kShapeMismatch, "target row beyond matrix height");
  }
  return nn::RowCrossEntropy(logits, rows, frames);
}

// ---------------------------------------------------------------------------
// spec

TrainSpec TrainSpec::Sentence() {
  TrainSpec s;
  s.level = Level::kSentence;
  s.batch_size = 24;
  s.learning_rate = 5e-4;
  s.weight_decay = 1e-3;
  return s;
}

TrainSpec TrainSpec::Word() {
  TrainSpec s;
  s.level = Level::kWord;
  s.batch_size = 64;
  s.learning_rate = 5e-4;
  s.weight_decay = 1e-7;
  return s;
}

std::string TrainSpec::ToJson() const {
  json augs = json::array();
  for (const auto& a : augmentations) augs.push_back({{"name", a.name}, {"probability", a.probability}, {"params", a.params}});
  json j = {{"level", LevelName(level)},       {"batch_size", batch_size}, {"learning_rate", learning_rate},
            {"weight_decay", weight_decay},    {"max_steps", max_steps},   {"seed", seed},
            {"max_frames", max_frames},        {"crop_pad_sec", crop_pad_sec},
            {"crop_jitter_sec", crop_jitter_sec}, {"augmentations", augs}};
  return j.dump(2);
}

TrainSpec TrainSpec::FromJson(const std::string& text) {
  try {
    const json j = json::parse(text);
    const Level level = ParseLevel(j.value("level", std::string("word")));
    TrainSpec s = level == Level::kSentence ? Sentence() : Word();
    s.batch_size = j.value("batch_size", s.batch_size);
    s.learning_rate = j.value("learning_rate", s.learning_rate);
    s.weight_decay = j.value("weight_decay", s.weight_decay);
    s.max_steps = j.value("max_steps", s.max_steps);
    s.seed = j.value("seed", s.seed);
    s.max_frames = j.value("max_frames", s.max_frames);
    s.crop_pad_sec = j.value("crop_pad_sec", s.crop_pad_sec);
    s.crop_jitter_sec = j.value("crop_jitter_sec", s.crop_jitter_sec);
    if (j.contains("augmentations")) {
      for (const auto& a : j["augmentations"]) {
        AugmentSpec spec;
        spec.name = a.at("name").get<std::string>();
        spec.probability = a.value("probability", 0.5);
        if (a.contains("params")) spec.params = a["params"].get<std::map<std::string, double>>();
        s.augmentations.push_back(std::move(spec));
      }
    }
    ValidateAugmentations(s.augmentations);
    if (s.batch_size < 1 || s.max_steps < 0 || s.learning_rate <= 0 || s.weight_decay < 0 || s.max_frames < 1) {
      throw Error(ErrorCode::kInvalidArgument, "train spec: out-of-range value");
    }
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("train spec: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// corpus

std::vector<TrainingItem> LoadTrainingItems(const std::vector<SongRecord>& records, const G2pRegistry& g2p,
                                            bool allow_unlabeled) {
  std::vector<TrainingItem> out;
  for (const auto& r : records) {
    if (r.labels_path.empty() && !allow_unlabeled) continue;
    TrainingItem item;
    item.id = r.id;
    item.tokens = LyricsToIpa(ReadTextFile(r.lyrics_path), r.language, g2p);
    if (!r.feature_cache_path.empty()) {
      item.features = ReadFeatureCache(r.feature_cache_path);
    } else {
      Waveform wave = ReadWav(r.audio_path);
      if (wave.sample_rate != kSampleRate) {
        wave.samples = Resample(wave.samples, wave.sample_rate, kSampleRate);
        wave.sample_rate = kSampleRate;
      }
      item.features = WavToMel(wave);
      item.audio = std::move(wave);
    }
    if (item.features.stack_factor != 1) throw Error(ErrorCode::kStackFactorMismatch, r.id + ": cached features are stacked");
    if (!r.labels_path.empty()) item.labels = SongLabels::Load(r.labels_path);
    if (!item.labels.duration_sec) {
      item.labels.duration_sec = r.duration_sec > 0 ? r.duration_sec : item.features.num_frames * item.features.seconds_per_frame();
    }
    out.push_back(std::move(item));
  }
  return out;
}

void CheckItemLevel(const TrainingItem& item, Level level) {
  try {
    MakeTarget(item.tokens, item.labels, level, 1.0, 1);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kDataLevelMismatch) {
      throw Error(ErrorCode::kDataLevelMismatch, item.id + " (" + std::string(LevelName(level)) + " level): " + e.what());
    }
    throw;
  }
}

namespace {

// Line onsets used to place word-level crops: sentence labels when present,
// otherwise the first word of each line.
std::vector<double> LineOnsets(const TrainingItem& item) {
  const int n = static_cast<int>(item.tokens.sentence_starts.size());
  if (static_cast<int>(item.labels.sentences.size()) == n) {
    std::vector<double> out;
    for (const auto& s : item.labels.sentences) out.push_back(s.start_sec);
    return out;
  }
  std::vector<double> out;
  for (int s = 0; s < n; ++s) out.push_back(item.labels.words[static_cast<size_t>(item.tokens.SentenceWords(s).first)].start_sec);
  return out;
}

}  // namespace

std::optional<TrainingSample> DrawSample(const TrainingItem& item, const TrainSpec& spec, std::mt19937_64& rng) {
  MelFeatures features = item.features;
  if (item.audio && !spec.augmentations.empty()) features = WavToMel(Augment(*item.audio, spec.augmentations, rng));
  TrainingSample sample;
  if (spec.level == Level::kSentence) {
    features = StackFrames(features, kSentenceStack);
    if (features.num_frames > spec.max_frames) features = SliceFrames(features, 0, spec.max_frames);
    sample.tokens = item.tokens.tokens;
    sample.target = MakeTarget(item.tokens, item.labels, Level::kSentence, features.seconds_per_frame(), features.num_frames);
    sample.features = std::move(features);
  } else {
    const int lines = static_cast<int>(item.tokens.sentence_starts.size());
    const auto onsets = LineOnsets(item);
    const int s = std::uniform_int_distribution<int>(0, lines - 1)(rng);
    std::uniform_real_distribution<double> jitter(0.0, spec.crop_jitter_sec);
    const double spf = features.seconds_per_frame();
    const double duration = features.num_frames * spf;
    const double start = std::max(0.0, onsets[static_cast<size_t>(s)] - spec.crop_pad_sec - jitter(rng));
    const double end = s + 1 < lines ? std::min(duration, std::max(onsets[static_cast<size_t>(s)], onsets[static_cast<size_t>(s) + 1]) +
                                                              spec.crop_pad_sec + jitter(rng))
                                     : duration;
    const int f0 = static_cast<int>(std::ceil(start / spf - 1e-9));
    const int f1 = std::max(f0 + 1, std::min(features.num_frames, static_cast<int>(std::floor(end / spf + 1e-9)) + 1));
    TokenSequence line = item.tokens.Sentence(s);
    SongLabels local;
    const auto [w0, w1] = item.tokens.SentenceWords(s);
    local.words.assign(item.labels.words.begin() + w0, item.labels.words.begin() + w1);
    sample.features = SliceFrames(features, f0, f1);
    sample.tokens = line.tokens;
    sample.target = MakeTarget(line, local, Level::kWord, spf, sample.features.num_frames, f0);
  }
  if (sample.target.target_frames.empty()) return std::nullopt;
  return sample;
}

std::pair<std::vector<double>, std::vector<double>> FeatureStatistics(const std::vector<TrainingItem>& corpus,
                                                                      Level level) {
  std::vector<double> sum(kMelBins, 0.0), sq(kMelBins, 0.0);
  double count = 0.0;
  for (const auto& item : corpus) {
    for (int t = 0; t < item.features.num_frames; ++t) {
      for (int f = 0; f < kMelBins; ++f) {
        const double v = item.features.at(t, f);
        sum[f] += v;
        sq[f] += v * v;
      }
    }
    count += item.features.num_frames;
  }
  std::vector<double> mean(kMelBins, 0.0), sd(kMelBins, 1.0);
  if (count > 0) {
    for (int f = 0; f < kMelBins; ++f) {
      mean[f] = sum[f] / count;
      sd[f] = std::sqrt(std::max(sq[f] / count - mean[f] * mean[f], 1e-12));
    }
  }
  const int reps = StackFactorFor(level);
  std::vector<double> m, s;
  for (int r = 0; r < reps; ++r) {
    m.insert(m.end(), mean.begin(), mean.end());
    s.insert(s.end(), sd.begin(), sd.end());
  }
  return {m, s};
}

// ---------------------------------------------------------------------------
// training loop

namespace {

struct Checkpoint {
  static std::string WeightsPath(const std::string& dir) { return (fs::path(dir) / "weights.lswt").string(); }
  static std::string StatePath(const std::string& dir) { return (fs::path(dir) / "optimizer.bin").string(); }
  static std::string MetaPath(const std::string& dir) { return (fs::path(dir) / "checkpoint.json").string(); }

  static void Save(const std::string& dir, const AlignerModel& model, const nn::AdamW& opt, long step) {
    fs::create_directories(dir);
    model.Save(WeightsPath(dir) + ".tmp");
    fs::rename(WeightsPath(dir) + ".tmp", WeightsPath(dir));
    const auto state = opt.SaveState();
    {
      std::ofstream out(StatePath(dir) + ".tmp", std::ios::binary | std::ios::trunc);
      out.write(reinterpret_cast<const char*>(state.data()), static_cast<std::streamsize>(state.size() * sizeof(double)));
      if (!out) throw Error(ErrorCode::kIoError, "cannot write optimizer state in " + dir);
    }
    fs::rename(StatePath(dir) + ".tmp", StatePath(dir));
    WriteFileAtomic(MetaPath(dir), json({{"step", step}, {"model_version", model.Version()}}).dump() + "\n");
  }
};

std::mt19937_64 StepRng(uint64_t seed, long step) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(step),
                    static_cast<uint32_t>(static_cast<uint64_t>(step) >> 32), 0x7472u};
  return std::mt19937_64(seq);
}

}  // namespace

TrainResult Train(AlignerModel& model, const TrainSpec& spec, const std::vector<TrainingItem>& corpus,
                  const TrainOptions& options) {
  if (model.config().level != spec.level) {
    throw Error(ErrorCode::kDataLevelMismatch, "model level " + std::string(LevelName(model.config().level)) +
                                                   " differs from spec level " + std::string(LevelName(spec.level)));
  }
  for (const auto& item : corpus) CheckItemLevel(item, spec.level);
  TrainResult result;
  if (spec.max_steps == 0) return result;
  if (corpus.empty()) throw Error(ErrorCode::kInvalidArgument, "empty training corpus");

  nn::AdamW opt(model.parameters(), {.learning_rate = spec.learning_rate, .weight_decay = spec.weight_decay});
  long step = 0;
  const bool resuming = options.resume && !options.checkpoint_dir.empty() &&
                        fs::exists(Checkpoint::MetaPath(options.checkpoint_dir));
  if (resuming) {
    const json meta = json::parse(ReadTextFile(Checkpoint::MetaPath(options.checkpoint_dir)));
    step = meta.at("step").get<long>();
    model.CopyWeightsFrom(AlignerModel::Load(Checkpoint::WeightsPath(options.checkpoint_dir)));
    std::ifstream in(Checkpoint::StatePath(options.checkpoint_dir), std::ios::binary);
    std::vector<double> state(2 * model.num_parameters());
    in.read(reinterpret_cast<char*>(state.data()), static_cast<std::streamsize>(state.size() * sizeof(double)));
    if (!in) throw Error(ErrorCode::kParseError, "truncated optimizer state in " + options.checkpoint_dir);
    opt.LoadState(state, step);
  } else if (options.fit_normalization) {
    auto [mean, sd] = FeatureStatistics(corpus, spec.level);
    model.SetFeatureNormalization(std::move(mean), std::move(sd));
  }
  result.first_step = step;

  std::ofstream csv;
  if (!options.log_csv.empty()) {
    const bool append = resuming && fs::exists(options.log_csv);
    if (const auto parent = fs::path(options.log_csv).parent_path(); !parent.empty()) fs::create_directories(parent);
    csv.open(options.log_csv, append ? std::ios::app : std::ios::trunc);
    if (!csv) throw Error(ErrorCode::kIoError, "cannot write " + options.log_csv);
    if (!append) csv << "step,loss,lr,wall_ms\n";
  }

  int done_this_call = 0;
  while (step < spec.max_steps) {
    if (options.stop_after >= 0 && done_this_call >= options.stop_after) break;
    const auto t0 = std::chrono::steady_clock::now();
    auto rng = StepRng(spec.seed, step);
    std::uniform_int_distribution<size_t> pick(0, corpus.size() - 1);
    opt.ZeroGrad();
    double loss_sum = 0.0;
    int used = 0;
    for (int b = 0, attempts = 0; b < spec.batch_size && attempts < 8 * spec.batch_size; ++attempts) {
      const auto& item = corpus[pick(rng)];
      auto sample = DrawSample(item, spec, rng);
      if (!sample) continue;
      ++b;
      nn::Var logits = model.Forward(sample->tokens, sample->features);
      nn::Var loss = AlignmentLoss(logits, sample->target);
      if (!std::isfinite(loss.item())) {
        throw Error(ErrorCode::kDivergedLoss, "non-finite loss at step " + std::to_string(step) + " on " + item.id);
      }
      loss.Backward();
      loss_sum += loss.item();
      ++used;
    }
    if (used == 0) throw Error(ErrorCode::kNoSupervisedRows, "no supervised samples could be drawn");
    opt.Step(1.0 / used);
    ++step;
    ++done_this_call;
    TrainLogEntry entry;
    entry.step = step;
    entry.loss = loss_sum / used;
    entry.lr = spec.learning_rate;
    entry.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(entry);
    if (csv.is_open()) csv << entry.step << "," << entry.loss << "," << entry.lr << "," << entry.wall_ms << "\n" << std::flush;
    if (options.on_step) options.on_step(entry);
    if (!options.checkpoint_dir.empty() && options.checkpoint_every > 0 && step % options.checkpoint_every == 0) {
      Checkpoint::Save(options.checkpoint_dir, model, opt, step);
    }
  }
  if (!options.checkpoint_dir.empty()) Checkpoint::Save(options.checkpoint_dir, model, opt, step);
  result.last_step = step;
  return result;
}

}  // namespace lyricsync
