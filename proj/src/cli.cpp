// Copyright 2026 The lyricsync Authors
// SPDX-License-Identifier: Apache-2.0

#include "lyricsync/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <ostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "lyricsync/cascade.hpp"
#include "lyricsync/error.hpp"
#include "lyricsync/inspect_api.hpp"
#include "lyricsync/metrics.hpp"
#include "lyricsync/plots.hpp"
#include "lyricsync/training.hpp"

namespace lyricsync {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

// Runs f(i) for i in [0, n) on up to `jobs` threads. f must not throw.
template <typename F>
void ParallelFor(size_t n, int jobs, F&& f) {
  std::atomic<size_t> next{0};
  auto work = [&] {
    for (size_t i = next++; i < n; i = next++) f(i);
  };
  const size_t threads = std::min<size_t>(static_cast<size_t>(std::max(jobs, 1)), n);
  std::vector<std::thread> pool;
  for (size_t t = 1; t < threads; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
}

std::vector<AlignerModel> LoadModels(const std::vector<std::string>& paths, Level level) {
  std::vector<AlignerModel> out;
  for (const auto& p : paths) {
    if (!fs::exists(p)) throw Error(ErrorCode::kIoError, "weights not found: " + p);
    out.push_back(AlignerModel::Load(p));
    if (out.back().config().level != level) {
      throw Error(ErrorCode::kInvalidArgument, p + " holds a " + std::string(LevelName(out.back().config().level)) +
                                                   "-level model, expected " + std::string(LevelName(level)));
    }
  }
  return out;
}

std::vector<const AlignerModel*> Pointers(const std::vector<AlignerModel>& models) {
  std::vector<const AlignerModel*> out;
  for (const auto& m : models) out.push_back(&m);
  return out;
}

// Alignment JSON files under a path (a single file or a directory).
std::vector<std::string> PredictionFiles(const std::string& path) {
  std::vector<std::string> out;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::directory_iterator(path)) {
      if (e.path().extension() != ".json" || e.path().filename() == "failures.json") continue;
      out.push_back(e.path().string());
    }
  } else if (fs::exists(path)) {
    out.push_back(path);
  } else {
    throw Error(ErrorCode::kIoError, "predictions not found: " + path);
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct Reference {
  SongLabels labels;
  double duration = 0.0;
};

// References from a manifest (labels_path per record) or a directory of
// <id>.json label files.
std::map<std::string, Reference> LoadReferences(const std::string& path) {
  std::map<std::string, Reference> out;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::directory_iterator(path)) {
      if (e.path().extension() != ".json") continue;
      Reference r;
      r.labels = SongLabels::Load(e.path().string());
      r.duration = r.labels.duration_sec.value_or(0.0);
      out[e.path().stem().string()] = std::move(r);
    }
    return out;
  }
  for (const auto& rec : LoadManifest(path)) {
    if (rec.labels_path.empty()) continue;
    Reference r;
    r.labels = SongLabels::Load(rec.labels_path);
    r.duration = r.labels.duration_sec.value_or(rec.duration_sec);
    out[rec.id] = std::move(r);
  }
  return out;
}

std::vector<double> ParseList(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidArgument, "not a number: '" + item + "'");
    }
  }
  return out;
}

void WriteOut(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  WriteFileAtomic(path.string(), text);
}

// Prediction paired with its reference.
struct EvalSong {
  SongAlignment prediction;
  std::optional<Reference> reference;
};

std::vector<EvalSong> LoadEvalSongs(const std::string& predictions, const std::string& references, int jobs) {
  const auto files = PredictionFiles(predictions);
  std::vector<EvalSong> songs(files.size());
  std::vector<std::string> errors(files.size());
  ParallelFor(files.size(), jobs, [&](size_t i) {
    try {
      songs[i].prediction = SongAlignment::FromJson(ReadTextFile(files[i]));
    } catch (const std::exception& e) {
      errors[i] = files[i] + ": " + e.what();
    }
  });
  for (const auto& e : errors) {
    if (!e.empty()) throw Error(ErrorCode::kParseError, e);
  }
  if (!references.empty()) {
    auto refs = LoadReferences(references);
    for (auto& s : songs) {
      auto it = refs.find(s.prediction.song_id);
      if (it == refs.end()) throw Error(ErrorCode::kUnknownSong, "no reference for '" + s.prediction.song_id + "'");
      s.reference = it->second;
    }
  }
  std::sort(songs.begin(), songs.end(),
            [](const EvalSong& a, const EvalSong& b) { return a.prediction.song_id < b.prediction.song_id; });
  return songs;
}

SongEvaluation ToEvaluation(const EvalSong& s) {
  SongEvaluation ev;
  ev.song_id = s.prediction.song_id;
  std::vector<double> conf;
  for (const auto& u : s.prediction.words.units) conf.push_back(u.confidence);
  ev.words = PairWords(s.reference->labels, s.prediction.ToLabels(), conf);
  ev.duration = s.reference->duration > 0.0 ? s.reference->duration : s.prediction.duration_sec;
  ev.song_confidence = s.prediction.song_confidence;
  return ev;
}

// ---------------------------------------------------------------------------
// subcommands

struct AlignArgs {
  std::string manifest, audio, features, lyrics, language = "en", id;
  std::vector<std::string> weights_sentence, weights_word;
  std::string out_dir, store, separator;
  bool lrc = false, monotonic = false, keep_matrices = false;
  double pad_pre = 0.5, pad_post = 0.5;
  int jobs = 1;
};

int RunAlign(const AlignArgs& a, std::ostream& out, std::ostream& err) {
  const auto sent = LoadModels(a.weights_sentence, Level::kSentence);
  const auto word = LoadModels(a.weights_word, Level::kWord);
  CascadeModels models{Pointers(sent), Pointers(word)};
  models.Validate();

  std::vector<SongRecord> records;
  if (!a.manifest.empty()) {
    records = LoadManifest(a.manifest);
  } else {
    if (a.lyrics.empty() || (a.audio.empty() && a.features.empty())) {
      throw Error(ErrorCode::kInvalidArgument, "need --manifest, or --lyrics with --audio or --features");
    }
    SongRecord r;
    r.audio_path = a.audio;
    r.feature_cache_path = a.features;
    r.lyrics_path = a.lyrics;
    r.language = a.language;
    r.id = !a.id.empty() ? a.id : fs::path(!a.audio.empty() ? a.audio : a.features).stem().string();
    records.push_back(r);
  }
  CascadeOptions opts;
  opts.pad_pre_sec = a.pad_pre;
  opts.pad_post_sec = a.pad_post;
  opts.monotonic = a.monotonic;
  opts.keep_matrices = a.keep_matrices || !a.store.empty();
  opts.separator_command = a.separator;

  fs::create_directories(a.out_dir);
  std::optional<ReviewStore> store;
  if (!a.store.empty()) store.emplace(a.store);
  const auto g2p = G2pRegistry::WithBuiltins();
  std::vector<std::string> failures(records.size());
  std::mutex store_mutex;
  ParallelFor(records.size(), a.jobs, [&](size_t i) {
    const auto& rec = records[i];
    try {
      const SongAlignment result = AlignSong(rec, ReadTextFile(rec.lyrics_path), g2p, models, opts);
      const fs::path base = fs::path(a.out_dir) / rec.id;
      const std::string json = result.ToJson();
      WriteOut(base.string() + ".json", json);
      if (a.lrc) WriteOut(base.string() + ".lrc", result.ToLrc());
      if (opts.keep_matrices && result.sentences.matrix) WriteMatrix(base.string() + ".lsam", *result.sentences.matrix);
      if (store) {
        std::lock_guard<std::mutex> lock(store_mutex);
        SongRecord stored = rec;
        if (stored.duration_sec <= 0.0) stored.duration_sec = result.duration_sec;
        if (!store->FindSong(rec.id)) store->UpsertSong(stored);
        store->ImportAlignment(rec.id, result.ToLabels(), json);
        if (result.sentences.matrix) WriteMatrix(store->MatrixPath(rec.id), *result.sentences.matrix);
      }
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  });

  ojson report = ojson::array();
  for (size_t i = 0; i < records.size(); ++i) {
    if (failures[i].empty()) continue;
    report.push_back({{"song_id", records[i].id}, {"error", failures[i]}});
    err << "failed: " << records[i].id << ": " << failures[i] << "\n";
  }
  const size_t ok = records.size() - report.size();
  out << "aligned " << ok << "/" << records.size() << " songs into " << a.out_dir << "\n";
  if (!report.empty()) {
    WriteOut(fs::path(a.out_dir) / "failures.json", report.dump(2) + "\n");
    return kExitPartial;
  }
  return kExitOk;
}

struct TrainArgs {
  std::string level, manifest, spec, out, init, model = "stock";
  int c_encoder = 0, c_in = 0, depth = 0;
  int steps = -1, batch_size = -1, checkpoint_every = 100, stop_after = -1;
  double lr = -1.0;
  long seed = -1;
  bool resume = false, no_augment = false;
};

int RunTrain(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const Level level = ParseLevel(a.level);
  TrainSpec spec = level == Level::kSentence ? TrainSpec::Sentence() : TrainSpec::Word();
  if (!a.spec.empty()) {
    auto j = nlohmann::json::parse(ReadTextFile(a.spec));
    j["level"] = std::string(LevelName(level));
    spec = TrainSpec::FromJson(j.dump());
  }
  if (a.steps >= 0) spec.max_steps = a.steps;
  if (a.batch_size > 0) spec.batch_size = a.batch_size;
  if (a.lr > 0.0) spec.learning_rate = a.lr;
  if (a.seed >= 0) spec.seed = static_cast<uint64_t>(a.seed);
  if (a.no_augment) spec.augmentations.clear();

  ModelConfig config;
  if (a.model == "stock") {
    config = level == Level::kSentence ? ModelConfig::Sentence() : ModelConfig::Word();
  } else if (a.model == "toy") {
    config = ModelConfig::Toy(level, a.c_encoder > 0 ? a.c_encoder : 8, a.c_in > 0 ? a.c_in : 2,
                              a.depth > 0 ? a.depth : 2);
  } else {
    throw Error(ErrorCode::kInvalidArgument, "--model must be 'stock' or 'toy'");
  }
  if (a.model == "stock" && a.c_encoder > 0) config.c_encoder = a.c_encoder;
  if (a.model == "stock" && a.c_in > 0) config.c_in = a.c_in;

  const auto items = LoadTrainingItems(LoadManifest(a.manifest), G2pRegistry::WithBuiltins());
  if (items.empty()) throw Error(ErrorCode::kInvalidArgument, "manifest has no labelled songs");

  const fs::path dir(a.out);
  fs::create_directories(dir);
  const std::string ckpt = (dir / "checkpoint").string();
  const bool resuming = a.resume && fs::exists(fs::path(ckpt) / "checkpoint.json");
  AlignerModel model = resuming ? AlignerModel::Load((fs::path(ckpt) / "weights.lswt").string())
                       : !a.init.empty() ? AlignerModel::Load(a.init)
                                         : AlignerModel(config, spec.seed);
  if (model.config().level != level) throw Error(ErrorCode::kDataLevelMismatch, "initial weights are for another level");
  WriteOut(dir / "train_spec.json", spec.ToJson());

  TrainOptions opts;
  opts.checkpoint_dir = ckpt;
  opts.checkpoint_every = a.checkpoint_every;
  opts.resume = a.resume;
  opts.log_csv = (dir / "loss.csv").string();
  opts.fit_normalization = a.init.empty();
  opts.stop_after = a.stop_after;
  const long total = spec.max_steps;
  opts.on_step = [&](const TrainLogEntry& e) {
    if (e.step == 1 || e.step % 50 == 0 || e.step == total) {
      err << "step " << e.step << "/" << total << " loss " << e.loss << "\n";
    }
  };
  const TrainResult result = Train(model, spec, items, opts);
  model.Save((dir / "weights.lswt").string());

  // Initial loss comes from the first logged step, which may predate a resume.
  double first_loss = NAN, last_loss = NAN;
  std::ifstream csv(opts.log_csv);
  std::string line;
  std::getline(csv, line);
  while (std::getline(csv, line)) {
    std::stringstream ss(line);
    std::string step, loss;
    std::getline(ss, step, ',');
    std::getline(ss, loss, ',');
    if (loss.empty()) continue;
    if (std::isnan(first_loss)) first_loss = std::stod(loss);
    last_loss = std::stod(loss);
  }
  out << "trained " << LevelName(level) << " model " << model.Version() << " steps " << result.first_step << ".."
      << result.last_step << " initial_loss " << first_loss << " final_loss " << last_loss << " ratio "
      << last_loss / first_loss << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string predictions, references, taus = "0.2", out;
  double true_bound = 0.2, range = 2.0, word_length = 0.5;
  int bins = 80, jobs = 1;
};

int RunEval(const EvalArgs& a, std::ostream& out) {
  const auto songs = LoadEvalSongs(a.predictions, a.references, a.jobs);
  std::vector<SongEvaluation> evals(songs.size());
  std::vector<std::string> errors(songs.size());
  ParallelFor(songs.size(), a.jobs, [&](size_t i) {
    try {
      evals[i] = ToEvaluation(songs[i]);
    } catch (const std::exception& e) {
      errors[i] = songs[i].prediction.song_id + ": " + e.what();
    }
  });
  for (const auto& e : errors) {
    if (!e.empty()) throw Error(ErrorCode::kInvalidArgument, e);
  }
  MetricsOptions mo;
  mo.taus = ParseList(a.taus);
  if (mo.taus.empty()) throw Error(ErrorCode::kInvalidArgument, "--taus is empty");
  mo.true_bound = a.true_bound;
  mo.histogram_bins = a.bins;
  mo.histogram_range = a.range;
  mo.default_word_length = a.word_length;
  const MetricsReport report = Evaluate(evals, mo);

  if (!a.out.empty()) {
    const fs::path dir(a.out);
    fs::create_directories(dir);
    WriteOut(dir / "report.json", report.ToJson());
    WriteOut(dir / "per_song.csv", report.ToCsv());
    std::ostringstream tri;
    tri << "threshold,tp,fp,tn,fn,precision,recall,f1,accepted_mae\n";
    for (const auto& r : report.triage) {
      tri << r.threshold << ',' << r.tp << ',' << r.fp << ',' << r.tn << ',' << r.fn << ',' << r.precision << ','
          << r.recall << ',' << r.f1 << ',' << (r.accepted_mae ? std::to_string(*r.accepted_mae) : "") << '\n';
    }
    WriteOut(dir / "triage.csv", tri.str());
    WriteOut(dir / "histogram.svg", HistogramSvg(report.histogram));
    WriteOut(dir / "threshold.svg", ThresholdSvg(report.triage));
    WriteOut(dir / "pr_curve.svg", PrCurveSvg(report.triage));
  }
  const auto& g = report.aggregate;
  out << "songs " << report.per_song.size() << " words " << g.n_words << "\n";
  out << "MAE " << g.mae << "\nMedAE " << g.medae << "\nPerc " << g.perc << "\n";
  for (const auto& [tau, v] : g.mauch) out << "Mauch_" << tau << " " << v << "\n";
  const TriageRow* best = nullptr;
  for (const auto& r : report.triage) {
    if (!best || r.f1 > best->f1) best = &r;
  }
  if (best) out << "best_f1 " << best->f1 << " at_threshold " << best->threshold << "\n";
  return kExitOk;
}

struct TriageArgs {
  std::string predictions, references, unit = "song", out;
  std::optional<double> threshold, reject_fraction;
  double true_bound = 0.2;
};

int RunTriage(const TriageArgs& a, std::ostream& out) {
  if (a.threshold.has_value() == a.reject_fraction.has_value()) {
    throw Error(ErrorCode::kInvalidArgument, "give exactly one of --threshold and --reject-fraction");
  }
  if (a.unit != "song" && a.unit != "word") throw Error(ErrorCode::kInvalidArgument, "--unit must be song or word");
  const auto songs = LoadEvalSongs(a.predictions, a.references, 1);
  if (songs.empty()) throw Error(ErrorCode::kEmptyInput, "no predictions");

  // Candidates and, per candidate, the words it covers.
  std::vector<Scored> items;
  std::vector<std::vector<std::pair<size_t, size_t>>> covers;
  for (size_t s = 0; s < songs.size(); ++s) {
    const auto& p = songs[s].prediction;
    if (a.unit == "song") {
      items.push_back({p.song_id, p.song_confidence});
      covers.emplace_back();
      for (size_t w = 0; w < p.words.units.size(); ++w) covers.back().push_back({s, w});
    } else {
      for (size_t w = 0; w < p.words.units.size(); ++w) {
        char idx[16];
        std::snprintf(idx, sizeof(idx), "%06zu", w);
        items.push_back({p.song_id + "#" + idx, p.words.units[w].confidence});
        covers.push_back({{s, w}});
      }
    }
  }
  std::vector<bool> rejected(items.size(), false);
  if (a.threshold) {
    for (size_t i = 0; i < items.size(); ++i) rejected[i] = items[i].confidence < *a.threshold;
  } else {
    const auto ids = RejectLowest(items, *a.reject_fraction);
    std::set<std::string> set(ids.begin(), ids.end());
    for (size_t i = 0; i < items.size(); ++i) rejected[i] = set.count(items[i].id) > 0;
  }

  ojson report;
  report["unit"] = a.unit;
  if (a.threshold) report["threshold"] = *a.threshold;
  if (a.reject_fraction) report["reject_fraction"] = *a.reject_fraction;
  ojson acc = ojson::array(), rej = ojson::array();
  for (size_t i = 0; i < items.size(); ++i) {
    (rejected[i] ? rej : acc).push_back({{"id", items[i].id}, {"confidence", items[i].confidence}});
  }
  report["accepted"] = acc;
  report["rejected"] = rej;
  out << "accepted " << acc.size() << " rejected " << rej.size() << " (" << a.unit << " level)\n";

  if (!a.references.empty()) {
    std::vector<SongEvaluation> evals;
    for (const auto& s : songs) evals.push_back(ToEvaluation(s));
    // Song units compare mean per-song MAE; word units compare word MAE.
    double full = 0.0, accepted = 0.0;
    long n_full = 0, n_acc = 0, tp = 0, fp = 0, tn = 0, fn = 0;
    for (size_t i = 0; i < items.size(); ++i) {
      double err_sum = 0.0;
      for (const auto& [s, w] : covers[i]) {
        const auto& wt = evals[s].words[w];
        const double dev = std::abs(wt.t_pred - wt.t_ref);
        err_sum += dev;
        const bool correct = dev < a.true_bound;
        if (!rejected[i]) (correct ? tp : fp)++;
        else (correct ? fn : tn)++;
      }
      const double v = covers[i].empty() ? 0.0 : err_sum / static_cast<double>(covers[i].size());
      full += v;
      ++n_full;
      if (!rejected[i]) {
        accepted += v;
        ++n_acc;
      }
    }
    const double full_mae = full / std::max<long>(n_full, 1);
    const auto m = F1FromConfusion(static_cast<double>(tp), static_cast<double>(fp), static_cast<double>(fn));
    report["full_mae"] = full_mae;
    report["accepted_mae"] = n_acc ? ojson(accepted / n_acc) : ojson(nullptr);
    report["mae_delta"] = n_acc ? ojson(accepted / n_acc - full_mae) : ojson(nullptr);
    report["confusion"] = {{"tp", tp}, {"fp", fp}, {"tn", tn}, {"fn", fn}};
    report["precision"] = m.precision;
    report["recall"] = m.recall;
    report["f1"] = m.f1;
    out << "full_mae " << full_mae;
    if (n_acc) out << " accepted_mae " << accepted / n_acc;
    out << "\n";
  }
  if (!a.out.empty()) WriteOut(a.out, report.dump(2) + "\n");
  return kExitOk;
}

struct SynthArgs {
  int n = 10;
  long seed = 0;
  std::string out;
  double noise = 0.5, coarticulation = 0.0;
};

int RunSynth(const SynthArgs& a, std::ostream& out) {
  SynthOptions so;
  so.noise = a.noise;
  so.coarticulation = a.coarticulation;
  const auto songs = SynthCorpus(a.n, static_cast<uint64_t>(a.seed), Vocabulary::Default(), so);
  const auto records = WriteSynthCorpus(a.out, songs);
  out << "wrote " << records.size() << " songs to " << (fs::path(a.out) / "manifest.jsonl").string() << "\n";
  return kExitOk;
}

struct BenchArgs {
  std::string manifest, out;
  std::vector<std::string> weights_sentence, weights_word;
  int repeat = 1, limit = 0;
};

int RunBench(const BenchArgs& a, std::ostream& out) {
  const auto sent = LoadModels(a.weights_sentence, Level::kSentence);
  const auto word = LoadModels(a.weights_word, Level::kWord);
  CascadeModels models{Pointers(sent), Pointers(word)};
  auto records = LoadManifest(a.manifest);
  if (a.limit > 0 && records.size() > static_cast<size_t>(a.limit)) records.resize(static_cast<size_t>(a.limit));
  if (records.empty()) throw Error(ErrorCode::kEmptyInput, "manifest is empty");
  const auto g2p = G2pRegistry::WithBuiltins();
  StageTimings sum;
  double total_ms = 0.0;
  long runs = 0;
  for (int r = 0; r < std::max(a.repeat, 1); ++r) {
    for (const auto& rec : records) {
      const std::string lyrics = ReadTextFile(rec.lyrics_path);
      const auto t0 = std::chrono::steady_clock::now();
      AlignSong(rec, lyrics, g2p, models, {}, &sum);
      total_ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      ++runs;
    }
  }
  const double n = static_cast<double>(runs);
  const std::vector<std::pair<std::string, double>> rows = {{"text_preprocess", sum.text_ms / n},
                                                            {"audio_preprocess", sum.audio_ms / n},
                                                            {"sentence_model", sum.sentence_ms / n},
                                                            {"word_model", sum.word_ms / n},
                                                            {"total", total_ms / n}};
  std::ostringstream table;
  table << "stage,mean_ms\n";
  for (const auto& [name, ms] : rows) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", ms);
    table << name << ',' << buf << '\n';
  }
  out << table.str();
  if (!a.out.empty()) WriteOut(a.out, table.str());
  return kExitOk;
}

struct ServeArgs {
  std::string store, manifest, alignments, host = "127.0.0.1", cors_origin = "*";
  int port = 8765;
};

int RunServe(const ServeArgs& a, std::ostream& out) {
  ReviewStore store(a.store);
  if (!a.manifest.empty()) {
    for (const auto& rec : LoadManifest(a.manifest)) {
      if (!store.FindSong(rec.id)) store.UpsertSong(rec);
    }
  }
  if (!a.alignments.empty()) {
    for (const auto& file : PredictionFiles(a.alignments)) {
      const std::string json = ReadTextFile(file);
      const SongAlignment al = SongAlignment::FromJson(json);
      if (!store.FindSong(al.song_id)) {
        SongRecord r;
        r.id = al.song_id;
        r.duration_sec = al.duration_sec;
        store.UpsertSong(r);
      }
      store.ImportAlignment(al.song_id, al.ToLabels(), json);
      const fs::path matrix = fs::path(file).replace_extension(".lsam");
      if (fs::exists(matrix)) fs::copy_file(matrix, store.MatrixPath(al.song_id), fs::copy_options::overwrite_existing);
    }
  }
  ServerOptions so;
  so.host = a.host;
  so.port = a.port;
  so.cors_origin = a.cors_origin;
  InspectServer server(store, so);
  out << "serving " << a.store << " on http://" << a.host << ":" << a.port << "\n" << std::flush;
  server.Listen();
  return kExitOk;
}

}  // namespace

int RunCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"lyricsync: lyrics-to-audio alignment toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file with default flag values");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.set_version_flag("--version", "0.1.0");

  AlignArgs align;
  auto* c_align = app.add_subcommand("align", "Align lyrics to audio with the two-stage cascade");
  c_align->add_option("--manifest", align.manifest, "Manifest of songs (JSONL)");
  c_align->add_option("--audio,--vocals", align.audio, "Separated vocal WAV for a single song");
  c_align->add_option("--features", align.features, "Feature cache for a single song");
  c_align->add_option("--lyrics", align.lyrics, "Lyrics text file for a single song");
  c_align->add_option("--language", align.language, "Lyrics language")->capture_default_str();
  c_align->add_option("--id", align.id, "Song id for a single song");
  c_align->add_option("--weights-sentence", align.weights_sentence, "Sentence-level weights (repeat for ensembles)")
      ->required();
  c_align->add_option("--weights-word", align.weights_word, "Word-level weights (repeat for ensembles)")->required();
  c_align->add_option("--out-dir", align.out_dir, "Output directory")->required();
  c_align->add_flag("--lrc", align.lrc, "Also write LRC files");
  c_align->add_flag("--monotonic", align.monotonic, "Sort conflicting word onsets within a segment");
  c_align->add_flag("--keep-matrices", align.keep_matrices, "Write sentence-level probability matrices");
  c_align->add_option("--pad-pre", align.pad_pre, "Segment padding before a line (s)")->capture_default_str();
  c_align->add_option("--pad-post", align.pad_post, "Segment padding after the next line onset (s)")
      ->capture_default_str();
  c_align->add_option("--separator", align.separator, "Vocal separation command with {in} and {out}");
  c_align->add_option("--store", align.store, "Also import results into this review store");
  c_align->add_option("--jobs", align.jobs, "Songs processed in parallel")->capture_default_str()->check(CLI::PositiveNumber);

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train a sentence- or word-level model");
  c_train->add_option("--level", train.level, "sentence or word")->required()->check(CLI::IsMember({"sentence", "word"}));
  c_train->add_option("--manifest", train.manifest, "Training manifest")->required();
  c_train->add_option("--spec", train.spec, "Training spec JSON");
  c_train->add_option("--out", train.out, "Output directory")->required();
  c_train->add_option("--model", train.model, "stock or toy")->capture_default_str()->check(CLI::IsMember({"stock", "toy"}));
  c_train->add_option("--c-encoder", train.c_encoder, "Encoder channels override");
  c_train->add_option("--c-in", train.c_in, "Correlation channels override");
  c_train->add_option("--depth", train.depth, "UNet depth (toy models)");
  c_train->add_option("--init", train.init, "Start from these weights");
  c_train->add_option("--steps", train.steps, "Optimizer steps");
  c_train->add_option("--batch-size", train.batch_size, "Samples per step");
  c_train->add_option("--lr", train.lr, "Learning rate");
  c_train->add_option("--seed", train.seed, "Random seed");
  c_train->add_option("--checkpoint-every", train.checkpoint_every, "Checkpoint interval in steps")
      ->capture_default_str();
  c_train->add_flag("--resume", train.resume, "Continue from the checkpoint in --out");
  c_train->add_flag("--no-augment", train.no_augment, "Disable augmentations");
  c_train->add_option("--stop-after", train.stop_after, "Stop after this many steps in this run")
      ->group("");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Score predictions against reference labels");
  c_eval->add_option("--predictions", ev.predictions, "Alignment JSON file or directory")->required();
  c_eval->add_option("--references", ev.references, "Manifest or directory of label files")->required();
  c_eval->add_option("--taus", ev.taus, "Comma-separated Mauch tolerances (s)")->capture_default_str();
  c_eval->add_option("--true-bound", ev.true_bound, "Deviation counted as correct (s)")->capture_default_str();
  c_eval->add_option("--bins", ev.bins, "Histogram bins")->capture_default_str();
  c_eval->add_option("--range", ev.range, "Histogram half-range (s)")->capture_default_str();
  c_eval->add_option("--word-length", ev.word_length, "Length of the final word for Perc (s)")->capture_default_str();
  c_eval->add_option("--out", ev.out, "Report directory");
  c_eval->add_option("--jobs", ev.jobs, "Parallel workers")->capture_default_str()->check(CLI::PositiveNumber);

  TriageArgs tr;
  double tr_threshold = 0.0, tr_fraction = 0.0;
  auto* c_triage = app.add_subcommand("triage", "Split predictions into accepted and rejected by confidence");
  c_triage->add_option("--predictions", tr.predictions, "Alignment JSON file or directory")->required();
  c_triage->add_option("--references", tr.references, "Manifest or directory of label files");
  auto* o_thr = c_triage->add_option("--threshold", tr_threshold, "Reject confidence below this");
  auto* o_frac = c_triage->add_option("--reject-fraction", tr_fraction, "Reject this lowest-confidence fraction")
                     ->check(CLI::Range(0.0, 1.0));
  o_thr->excludes(o_frac);
  c_triage->add_option("--unit", tr.unit, "song or word")->capture_default_str()->check(CLI::IsMember({"song", "word"}));
  c_triage->add_option("--true-bound", tr.true_bound, "Deviation counted as correct (s)")->capture_default_str();
  c_triage->add_option("--out", tr.out, "Report JSON path");

  SynthArgs sy;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic corpus with exact onsets");
  c_synth->add_option("--n", sy.n, "Number of songs")->capture_default_str()->check(CLI::PositiveNumber);
  c_synth->add_option("--seed", sy.seed, "Random seed")->capture_default_str();
  c_synth->add_option("--out", sy.out, "Output directory")->required();
  c_synth->add_option("--noise", sy.noise, "Additive noise std")->capture_default_str();
  c_synth->add_option("--coarticulation", sy.coarticulation, "Blend weight into token onsets")->capture_default_str();

  BenchArgs be;
  auto* c_bench = app.add_subcommand("bench", "Mean per-stage processing time");
  c_bench->add_option("--manifest", be.manifest, "Songs to time")->required();
  c_bench->add_option("--weights-sentence", be.weights_sentence, "Sentence-level weights")->required();
  c_bench->add_option("--weights-word", be.weights_word, "Word-level weights")->required();
  c_bench->add_option("--repeat", be.repeat, "Passes over the manifest")->capture_default_str();
  c_bench->add_option("--limit", be.limit, "Use at most this many songs");
  c_bench->add_option("--out", be.out, "CSV output path");

  ServeArgs se;
  auto* c_serve = app.add_subcommand("serve", "Run the review HTTP service");
  c_serve->add_option("--store", se.store, "Review store directory")->required();
  c_serve->add_option("--manifest", se.manifest, "Register these songs");
  c_serve->add_option("--alignments", se.alignments, "Import alignment JSON files from this directory");
  c_serve->add_option("--host", se.host, "Bind address")->capture_default_str();
  c_serve->add_option("--port", se.port, "Port")->capture_default_str();
  c_serve->add_option("--cors-origin", se.cors_origin, "Allowed CORS origin")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  if (o_thr->count()) tr.threshold = tr_threshold;
  if (o_frac->count()) tr.reject_fraction = tr_fraction;

  err << "# resolved configuration\n" << app.config_to_str(true, false);
  err.flush();

  try {
    if (c_align->parsed()) return RunAlign(align, out, err);
    if (c_train->parsed()) return RunTrain(train, out, err);
    if (c_eval->parsed()) return RunEval(ev, out);
    if (c_triage->parsed()) return RunTriage(tr, out);
    if (c_synth->parsed()) return RunSynth(sy, out);
    if (c_bench->parsed()) return RunBench(be, out);
    if (c_serve->parsed()) return RunServe(se, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace lyricsync
