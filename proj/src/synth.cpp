// Copyright 2026 The lyricsync Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic songs rendered from per-token spectral templates, with onsets
// known exactly by construction.

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "lyricsync/error.hpp"
#include "lyricsync/training.hpp"

namespace lyricsync {

namespace fs = std::filesystem;

std::vector<double> SynthTemplates(const SynthOptions& options) {
  std::mt19937_64 rng(options.template_seed);
  std::normal_distribution<double> dist(0.0, options.template_spread);
  std::vector<double> t(static_cast<size_t>(Vocabulary::kSize) * kMelBins);
  for (int id = 0; id < Vocabulary::kSize; ++id) {
    for (int f = 0; f < kMelBins; ++f) t[static_cast<size_t>(id) * kMelBins + f] = -4.0 + dist(rng);
  }
  // Silence sits at the log floor.
  const int sil = Vocabulary::Default().silence_id();
  for (int f = 0; f < kMelBins; ++f) t[static_cast<size_t>(sil) * kMelBins + f] = std::log(kLogOffset);
  return t;
}

namespace {

int Draw(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

// Symbols eligible for random words: plain phones only, no prosodic marks.
std::vector<std::string> WordSymbols(const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (int id = 0; id < vocab.size(); ++id) {
    const auto& s = vocab.Symbol(id);
    if (id == vocab.silence_id() || s == "ˈ" || s == "ˌ" || s == "ː") continue;
    out.push_back(s);
  }
  return out;
}

}  // namespace

std::vector<SynthSong> SynthCorpus(int n_songs, uint64_t seed, const Vocabulary& vocab, const SynthOptions& options) {
  if (n_songs < 1) throw Error(ErrorCode::kInvalidArgument, "n_songs must be at least 1");
  const auto templates = SynthTemplates(options);
  const auto symbols = WordSymbols(vocab);
  const auto g2p = G2pRegistry::WithBuiltins();
  const int sil = vocab.silence_id();
  std::vector<SynthSong> songs;
  for (int n = 0; n < n_songs; ++n) {
    std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(n), 0x73796eu};
    std::mt19937_64 rng(seq);
    SynthSong song;
    char id[32];
    std::snprintf(id, sizeof(id), "synth-%llu-%04d", static_cast<unsigned long long>(seed), n);
    song.id = id;

    std::ostringstream lyrics;
    const int lines = Draw(rng, options.min_lines, options.max_lines);
    for (int l = 0; l < lines; ++l) {
      const int words = Draw(rng, options.min_words, options.max_words);
      for (int w = 0; w < words; ++w) {
        const int len = Draw(rng, options.min_symbols, options.max_symbols);
        if (w) lyrics << ' ';
        for (int k = 0; k < len; ++k) lyrics << symbols[static_cast<size_t>(Draw(rng, 0, static_cast<int>(symbols.size()) - 1))];
      }
      lyrics << '\n';
    }
    song.lyrics = lyrics.str();
    // Greedy segmentation may merge adjacent symbols; render what the text
    // pipeline will actually produce.
    song.tokens = LyricsToIpa(song.lyrics, "ipa", g2p, vocab);

    std::vector<int> frame_token;  // template id per frame
    std::vector<int> frame_prev;   // previous template id, for blending
    std::vector<int> frame_age;    // frames since the token started
    auto emit = [&](int token, int count, int prev) {
      for (int i = 0; i < count; ++i) {
        frame_token.push_back(token);
        frame_prev.push_back(prev);
        frame_age.push_back(i);
      }
    };
    emit(sil, Draw(rng, options.min_lead_frames, options.max_lead_frames), sil);
    int prev = sil;
    for (int i = 0; i < song.tokens.size(); ++i) {
      const int tok = song.tokens.tokens[static_cast<size_t>(i)];
      song.token_onsets.push_back(static_cast<int>(frame_token.size()));
      const int dur = tok == sil ? Draw(rng, options.min_gap_frames, options.max_gap_frames)
                                 : Draw(rng, options.min_token_frames, options.max_token_frames);
      emit(tok, dur, prev);
      prev = tok;
    }
    emit(sil, Draw(rng, options.min_tail_frames, options.max_tail_frames), prev);

    const int frames = static_cast<int>(frame_token.size());
    song.features.num_frames = frames;
    song.features.frames.resize(static_cast<size_t>(frames) * kMelBins);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (int t = 0; t < frames; ++t) {
      const double* cur = templates.data() + static_cast<size_t>(frame_token[t]) * kMelBins;
      const double* old = templates.data() + static_cast<size_t>(frame_prev[t]) * kMelBins;
      const double blend = frame_age[t] < options.coarticulation_frames
                               ? options.coarticulation * (1.0 - static_cast<double>(frame_age[t]) / options.coarticulation_frames)
                               : 0.0;
      for (int f = 0; f < kMelBins; ++f) {
        double v = blend > 0.0 ? (1.0 - blend) * cur[f] + blend * old[f] : cur[f];
        if (options.noise > 0.0) v += options.noise * noise(rng);
        song.features.frames[static_cast<size_t>(t) * kMelBins + f] = static_cast<float>(v);
      }
    }

    const double spf = song.features.seconds_per_frame();
    for (size_t w = 0; w < song.tokens.word_starts.size(); ++w) {
      const int onset = song.token_onsets[static_cast<size_t>(song.tokens.word_starts[w])];
      song.labels.words.push_back({onset * spf, song.tokens.source_words[w]});
    }
    const auto line_texts = SplitLyricLines(song.lyrics);
    for (size_t s = 0; s < song.tokens.sentence_starts.size(); ++s) {
      const int onset = song.token_onsets[static_cast<size_t>(song.tokens.sentence_starts[s])];
      song.labels.sentences.push_back({onset * spf, s < line_texts.size() ? line_texts[s] : std::string()});
    }
    song.labels.duration_sec = frames * spf;
    songs.push_back(std::move(song));
  }
  return songs;
}

std::vector<SongRecord> WriteSynthCorpus(const std::string& dir, const std::vector<SynthSong>& songs) {
  const fs::path root(dir);
  fs::create_directories(root / "features");
  fs::create_directories(root / "lyrics");
  fs::create_directories(root / "labels");
  std::vector<SongRecord> records;
  for (const auto& s : songs) {
    SongRecord r;
    r.id = s.id;
    r.feature_cache_path = (root / "features" / (s.id + ".lsfc")).string();
    r.lyrics_path = (root / "lyrics" / (s.id + ".txt")).string();
    r.labels_path = (root / "labels" / (s.id + ".json")).string();
    r.language = "ipa";
    r.duration_sec = s.labels.duration_sec.value_or(0.0);
    WriteFeatureCache(r.feature_cache_path, s.features);
    WriteTextFile(r.lyrics_path, s.lyrics);
    s.labels.Save(r.labels_path);
    records.push_back(std::move(r));
  }
  WriteManifest((root / "manifest.jsonl").string(), records);
  return records;
}

TrainingItem ToTrainingItem(const SynthSong& song) {
  TrainingItem item;
  item.id = song.id;
  item.tokens = song.tokens;
  item.features = song.features;
  item.labels = song.labels;
  return item;
}

}  // namespace lyricsync
