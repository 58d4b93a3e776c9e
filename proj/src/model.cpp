// Copyright 2026 The lyricsync Authors
// SPDX-License-Identifier: Apache-2.0

#include "lyricsync/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "json.hpp"
#include "lyricsync/error.hpp"

namespace lyricsync {

using nn::Var;
using json = nlohmann::json;

std::string_view LevelName(Level level) { return level == Level::kSentence ? "sentence" : "word"; }

Level ParseLevel(std::string_view name) {
  if (name == "sentence") return Level::kSentence;
  if (name == "word") return Level::kWord;
  throw Error(ErrorCode::kInvalidArgument, "unknown level '" + std::string(name) + "'");
}

int StackFactorFor(Level level) { return level == Level::kSentence ? kSentenceStack : 1; }

// ---------------------------------------------------------------------------
// ModelConfig

ModelConfig ModelConfig::Sentence() {
  ModelConfig c;
  c.level = Level::kSentence;
  c.c_encoder = 256;
  c.unet_channels = {32, 64, 128, 256};
  c.n_mels_effective = kMelBins * kSentenceStack;
  return c;
}

ModelConfig ModelConfig::Word() {
  ModelConfig c;
  c.level = Level::kWord;
  c.c_encoder = 512;
  c.unet_channels = {32, 64, 128};
  c.n_mels_effective = kMelBins;
  return c;
}

ModelConfig ModelConfig::Toy(Level level, int c_encoder, int c_in, int depth) {
  ModelConfig c = level == Level::kSentence ? Sentence() : Word();
  c.c_encoder = c_encoder;
  c.c_in = c_in;
  c.unet_channels.clear();
  for (int i = 0, ch = 32; i < depth; ++i, ch *= 2) c.unet_channels.push_back(ch);
  return c;
}

void ModelConfig::Validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kInvalidArgument, "model config: " + msg); };
  if (c_encoder <= 0 || c_encoder % 2 != 0) fail("c_encoder must be a positive even integer");
  if (c_in <= 0) fail("c_in must be positive");
  if (cbhg_layers <= 0) fail("cbhg_layers must be positive");
  if (bank_size <= 0 || highway_layers < 0) fail("bad CBHG sizes");
  if (unet_channels.empty() || unet_channels[0] != 32) fail("unet_channels must start at 32");
  for (size_t i = 1; i < unet_channels.size(); ++i) {
    if (unet_channels[i] != 2 * unet_channels[i - 1]) fail("unet_channels must double at each level");
  }
  if (vocab_size != 76) fail("vocab_size must be 76");
  if (n_mels_effective != kMelBins * stack_factor()) fail("n_mels_effective does not match the level's stacking");
}

std::string ModelConfig::ToJson() const {
  json j = {{"level", LevelName(level)},
            {"c_encoder", c_encoder},
            {"c_in", c_in},
            {"cbhg_layers", cbhg_layers},
            {"unet_channels", unet_channels},
            {"vocab_size", vocab_size},
            {"n_mels_effective", n_mels_effective},
            {"bank_size", bank_size},
            {"highway_layers", highway_layers}};
  return j.dump();
}

ModelConfig ModelConfig::FromJson(const std::string& text) {
  try {
    const json j = json::parse(text);
    ModelConfig c;
    c.level = ParseLevel(j.at("level").get<std::string>());
    c.c_encoder = j.at("c_encoder");
    c.c_in = j.at("c_in");
    c.cbhg_layers = j.at("cbhg_layers");
    c.unet_channels = j.at("unet_channels").get<std::vector<int>>();
    c.vocab_size = j.at("vocab_size");
    c.n_mels_effective = j.at("n_mels_effective");
    c.bank_size = j.value("bank_size", 8);
    c.highway_layers = j.value("highway_layers", 4);
    c.Validate();
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("model config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// decoding

AlignmentMatrix AlignmentMatrix::FromLogits(int rows, int cols, std::vector<double> logits) {
  if (static_cast<size_t>(rows) * cols != logits.size()) throw Error(ErrorCode::kShapeMismatch, "logits size");
  AlignmentMatrix a;
  a.rows = rows;
  a.cols = cols;
  a.logits = std::move(logits);
  a.probs.resize(a.logits.size());
  for (int r = 0; r < rows; ++r) {
    const double* in = a.logits.data() + static_cast<size_t>(r) * cols;
    double* out = a.probs.data() + static_cast<size_t>(r) * cols;
    const double mx = *std::max_element(in, in + cols);
    double sum = 0.0;
    for (int c = 0; c < cols; ++c) sum += out[c] = std::exp(in[c] - mx);
    for (int c = 0; c < cols; ++c) out[c] /= sum;
  }
  return a;
}

std::vector<DecodedOnset> DecodeOnsets(const AlignmentMatrix& a, std::span<const int> rows, double seconds_per_frame) {
  std::vector<DecodedOnset> out;
  out.reserve(rows.size());
  for (int r : rows) {
    if (r < 0 || r >= a.rows) throw Error(ErrorCode::kInvalidArgument, "row " + std::to_string(r) + " out of range");
    // Argmax over logits is the argmax over probs; logits avoid ties created
    // by exp underflow.
    int best = 0;
    for (int c = 1; c < a.cols; ++c) {
      if (a.logit(r, c) > a.logit(r, best)) best = c;
    }
    out.push_back({r, best, best * seconds_per_frame, a.prob(r, best)});
  }
  return out;
}

AlignmentMatrix EnsembleLogits(std::span<const AlignmentMatrix> members) {
  if (members.empty()) throw Error(ErrorCode::kEmptyEnsemble, "no ensemble members");
  const int rows = members[0].rows, cols = members[0].cols;
  std::vector<double> sum(members[0].logits.size(), 0.0);
  for (const auto& m : members) {
    if (m.rows != rows || m.cols != cols) throw Error(ErrorCode::kShapeMismatch, "ensemble members differ in shape");
    for (size_t i = 0; i < sum.size(); ++i) sum[i] += m.logits[i];
  }
  for (auto& v : sum) v /= static_cast<double>(members.size());
  return AlignmentMatrix::FromLogits(rows, cols, std::move(sum));
}

Var CrossCorrelate(const Var& text_features, const Var& audio_features) {
  if (text_features.rank() != 3 || audio_features.rank() != 3 || text_features.dim(0) != audio_features.dim(0) ||
      text_features.dim(1) != audio_features.dim(1)) {
    throw Error(ErrorCode::kShapeMismatch, "cross-correlation inputs " + nn::ShapeToString(text_features.shape()) +
                                               " and " + nn::ShapeToString(audio_features.shape()));
  }
  const int c_in = text_features.dim(0), c_enc = text_features.dim(1);
  auto rows = [&](const Var& f) { return nn::Reshape(nn::Permute3(f, {2, 0, 1}), {f.dim(2), c_in * c_enc}); };
  return nn::CrossCorrelate(rows(text_features), rows(audio_features), c_in);
}

int ReflectIndex(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

int PaddedLength(int length, int depth) {
  const int unit = 1 << depth;
  return (length + unit - 1) / unit * unit;
}

// ---------------------------------------------------------------------------
// parameters

namespace {

// Deterministic parameter initialisation independent of library RNG details.
uint64_t SplitMix(uint64_t& state) {
  uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Uniform01(uint64_t& state) { return static_cast<double>(SplitMix(state) >> 11) * 0x1.0p-53; }

std::string Key(const std::string& prefix, const std::string& name) { return prefix + "." + name; }

}  // namespace

Var& AlignerModel::Param(const std::string& name, nn::Shape shape, double bound, uint64_t& state, bool gaussian) {
  std::vector<double> values(nn::NumElements(shape));
  for (size_t i = 0; i < values.size(); ++i) {
    if (gaussian) {
      // Box-Muller with bound as the standard deviation.
      const double u1 = std::max(Uniform01(state), 1e-300), u2 = Uniform01(state);
      values[i] = bound * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    } else {
      values[i] = bound * (2.0 * Uniform01(state) - 1.0);
    }
  }
  params_.push_back({name, Var::Parameter(std::move(shape), std::move(values))});
  return params_.back().var;
}

Var AlignerModel::Find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.var;
  }
  throw Error(ErrorCode::kInvalidArgument, "no parameter named " + name);
}

void AlignerModel::BuildCbhg(const std::string& prefix, int in_dim, uint64_t& state) {
  const int c = config_.c_encoder, half = c / 2;
  auto linear = [&](const std::string& name, int in, int out, double bias_value = std::nan("")) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Param(Key(prefix, name + ".w"), {in, out}, bound, state);
    Var& b = Param(Key(prefix, name + ".b"), {out}, bound, state);
    if (!std::isnan(bias_value)) std::fill(b.mutable_value().begin(), b.mutable_value().end(), bias_value);
  };
  auto norm = [&](const std::string& name, int dim) {
    Param(Key(prefix, name + ".g"), {dim}, 0.0, state);
    auto g = params_.back().var.mutable_value();
    std::fill(g.begin(), g.end(), 1.0);
    Param(Key(prefix, name + ".b"), {dim}, 0.0, state);
  };
  if (in_dim != c) linear("in_proj", in_dim, c);
  for (int k = 1; k <= config_.bank_size; ++k) {
    linear("bank" + std::to_string(k), k * in_dim, half);
    norm("bank" + std::to_string(k) + ".ln", half);
  }
  linear("proj1", 3 * config_.bank_size * half, c);
  norm("proj1.ln", c);
  linear("proj2", 3 * c, c);
  norm("proj2.ln", c);
  for (int h = 0; h < config_.highway_layers; ++h) {
    linear("hw" + std::to_string(h) + ".h", c, c);
    linear("hw" + std::to_string(h) + ".t", c, c, -1.0);
  }
  for (const char* dir : {"fwd", "bwd"}) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(half));
    Param(Key(prefix, std::string("gru.") + dir + ".wx"), {c, 3 * half}, bound, state);
    Param(Key(prefix, std::string("gru.") + dir + ".wh"), {half, 3 * half}, bound, state);
    Param(Key(prefix, std::string("gru.") + dir + ".bx"), {3 * half}, bound, state);
    Param(Key(prefix, std::string("gru.") + dir + ".bh"), {3 * half}, bound, state);
  }
}

AlignerModel::AlignerModel(ModelConfig config, uint64_t seed) : config_(std::move(config)) {
  config_.Validate();
  uint64_t state = seed ^ 0x6C79726963737963ULL;
  const int c = config_.c_encoder;

  // Text encoder.
  Param("text.embedding", {config_.vocab_size, c}, 1.0, state, /*gaussian=*/true);
  for (int i = 0; i < config_.cbhg_layers; ++i) BuildCbhg("text.cbhg" + std::to_string(i), c, state);
  Param("text.expand.w", {c, config_.c_in * c}, 1.0 / std::sqrt(c), state);
  Param("text.expand.b", {config_.c_in * c}, 1.0 / std::sqrt(c), state);

  // Audio encoder.
  const int f = config_.n_mels_effective;
  Param("audio.prenet.w", {f, c}, 1.0 / std::sqrt(f), state);
  Param("audio.prenet.b", {c}, 1.0 / std::sqrt(f), state);
  for (int i = 0; i < config_.cbhg_layers; ++i) BuildCbhg("audio.cbhg" + std::to_string(i), c, state);
  Param("audio.expand.w", {c, config_.c_in * c}, 1.0 / std::sqrt(c), state);
  Param("audio.expand.b", {config_.c_in * c}, 1.0 / std::sqrt(c), state);

  // UNet predictor.
  auto conv = [&](const std::string& name, int in, int out, int k) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * k * k));
    Param(name + ".w", {out, in * k * k}, bound, state);
    Param(name + ".b", {out}, bound, state);
  };
  const auto& ch = config_.unet_channels;
  int in = config_.c_in;
  for (int d = 0; d < config_.depth(); ++d) {
    conv("unet.down" + std::to_string(d) + ".conv1", in, ch[d], 3);
    conv("unet.down" + std::to_string(d) + ".conv2", ch[d], ch[d], 3);
    in = ch[d];
  }
  const int bottom = ch.back(), bh = bottom / 2;
  for (const char* dir : {"fwd", "bwd"}) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(bh));
    Param(std::string("unet.gru.") + dir + ".wx", {bottom, 3 * bh}, bound, state);
    Param(std::string("unet.gru.") + dir + ".wh", {bh, 3 * bh}, bound, state);
    Param(std::string("unet.gru.") + dir + ".bx", {3 * bh}, bound, state);
    Param(std::string("unet.gru.") + dir + ".bh", {3 * bh}, bound, state);
  }
  for (int d = config_.depth() - 2; d >= 0; --d) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(ch[d + 1] * 4));
    Param("unet.up" + std::to_string(d) + ".deconv.w", {4 * ch[d], ch[d + 1]}, bound, state);
    Param("unet.up" + std::to_string(d) + ".deconv.b", {ch[d]}, bound, state);
    conv("unet.up" + std::to_string(d) + ".conv1", 2 * ch[d], ch[d], 3);
    conv("unet.up" + std::to_string(d) + ".conv2", ch[d], ch[d], 3);
  }
  conv("unet.head", ch[0], 1, 1);

  feature_mean_.assign(static_cast<size_t>(f), 0.0);
  feature_std_.assign(static_cast<size_t>(f), 1.0);
}

std::vector<Var> AlignerModel::parameters() const {
  std::vector<Var> out;
  for (const auto& p : params_) out.push_back(p.var);
  return out;
}

size_t AlignerModel::num_parameters() const {
  size_t n = 0;
  for (const auto& p : params_) n += p.var.numel();
  return n;
}

void AlignerModel::SetFeatureNormalization(std::vector<double> mean, std::vector<double> std) {
  const size_t f = static_cast<size_t>(config_.n_mels_effective);
  if (mean.size() != f || std.size() != f) throw Error(ErrorCode::kShapeMismatch, "normalisation vector size");
  for (double& s : std) s = std::max(s, 1e-6);
  feature_mean_ = std::move(mean);
  feature_std_ = std::move(std);
}

void AlignerModel::CopyWeightsFrom(const AlignerModel& other) {
  if (!(other.config_ == config_)) throw Error(ErrorCode::kShapeMismatch, "config mismatch");
  for (size_t i = 0; i < params_.size(); ++i) {
    auto dst = params_[i].var.mutable_value();
    const auto src = other.params_[i].var.value();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  feature_mean_ = other.feature_mean_;
  feature_std_ = other.feature_std_;
}

// ---------------------------------------------------------------------------
// encoders

Var AlignerModel::Highway(const std::string& prefix, const Var& x) const {
  Var y = x;
  for (int h = 0; h < config_.highway_layers; ++h) {
    const std::string p = Key(prefix, "hw" + std::to_string(h));
    Var hval = nn::Relu(nn::Linear(y, Find(p + ".h.w"), Find(p + ".h.b")));
    Var gate = nn::Sigmoid(nn::Linear(y, Find(p + ".t.w"), Find(p + ".t.b")));
    y = nn::Add(y, nn::Mul(gate, nn::Sub(hval, y)));
  }
  return y;
}

Var AlignerModel::RunCbhg(const std::string& prefix, const Var& x) const {
  const int n = x.dim(0), c = config_.c_encoder, half = c / 2;
  auto ln = [&](const Var& v, const std::string& name) {
    return nn::LayerNorm(v, Find(Key(prefix, name + ".g")), Find(Key(prefix, name + ".b")));
  };
  std::vector<Var> bank;
  for (int k = 1; k <= config_.bank_size; ++k) {
    const std::string name = "bank" + std::to_string(k);
    Var y = nn::Conv1d(x, Find(Key(prefix, name + ".w")), Find(Key(prefix, name + ".b")), k);
    bank.push_back(ln(nn::Relu(y), name + ".ln"));
  }
  Var stacked = nn::MaxPool1dSame(nn::Concat(bank, 1));
  Var y = nn::Relu(nn::Conv1d(stacked, Find(Key(prefix, "proj1.w")), Find(Key(prefix, "proj1.b")), 3));
  y = ln(y, "proj1.ln");
  y = ln(nn::Conv1d(y, Find(Key(prefix, "proj2.w")), Find(Key(prefix, "proj2.b")), 3), "proj2.ln");
  const Var residual = x.dim(1) == c ? x : nn::Linear(x, Find(Key(prefix, "in_proj.w")), Find(Key(prefix, "in_proj.b")));
  y = Highway(prefix, nn::Add(y, residual));
  Var seq = nn::Reshape(y, {1, n, c});
  auto gru = [&](const char* dir, bool reverse) {
    const std::string p = Key(prefix, std::string("gru.") + dir);
    return nn::Reshape(nn::Gru(seq, Find(p + ".wx"), Find(p + ".wh"), Find(p + ".bx"), Find(p + ".bh"), reverse),
                       {n, half});
  };
  return nn::Concat({gru("fwd", false), gru("bwd", true)}, 1);
}

Var AlignerModel::EncodeTextRows(std::span<const int> tokens) const {
  if (tokens.empty()) throw Error(ErrorCode::kInputTooShort, "empty token sequence");
  for (int t : tokens) {
    if (t < 0 || t >= config_.vocab_size) throw Error(ErrorCode::kTokenOutOfRange, "token id " + std::to_string(t));
  }
  Var x = nn::Embedding(Find("text.embedding"), tokens);
  for (int i = 0; i < config_.cbhg_layers; ++i) x = RunCbhg("text.cbhg" + std::to_string(i), x);
  return nn::Linear(x, Find("text.expand.w"), Find("text.expand.b"));
}

Var AlignerModel::EncodeAudioRows(const MelFeatures& features) const {
  if (features.stack_factor != config_.stack_factor()) {
    throw Error(ErrorCode::kStackFactorMismatch, std::string(LevelName(config_.level)) + " model expects stack factor " +
                                                     std::to_string(config_.stack_factor()) + ", got " +
                                                     std::to_string(features.stack_factor));
  }
  const int f = features.num_bins();
  if (f != config_.n_mels_effective) throw Error(ErrorCode::kShapeMismatch, "feature width " + std::to_string(f));
  if (features.num_frames <= 0) throw Error(ErrorCode::kInputTooShort, "no audio frames");
  std::vector<double> normed(static_cast<size_t>(features.num_frames) * f);
  for (int t = 0; t < features.num_frames; ++t) {
    for (int j = 0; j < f; ++j) {
      normed[static_cast<size_t>(t) * f + j] = (features.at(t, j) - feature_mean_[j]) / feature_std_[j];
    }
  }
  Var x = Var::Constant({features.num_frames, f}, std::move(normed));
  x = nn::Relu(nn::Linear(x, Find("audio.prenet.w"), Find("audio.prenet.b")));
  for (int i = 0; i < config_.cbhg_layers; ++i) x = RunCbhg("audio.cbhg" + std::to_string(i), x);
  return nn::Linear(x, Find("audio.expand.w"), Find("audio.expand.b"));
}

namespace {
// [N x (C_in*C_enc)] -> [C_in x C_enc x N]
Var ChannelsFirst(const Var& rows, int c_in, int c_enc) {
  return nn::Permute3(nn::Reshape(rows, {rows.dim(0), c_in, c_enc}), {1, 2, 0});
}
}  // namespace

Var AlignerModel::EncodeText(std::span<const int> tokens) const {
  return ChannelsFirst(EncodeTextRows(tokens), config_.c_in, config_.c_encoder);
}

Var AlignerModel::EncodeAudio(const MelFeatures& features) const {
  return ChannelsFirst(EncodeAudioRows(features), config_.c_in, config_.c_encoder);
}

// ---------------------------------------------------------------------------
// predictor

Var AlignerModel::Block(const std::string& prefix, const Var& x) const {
  Var y = nn::Relu(nn::Conv2d(x, Find(prefix + ".conv1.w"), Find(prefix + ".conv1.b"), 3));
  return nn::Relu(nn::Conv2d(y, Find(prefix + ".conv2.w"), Find(prefix + ".conv2.b"), 3));
}

Var AlignerModel::PredictAlignment(const Var& m) const {
  if (m.rank() != 3 || m.dim(0) != config_.c_in) {
    throw Error(ErrorCode::kShapeMismatch, "predictor input " + nn::ShapeToString(m.shape()));
  }
  const int c = m.dim(0), l = m.dim(1), t = m.dim(2);
  if (l < 1 || t < 1) throw Error(ErrorCode::kInputTooShort, "alignment matrix is empty");
  const int depth = config_.depth();
  const int lp = PaddedLength(l, depth), tp = PaddedLength(t, depth);

  std::vector<int> pad_index(static_cast<size_t>(c) * lp * tp);
  size_t o = 0;
  for (int ci = 0; ci < c; ++ci) {
    for (int i = 0; i < lp; ++i) {
      for (int j = 0; j < tp; ++j) pad_index[o++] = (ci * l + ReflectIndex(i, l)) * t + ReflectIndex(j, t);
    }
  }
  Var x = nn::Scale(nn::Gather(m, {c, lp, tp}, std::move(pad_index)), 1.0 / std::sqrt(config_.c_encoder));

  std::vector<Var> skips;
  for (int d = 0; d < depth; ++d) {
    if (d > 0) x = nn::MaxPool2d(x);
    x = Block("unet.down" + std::to_string(d), x);
    skips.push_back(x);
  }
  {
    // Bidirectional GRU along time for each row of the bottleneck map.
    const int ch = x.dim(0), h = x.dim(1), w = x.dim(2), half = ch / 2;
    Var seq = nn::Permute3(x, {1, 2, 0});
    auto gru = [&](const char* dir, bool reverse) {
      const std::string p = std::string("unet.gru.") + dir;
      return nn::Reshape(nn::Gru(seq, Find(p + ".wx"), Find(p + ".wh"), Find(p + ".bx"), Find(p + ".bh"), reverse),
                         {h * w, half});
    };
    Var both = nn::Reshape(nn::Concat({gru("fwd", false), gru("bwd", true)}, 1), {h, w, ch});
    x = nn::Add(x, nn::Permute3(both, {2, 0, 1}));
  }
  for (int d = depth - 2; d >= 0; --d) {
    const std::string p = "unet.up" + std::to_string(d);
    Var up = nn::UpConv2d(x, Find(p + ".deconv.w"), Find(p + ".deconv.b"));
    x = Block(p, nn::Concat({up, skips[static_cast<size_t>(d)]}, 0));
  }
  Var head = nn::Conv2d(x, Find("unet.head.w"), Find("unet.head.b"), 1);

  std::vector<int> crop(static_cast<size_t>(l) * t);
  o = 0;
  for (int i = 0; i < l; ++i) {
    for (int j = 0; j < t; ++j) crop[o++] = i * tp + j;
  }
  return nn::Gather(head, {l, t}, std::move(crop));
}

Var AlignerModel::Forward(std::span<const int> tokens, const MelFeatures& features) const {
  Var text = EncodeTextRows(tokens);
  Var audio = EncodeAudioRows(features);
  return PredictAlignment(nn::CrossCorrelate(text, audio, config_.c_in));
}

AlignmentMatrix AlignerModel::Align(std::span<const int> tokens, const MelFeatures& features) const {
  nn::NoGradGuard guard;
  Var logits = Forward(tokens, features);
  return AlignmentMatrix::FromLogits(logits.dim(0), logits.dim(1),
                                     std::vector<double>(logits.value().begin(), logits.value().end()));
}

// ---------------------------------------------------------------------------
// persistence

namespace {

constexpr char kWeightsMagic[4] = {'L', 'S', 'W', 'T'};
constexpr uint32_t kWeightsVersion = 1;

uint64_t Fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
void WriteLe(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T ReadLe(std::istream& in, const std::string& path) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) throw Error(ErrorCode::kParseError, "truncated weights file " + path);
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace

std::string AlignerModel::Version() const {
  const std::string cfg = config_.ToJson();
  uint64_t h = Fnv1a(cfg.data(), cfg.size());
  for (const auto& p : params_) h = Fnv1a(p.var.value().data(), p.var.numel() * sizeof(double), h);
  h = Fnv1a(feature_mean_.data(), feature_mean_.size() * sizeof(double), h);
  h = Fnv1a(feature_std_.data(), feature_std_.size() * sizeof(double), h);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(LevelName(config_.level)) + "-" + std::string(buf, 12);
}

void AlignerModel::Save(const std::string& path) const {
  json header;
  header["config"] = json::parse(config_.ToJson());
  header["feature_mean"] = feature_mean_;
  header["feature_std"] = feature_std_;
  json names = json::array();
  for (const auto& p : params_) names.push_back({{"name", p.name}, {"shape", p.var.shape()}});
  header["parameters"] = names;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out.write(kWeightsMagic, 4);
  WriteLe<uint32_t>(out, kWeightsVersion);
  WriteLe<uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : params_) {
    for (double v : p.var.value()) WriteLe<double>(out, v);
  }
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path);
}

AlignerModel AlignerModel::Load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open weights " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kWeightsMagic, 4) != 0) {
    throw Error(ErrorCode::kParseError, path + " is not a weights file");
  }
  const auto version = ReadLe<uint32_t>(in, path);
  if (version != kWeightsVersion) throw Error(ErrorCode::kParseError, "unsupported weights version " + std::to_string(version));
  const auto len = ReadLe<uint64_t>(in, path);
  if (len > (1u << 30)) throw Error(ErrorCode::kParseError, "implausible header length in " + path);
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw Error(ErrorCode::kParseError, "truncated header in " + path);
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, path + ": " + e.what());
  }
  AlignerModel model(ModelConfig::FromJson(header.at("config").dump()));
  const auto& names = header.at("parameters");
  if (names.size() != model.params_.size()) throw Error(ErrorCode::kShapeMismatch, "parameter count mismatch in " + path);
  for (size_t i = 0; i < names.size(); ++i) {
    auto& p = model.params_[i];
    if (names[i].at("name").get<std::string>() != p.name || names[i].at("shape").get<nn::Shape>() != p.var.shape()) {
      throw Error(ErrorCode::kShapeMismatch, "parameter " + p.name + " does not match the stored layout");
    }
    for (double& v : p.var.mutable_value()) v = ReadLe<double>(in, path);
  }
  model.SetFeatureNormalization(header.at("feature_mean").get<std::vector<double>>(),
                                header.at("feature_std").get<std::vector<double>>());
  return model;
}

}  // namespace lyricsync
