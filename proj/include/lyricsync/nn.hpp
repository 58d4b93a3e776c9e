// Copyright 2026 The lyricsync Authors
// SPDX-License-Identifier: Apache-2.0

// Minimal reverse-mode automatic differentiation over dense double buffers.
// Every op records a closure that accumulates gradients into its inputs; a
// backward pass walks the recorded graph in reverse topological order.
// Tensors are row-major. Sequence tensors are [N x C]; feature maps [C x H x W].

#pragma once

#include <array>
#include <functional>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace lyricsync::nn {

using Shape = std::vector<int>;

// Buffers start on a 64-byte boundary so vectorised kernels split work the
// same way on every run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, size_t) { ::operator delete(p, kAlign); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

size_t NumElements(const Shape& shape);
std::string ShapeToString(const Shape& shape);

struct Node {
  Shape shape;
  Buffer value;
  Buffer grad;  // empty until first accumulation
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  bool requires_grad = false;

  Buffer& EnsureGrad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var Constant(Shape shape, Buffer value);
  static Var Constant(Shape shape, std::span<const double> value);
  static Var Zeros(Shape shape);
  static Var Parameter(Shape shape, Buffer value);
  static Var Parameter(Shape shape, std::span<const double> value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(size_t i) const { return node_->shape.at(i); }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  size_t numel() const { return node_->value.size(); }
  std::span<const double> value() const { return node_->value; }
  std::span<double> mutable_value() { return node_->value; }
  std::span<const double> grad() const { return node_->grad; }
  Buffer& mutable_grad() { return node_->EnsureGrad(); }
  bool requires_grad() const { return node_->requires_grad; }
  double item() const { return node_->value.at(0); }
  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& ptr() const { return node_; }

  /// Seeds d(self)/d(self) = 1 (self must be a scalar) and accumulates
  /// gradients into every reachable node that requires them.
  void Backward() const;

 private:
  std::shared_ptr<Node> node_;
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool GradEnabled();

// --- elementwise -----------------------------------------------------------
Var Add(const Var& a, const Var& b);
Var Sub(const Var& a, const Var& b);
Var Mul(const Var& a, const Var& b);
Var Scale(const Var& a, double s);
Var Relu(const Var& a);
Var Sigmoid(const Var& a);
Var Tanh(const Var& a);

// --- shape -----------------------------------------------------------------
Var Reshape(const Var& a, Shape shape);
/// out[i] = a[index[i]], or 0 where index[i] < 0. Backward scatters.
Var Gather(const Var& a, Shape shape, std::vector<int> index);
/// axis 0: stacks along the leading dimension (trailing sizes must agree);
/// axis 1: concatenates 2-D tensors column-wise.
Var Concat(const std::vector<Var>& parts, int axis);
/// [d0 x d1 x d2] -> permuted by `order`.
Var Permute3(const Var& a, std::array<int, 3> order);

// --- dense -----------------------------------------------------------------
Var MatMul(const Var& a, const Var& b);
/// x[N x in] . w[in x out] + b[out]
Var Linear(const Var& x, const Var& w, const Var& b);
Var Embedding(const Var& table, std::span<const int> ids);
/// Per-row normalisation over the last dimension with gain and bias.
Var LayerNorm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

// --- sequence --------------------------------------------------------------
/// "Same" 1-D convolution over x[N x C] with w[(K*C) x Co], b[Co]; left pad
/// (K-1)/2, right pad K/2.
Var Conv1d(const Var& x, const Var& w, const Var& b, int kernel);
/// out[n] = max(x[n], x[n+1]) with the last frame repeated; keeps N.
Var MaxPool1dSame(const Var& x);
/// GRU over x[B x N x Cin]; wx[Cin x 3H], wh[H x 3H], bx/bh[3H] with gate
/// order (reset, update, new). Returns [B x N x H]; zero initial state.
Var Gru(const Var& x, const Var& wx, const Var& wh, const Var& bx, const Var& bh, bool reverse);

// --- 2-D feature maps --------------------------------------------------------
/// "Same" convolution with odd kernel: x[C x H x W], w[Co x (C*k*k)], b[Co].
Var Conv2d(const Var& x, const Var& w, const Var& b, int kernel);
/// 2x2 max pooling, stride 2; H and W must be even.
Var MaxPool2d(const Var& x);
/// 2x2 stride-2 transposed convolution: x[C x H x W], w[(Co*4) x C], b[Co].
Var UpConv2d(const Var& x, const Var& w, const Var& b);

// --- alignment-specific ----------------------------------------------------
/// text[L x (Cin*Ce)], audio[T x (Cin*Ce)] -> M[Cin x L x T] with
/// M[c,l,t] = sum_k text[l, c*Ce+k] * audio[t, c*Ce+k].
Var CrossCorrelate(const Var& text, const Var& audio, int c_in);
/// Mean over (row, target) pairs of -log softmax(logits[row, :])[target].
Var RowCrossEntropy(const Var& logits, std::span<const int> rows, std::span<const int> targets);

/// Decoupled-weight-decay Adam.
class AdamW {
 public:
  struct Options {
    double learning_rate = 5e-4;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };
  AdamW(std::vector<Var> params, Options options);

  void ZeroGrad();
  /// Averages accumulated gradients by `grad_scale` then updates.
  void Step(double grad_scale = 1.0);
  long steps() const { return step_; }

  /// Flat moment buffers (m then v per parameter) for checkpointing.
  std::vector<double> SaveState() const;
  void LoadState(std::span<const double> state, long step);

 private:
  std::vector<Var> params_;
  Options options_;
  std::vector<Buffer> m_, v_;
  long step_ = 0;
};

}  // namespace lyricsync::nn
