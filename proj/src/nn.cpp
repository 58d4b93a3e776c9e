// Copyright 2026 The lyricsync Authors
// SPDX-License-Identifier: Apache-2.0

#include "lyricsync/nn.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "lyricsync/error.hpp"

namespace lyricsync::nn {

namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using CVecMap = Eigen::Map<const Eigen::VectorXd>;

thread_local bool g_grad_enabled = true;

[[noreturn]] void ShapeError(const std::string& op, const std::string& detail) {
  throw Error(ErrorCode::kShapeMismatch, op + ": " + detail);
}

void ExpectRank(const Var& v, int rank, const char* op) {
  if (v.rank() != rank) {
    ShapeError(op, "expected rank " + std::to_string(rank) + ", got " + ShapeToString(v.shape()));
  }
}

// Creates an op node. The backward closure is only kept when recording is on
// and some input needs gradients.
Var MakeOp(Shape shape, Buffer value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || in.requires_grad();
    if (needs) {
      node->requires_grad = true;
      for (auto& in : inputs) node->parents.push_back(in.ptr());
      node->backward = std::move(backward);
    }
  }
  return Var(std::move(node));
}

// Gradient buffer of input `i` of `self`, or nullptr when it is not needed.
double* InGrad(Node& self, size_t i) {
  auto& p = self.parents[i];
  if (!p->requires_grad) return nullptr;
  return p->EnsureGrad().data();
}

}  // namespace

size_t NumElements(const Shape& shape) {
  size_t n = 1;
  for (int d : shape) n *= static_cast<size_t>(d);
  return n;
}

std::string ShapeToString(const Shape& shape) {
  std::ostringstream ss;
  ss << "(";
  for (size_t i = 0; i < shape.size(); ++i) ss << (i ? ", " : "") << shape[i];
  ss << ")";
  return ss.str();
}

Var Var::Constant(Shape shape, Buffer value) {
  if (NumElements(shape) != value.size()) ShapeError("Constant", "value size does not match shape");
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Var::Constant(Shape shape, std::span<const double> value) {
  return Constant(std::move(shape), Buffer(value.begin(), value.end()));
}

Var Var::Zeros(Shape shape) {
  const size_t n = NumElements(shape);
  return Constant(std::move(shape), Buffer(n, 0.0));
}

Var Var::Parameter(Shape shape, Buffer value) {
  Var v = Constant(std::move(shape), std::move(value));
  v.node_->requires_grad = true;
  return v;
}

Var Var::Parameter(Shape shape, std::span<const double> value) {
  return Parameter(std::move(shape), Buffer(value.begin(), value.end()));
}

void Var::Backward() const {
  if (numel() != 1) ShapeError("Backward", "root must be a scalar");
  // Iterative post-order DFS for a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->EnsureGrad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool GradEnabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// elementwise

namespace {
void ExpectSameShape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) ShapeError(op, ShapeToString(a.shape()) + " vs " + ShapeToString(b.shape()));
}
}  // namespace

Var Add(const Var& a, const Var& b) {
  ExpectSameShape(a, b, "Add");
  Buffer out(a.numel());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return MakeOp(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (size_t k = 0; k < 2; ++k) {
      if (double* g = InGrad(self, k)) {
        for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

Var Sub(const Var& a, const Var& b) {
  ExpectSameShape(a, b, "Sub");
  Buffer out(a.numel());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return MakeOp(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (double* g = InGrad(self, 0)) {
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (double* g = InGrad(self, 1)) {
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var Mul(const Var& a, const Var& b) {
  ExpectSameShape(a, b, "Mul");
  Buffer out(a.numel());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return MakeOp(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (double* g = InGrad(self, 0)) {
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (double* g = InGrad(self, 1)) {
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Var Scale(const Var& a, double s) {
  Buffer out(a.numel());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * s;
  return MakeOp(a.shape(), std::move(out), {a}, [s](Node& self) {
    if (double* g = InGrad(self, 0)) {
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * s;
    }
  });
}

Var Relu(const Var& a) {
  Buffer out(a.numel());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, a.value()[i]);
  return MakeOp(a.shape(), std::move(out), {a}, [](Node& self) {
    if (double* g = InGrad(self, 0)) {
      for (size_t i = 0; i < self.grad.size(); ++i) {
        if (self.value[i] > 0.0) g[i] += self.grad[i];
      }
    }
  });
}

Var Sigmoid(const Var& a) {
  Buffer out(a.numel());
  for (size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a.value()[i]));
  return MakeOp(a.shape(), std::move(out), {a}, [](Node& self) {
    if (double* g = InGrad(self, 0)) {
      for (size_t i = 0; i < self.grad.size(); ++i) {
        const double y = self.value[i];
        g[i] += self.grad[i] * y * (1.0 - y);
      }
    }
  });
}

Var Tanh(const Var& a) {
  Buffer out(a.numel());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.value()[i]);
  return MakeOp(a.shape(), std::move(out), {a}, [](Node& self) {
    if (double* g = InGrad(self, 0)) {
      for (size_t i = 0; i < self.grad.size(); ++i) {
        const double y = self.value[i];
        g[i] += self.grad[i] * (1.0 - y * y);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// shape

Var Reshape(const Var& a, Shape shape) {
  if (NumElements(shape) != a.numel()) {
    ShapeError("Reshape", ShapeToString(a.shape()) + " -> " + ShapeToString(shape));
  }
  Buffer out(a.value().begin(), a.value().end());
  return MakeOp(std::move(shape), std::move(out), {a}, [](Node& self) {
    if (double* g = InGrad(self, 0)) {
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var Gather(const Var& a, Shape shape, std::vector<int> index) {
  if (NumElements(shape) != index.size()) ShapeError("Gather", "index size does not match output shape");
  Buffer out(index.size());
  const auto av = a.value();
  for (size_t i = 0; i < index.size(); ++i) {
    const int j = index[i];
    if (j >= static_cast<int>(av.size())) ShapeError("Gather", "index out of range");
    out[i] = j < 0 ? 0.0 : av[static_cast<size_t>(j)];
  }
  return MakeOp(std::move(shape), std::move(out), {a}, [index = std::move(index)](Node& self) {
    if (double* g = InGrad(self, 0)) {
      for (size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= 0) g[index[i]] += self.grad[i];
      }
    }
  });
}

Var Concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) ShapeError("Concat", "no inputs");
  if (axis == 0) {
    Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
    int lead = 0;
    for (const auto& p : parts) {
      if (Shape(p.shape().begin() + 1, p.shape().end()) != tail) ShapeError("Concat", "trailing shapes differ");
      lead += p.dim(0);
    }
    Buffer out;
    out.reserve(NumElements(tail) * static_cast<size_t>(lead));
    for (const auto& p : parts) out.insert(out.end(), p.value().begin(), p.value().end());
    Shape shape = {lead};
    shape.insert(shape.end(), tail.begin(), tail.end());
    return MakeOp(std::move(shape), std::move(out), parts, [](Node& self) {
      size_t offset = 0;
      for (size_t k = 0; k < self.parents.size(); ++k) {
        const size_t n = self.parents[k]->value.size();
        if (double* g = InGrad(self, k)) {
          for (size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
        }
        offset += n;
      }
    });
  }
  if (axis != 1) ShapeError("Concat", "axis must be 0 or 1");
  const int rows = parts[0].dim(0);
  std::vector<int> widths;
  int total = 0;
  for (const auto& p : parts) {
    ExpectRank(p, 2, "Concat");
    if (p.dim(0) != rows) ShapeError("Concat", "row counts differ");
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  Buffer out(static_cast<size_t>(rows) * total);
  int col = 0;
  for (size_t k = 0; k < parts.size(); ++k) {
    const auto v = parts[k].value();
    for (int r = 0; r < rows; ++r) {
      std::copy_n(v.begin() + static_cast<long>(r) * widths[k], widths[k],
                  out.begin() + static_cast<long>(r) * total + col);
    }
    col += widths[k];
  }
  return MakeOp({rows, total}, std::move(out), parts, [widths, rows, total](Node& self) {
    int col0 = 0;
    for (size_t k = 0; k < widths.size(); ++k) {
      if (double* g = InGrad(self, k)) {
        for (int r = 0; r < rows; ++r) {
          for (int c = 0; c < widths[k]; ++c) {
            g[static_cast<size_t>(r) * widths[k] + c] += self.grad[static_cast<size_t>(r) * total + col0 + c];
          }
        }
      }
      col0 += widths[k];
    }
  });
}

Var Permute3(const Var& a, std::array<int, 3> order) {
  ExpectRank(a, 3, "Permute3");
  const std::array<int, 3> in = {a.dim(0), a.dim(1), a.dim(2)};
  const std::array<int, 3> stride = {in[1] * in[2], in[2], 1};
  Shape shape = {in[order[0]], in[order[1]], in[order[2]]};
  std::vector<int> index(a.numel());
  size_t o = 0;
  for (int i = 0; i < shape[0]; ++i) {
    for (int j = 0; j < shape[1]; ++j) {
      for (int k = 0; k < shape[2]; ++k) {
        std::array<int, 3> src{};
        src[order[0]] = i;
        src[order[1]] = j;
        src[order[2]] = k;
        index[o++] = src[0] * stride[0] + src[1] * stride[1] + src[2];
      }
    }
  }
  return Gather(a, std::move(shape), std::move(index));
}

// ---------------------------------------------------------------------------
// dense

Var MatMul(const Var& a, const Var& b) {
  ExpectRank(a, 2, "MatMul");
  ExpectRank(b, 2, "MatMul");
  if (a.dim(1) != b.dim(0)) ShapeError("MatMul", ShapeToString(a.shape()) + " x " + ShapeToString(b.shape()));
  const int n = a.dim(0), k = a.dim(1), m = b.dim(1);
  Buffer out(static_cast<size_t>(n) * m);
  MapR(out.data(), n, m).noalias() = CMapR(a.value().data(), n, k) * CMapR(b.value().data(), k, m);
  return MakeOp({n, m}, std::move(out), {a, b}, [n, k, m](Node& self) {
    CMapR dy(self.grad.data(), n, m);
    if (double* g = InGrad(self, 0)) {
      MapR(g, n, k).noalias() += dy * CMapR(self.parents[1]->value.data(), k, m).transpose();
    }
    if (double* g = InGrad(self, 1)) {
      MapR(g, k, m).noalias() += CMapR(self.parents[0]->value.data(), n, k).transpose() * dy;
    }
  });
}

Var Linear(const Var& x, const Var& w, const Var& b) {
  ExpectRank(x, 2, "Linear");
  ExpectRank(w, 2, "Linear");
  const int n = x.dim(0), in = x.dim(1), out_dim = w.dim(1);
  if (w.dim(0) != in || static_cast<int>(b.numel()) != out_dim) {
    ShapeError("Linear", ShapeToString(x.shape()) + " with weight " + ShapeToString(w.shape()));
  }
  Buffer out(static_cast<size_t>(n) * out_dim);
  MapR y(out.data(), n, out_dim);
  y.noalias() = CMapR(x.value().data(), n, in) * CMapR(w.value().data(), in, out_dim);
  y.rowwise() += CVecMap(b.value().data(), out_dim).transpose();
  return MakeOp({n, out_dim}, std::move(out), {x, w, b}, [n, in, out_dim](Node& self) {
    CMapR dy(self.grad.data(), n, out_dim);
    if (double* g = InGrad(self, 0)) {
      MapR(g, n, in).noalias() += dy * CMapR(self.parents[1]->value.data(), in, out_dim).transpose();
    }
    if (double* g = InGrad(self, 1)) {
      MapR(g, in, out_dim).noalias() += CMapR(self.parents[0]->value.data(), n, in).transpose() * dy;
    }
    if (double* g = InGrad(self, 2)) VecMap(g, out_dim) += dy.colwise().sum().transpose();
  });
}

Var Embedding(const Var& table, std::span<const int> ids) {
  ExpectRank(table, 2, "Embedding");
  const int vocab = table.dim(0), d = table.dim(1);
  std::vector<int> index;
  index.reserve(ids.size() * static_cast<size_t>(d));
  for (int id : ids) {
    if (id < 0 || id >= vocab) throw Error(ErrorCode::kTokenOutOfRange, "token id " + std::to_string(id));
    for (int j = 0; j < d; ++j) index.push_back(id * d + j);
  }
  return Gather(table, {static_cast<int>(ids.size()), d}, std::move(index));
}

Var LayerNorm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const int c = x.shape().back();
  const int rows = static_cast<int>(x.numel() / static_cast<size_t>(c));
  if (static_cast<int>(gain.numel()) != c || static_cast<int>(bias.numel()) != c) ShapeError("LayerNorm", "gain/bias size");
  Buffer out(x.numel()), xhat(x.numel()), inv_std(static_cast<size_t>(rows));
  const auto xv = x.value();
  for (int r = 0; r < rows; ++r) {
    const double* xr = xv.data() + static_cast<size_t>(r) * c;
    double mean = 0.0;
    for (int j = 0; j < c; ++j) mean += xr[j];
    mean /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= c;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(r)] = is;
    for (int j = 0; j < c; ++j) {
      const size_t i = static_cast<size_t>(r) * c + j;
      xhat[i] = (xr[j] - mean) * is;
      out[i] = xhat[i] * gain.value()[static_cast<size_t>(j)] + bias.value()[static_cast<size_t>(j)];
    }
  }
  return MakeOp(x.shape(), std::move(out), {x, gain, bias},
                [rows, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                  const auto& gv = self.parents[1]->value;
                  double* gx = InGrad(self, 0);
                  double* gg = InGrad(self, 1);
                  double* gb = InGrad(self, 2);
                  Buffer dxhat(static_cast<size_t>(c));
                  for (int r = 0; r < rows; ++r) {
                    const size_t base = static_cast<size_t>(r) * c;
                    double mean_d = 0.0, mean_dx = 0.0;
                    for (int j = 0; j < c; ++j) {
                      const double dy = self.grad[base + j];
                      if (gg) gg[j] += dy * xhat[base + j];
                      if (gb) gb[j] += dy;
                      dxhat[static_cast<size_t>(j)] = dy * gv[static_cast<size_t>(j)];
                      mean_d += dxhat[static_cast<size_t>(j)];
                      mean_dx += dxhat[static_cast<size_t>(j)] * xhat[base + j];
                    }
                    if (!gx) continue;
                    mean_d /= c;
                    mean_dx /= c;
                    for (int j = 0; j < c; ++j) {
                      gx[base + j] += inv_std[static_cast<size_t>(r)] *
                                      (dxhat[static_cast<size_t>(j)] - mean_d - xhat[base + j] * mean_dx);
                    }
                  }
                });
}

// ---------------------------------------------------------------------------
// sequence

Var Conv1d(const Var& x, const Var& w, const Var& b, int kernel) {
  ExpectRank(x, 2, "Conv1d");
  const int n = x.dim(0), c = x.dim(1), co = w.dim(1);
  if (w.dim(0) != kernel * c || static_cast<int>(b.numel()) != co) {
    ShapeError("Conv1d", "weight " + ShapeToString(w.shape()) + " for input " + ShapeToString(x.shape()));
  }
  const int left = (kernel - 1) / 2;
  const int kc = kernel * c;
  Buffer col(static_cast<size_t>(n) * kc, 0.0);
  const auto xv = x.value();
  for (int t = 0; t < n; ++t) {
    for (int k = 0; k < kernel; ++k) {
      const int src = t + k - left;
      if (src < 0 || src >= n) continue;
      std::copy_n(xv.begin() + static_cast<long>(src) * c, c, col.begin() + static_cast<long>(t) * kc + k * c);
    }
  }
  Buffer out(static_cast<size_t>(n) * co);
  MapR y(out.data(), n, co);
  y.noalias() = CMapR(col.data(), n, kc) * CMapR(w.value().data(), kc, co);
  y.rowwise() += CVecMap(b.value().data(), co).transpose();
  return MakeOp({n, co}, std::move(out), {x, w, b}, [n, c, co, kernel, left, kc, col = std::move(col)](Node& self) {
    CMapR dy(self.grad.data(), n, co);
    if (double* g = InGrad(self, 1)) MapR(g, kc, co).noalias() += CMapR(col.data(), n, kc).transpose() * dy;
    if (double* g = InGrad(self, 2)) VecMap(g, co) += dy.colwise().sum().transpose();
    if (double* g = InGrad(self, 0)) {
      MatR dcol = dy * CMapR(self.parents[1]->value.data(), kc, co).transpose();
      for (int t = 0; t < n; ++t) {
        for (int k = 0; k < kernel; ++k) {
          const int src = t + k - left;
          if (src < 0 || src >= n) continue;
          for (int j = 0; j < c; ++j) g[static_cast<size_t>(src) * c + j] += dcol(t, k * c + j);
        }
      }
    }
  });
}

Var MaxPool1dSame(const Var& x) {
  ExpectRank(x, 2, "MaxPool1dSame");
  const int n = x.dim(0), c = x.dim(1);
  Buffer out(x.numel());
  std::vector<int> arg(x.numel());
  const auto xv = x.value();
  for (int t = 0; t < n; ++t) {
    const int t2 = std::min(t + 1, n - 1);
    for (int j = 0; j < c; ++j) {
      const size_t a = static_cast<size_t>(t) * c + j, b = static_cast<size_t>(t2) * c + j;
      const bool first = xv[a] >= xv[b];
      out[a] = first ? xv[a] : xv[b];
      arg[a] = static_cast<int>(first ? a : b);
    }
  }
  return MakeOp(x.shape(), std::move(out), {x}, [arg = std::move(arg)](Node& self) {
    if (double* g = InGrad(self, 0)) {
      for (size_t i = 0; i < arg.size(); ++i) g[arg[i]] += self.grad[i];
    }
  });
}

Var Gru(const Var& x, const Var& wx, const Var& wh, const Var& bx, const Var& bh, bool reverse) {
  ExpectRank(x, 3, "Gru");
  const int batch = x.dim(0), steps = x.dim(1), cin = x.dim(2);
  const int h3 = wx.dim(1), hid = h3 / 3;
  if (wx.dim(0) != cin || h3 != 3 * hid || wh.dim(0) != hid || wh.dim(1) != h3 ||
      static_cast<int>(bx.numel()) != h3 || static_cast<int>(bh.numel()) != h3) {
    ShapeError("Gru", "weights do not match input " + ShapeToString(x.shape()));
  }
  const int rows = batch * steps;
  // Input projections for all steps at once: row (b*steps + t).
  MatR xp = CMapR(x.value().data(), rows, cin) * CMapR(wx.value().data(), cin, h3);
  xp.rowwise() += CVecMap(bx.value().data(), h3).transpose();
  const CMapR whm(wh.value().data(), hid, h3);
  const Eigen::RowVectorXd bhv = CVecMap(bh.value().data(), h3).transpose();

  Buffer out(static_cast<size_t>(rows) * hid);
  // Saved per step (in processing order): r, z, n, hidden pre-activation of n, previous h.
  const size_t step_block = static_cast<size_t>(batch) * hid;
  Buffer sr(step_block * steps), sz(step_block * steps), sn(step_block * steps),
      shn(step_block * steps), sprev(step_block * steps);
  MatR h = MatR::Zero(batch, hid);
  for (int s = 0; s < steps; ++s) {
    const int t = reverse ? steps - 1 - s : s;
    MatR hp = h * whm;
    hp.rowwise() += bhv;
    for (int bi = 0; bi < batch; ++bi) {
      const auto xrow = xp.row(static_cast<long>(bi) * steps + t);
      for (int j = 0; j < hid; ++j) {
        const size_t k = static_cast<size_t>(s) * step_block + static_cast<size_t>(bi) * hid + j;
        const double r = 1.0 / (1.0 + std::exp(-(xrow(j) + hp(bi, j))));
        const double z = 1.0 / (1.0 + std::exp(-(xrow(hid + j) + hp(bi, hid + j))));
        const double nn = std::tanh(xrow(2 * hid + j) + r * hp(bi, 2 * hid + j));
        sr[k] = r;
        sz[k] = z;
        sn[k] = nn;
        shn[k] = hp(bi, 2 * hid + j);
        sprev[k] = h(bi, j);
        const double hn = (1.0 - z) * nn + z * h(bi, j);
        out[(static_cast<size_t>(bi) * steps + t) * hid + j] = hn;
      }
    }
    for (int bi = 0; bi < batch; ++bi) {
      for (int j = 0; j < hid; ++j) h(bi, j) = out[(static_cast<size_t>(bi) * steps + t) * hid + j];
    }
  }
  return MakeOp({batch, steps, hid}, std::move(out), {x, wx, wh, bx, bh},
                [=, sr = std::move(sr), sz = std::move(sz), sn = std::move(sn), shn = std::move(shn),
                 sprev = std::move(sprev)](Node& self) {
                  const CMapR whm2(self.parents[2]->value.data(), hid, h3);
                  MatR dxp = MatR::Zero(rows, h3);
                  MatR dh_next = MatR::Zero(batch, hid);
                  MatR dhp(batch, h3), prev(batch, hid);
                  MatR dwh = MatR::Zero(hid, h3);
                  Eigen::RowVectorXd dbh = Eigen::RowVectorXd::Zero(h3);
                  for (int s = steps - 1; s >= 0; --s) {
                    const int t = reverse ? steps - 1 - s : s;
                    for (int bi = 0; bi < batch; ++bi) {
                      for (int j = 0; j < hid; ++j) {
                        const size_t k = static_cast<size_t>(s) * step_block + static_cast<size_t>(bi) * hid + j;
                        const double dh = self.grad[(static_cast<size_t>(bi) * steps + t) * hid + j] + dh_next(bi, j);
                        const double r = sr[k], z = sz[k], nn = sn[k], hn = shn[k], hprev = sprev[k];
                        const double dn = dh * (1.0 - z);
                        const double dz = dh * (hprev - nn);
                        const double dn_pre = dn * (1.0 - nn * nn);
                        const double dr_pre = dn_pre * hn * r * (1.0 - r);
                        const double dz_pre = dz * z * (1.0 - z);
                        const long row = static_cast<long>(bi) * steps + t;
                        dxp(row, j) = dr_pre;
                        dxp(row, hid + j) = dz_pre;
                        dxp(row, 2 * hid + j) = dn_pre;
                        dhp(bi, j) = dr_pre;
                        dhp(bi, hid + j) = dz_pre;
                        dhp(bi, 2 * hid + j) = dn_pre * r;
                        dh_next(bi, j) = dh * z;
                        prev(bi, j) = hprev;
                      }
                    }
                    dwh.noalias() += prev.transpose() * dhp;
                    dbh += dhp.colwise().sum();
                    dh_next.noalias() += dhp * whm2.transpose();
                  }
                  if (double* g = InGrad(self, 0)) {
                    MapR(g, rows, cin).noalias() += dxp * CMapR(self.parents[1]->value.data(), cin, h3).transpose();
                  }
                  if (double* g = InGrad(self, 1)) {
                    MapR(g, cin, h3).noalias() += CMapR(self.parents[0]->value.data(), rows, cin).transpose() * dxp;
                  }
                  if (double* g = InGrad(self, 2)) MapR(g, hid, h3) += dwh;
                  if (double* g = InGrad(self, 3)) VecMap(g, h3) += dxp.colwise().sum().transpose();
                  if (double* g = InGrad(self, 4)) VecMap(g, h3) += dbh.transpose();
                });
}

// ---------------------------------------------------------------------------
// 2-D feature maps

Var Conv2d(const Var& x, const Var& w, const Var& b, int kernel) {
  ExpectRank(x, 3, "Conv2d");
  if (kernel % 2 != 1) ShapeError("Conv2d", "kernel must be odd");
  const int c = x.dim(0), h = x.dim(1), wd = x.dim(2), co = w.dim(0);
  const int kk = kernel * kernel, ckk = c * kk, hw = h * wd, pad = kernel / 2;
  if (w.dim(1) != ckk || static_cast<int>(b.numel()) != co) {
    ShapeError("Conv2d", "weight " + ShapeToString(w.shape()) + " for input " + ShapeToString(x.shape()));
  }
  const auto xv = x.value();
  Buffer col;
  if (kernel == 1) {
    col.assign(xv.begin(), xv.end());
  } else {
    col.assign(static_cast<size_t>(ckk) * hw, 0.0);
    for (int ci = 0; ci < c; ++ci) {
      for (int ki = 0; ki < kernel; ++ki) {
        for (int kj = 0; kj < kernel; ++kj) {
          double* dst = col.data() + (static_cast<size_t>(ci) * kk + ki * kernel + kj) * hw;
          for (int i = 0; i < h; ++i) {
            const int si = i + ki - pad;
            if (si < 0 || si >= h) continue;
            const double* src = xv.data() + (static_cast<size_t>(ci) * h + si) * wd;
            const int j0 = std::max(0, pad - kj), j1 = std::min(wd, wd + pad - kj);
            for (int j = j0; j < j1; ++j) dst[static_cast<size_t>(i) * wd + j] = src[j + kj - pad];
          }
        }
      }
    }
  }
  Buffer out(static_cast<size_t>(co) * hw);
  MapR y(out.data(), co, hw);
  y.noalias() = CMapR(w.value().data(), co, ckk) * CMapR(col.data(), ckk, hw);
  y.colwise() += CVecMap(b.value().data(), co);
  return MakeOp({co, h, wd}, std::move(out), {x, w, b},
                [c, h, wd, co, kernel, kk, ckk, hw, pad, col = std::move(col)](Node& self) {
                  CMapR dy(self.grad.data(), co, hw);
                  if (double* g = InGrad(self, 1)) MapR(g, co, ckk).noalias() += dy * CMapR(col.data(), ckk, hw).transpose();
                  if (double* g = InGrad(self, 2)) VecMap(g, co) += dy.rowwise().sum();
                  double* gx = InGrad(self, 0);
                  if (!gx) return;
                  const CMapR wm(self.parents[1]->value.data(), co, ckk);
                  if (kernel == 1) {
                    MapR(gx, c, hw).noalias() += wm.transpose() * dy;
                    return;
                  }
                  MatR dcol = wm.transpose() * dy;
                  for (int ci = 0; ci < c; ++ci) {
                    for (int ki = 0; ki < kernel; ++ki) {
                      for (int kj = 0; kj < kernel; ++kj) {
                        const double* src = dcol.data() + (static_cast<size_t>(ci) * kk + ki * kernel + kj) * hw;
                        for (int i = 0; i < h; ++i) {
                          const int si = i + ki - pad;
                          if (si < 0 || si >= h) continue;
                          double* dst = gx + (static_cast<size_t>(ci) * h + si) * wd;
                          const int j0 = std::max(0, pad - kj), j1 = std::min(wd, wd + pad - kj);
                          for (int j = j0; j < j1; ++j) dst[j + kj - pad] += src[static_cast<size_t>(i) * wd + j];
                        }
                      }
                    }
                  }
                });
}

Var MaxPool2d(const Var& x) {
  ExpectRank(x, 3, "MaxPool2d");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % 2 || w % 2) ShapeError("MaxPool2d", "odd spatial size " + ShapeToString(x.shape()));
  const int ho = h / 2, wo = w / 2;
  Buffer out(static_cast<size_t>(c) * ho * wo);
  std::vector<int> arg(out.size());
  const auto xv = x.value();
  size_t o = 0;
  for (int ci = 0; ci < c; ++ci) {
    for (int i = 0; i < ho; ++i) {
      for (int j = 0; j < wo; ++j, ++o) {
        int best = (ci * h + 2 * i) * w + 2 * j;
        for (int di = 0; di < 2; ++di) {
          for (int dj = 0; dj < 2; ++dj) {
            const int idx = (ci * h + 2 * i + di) * w + 2 * j + dj;
            if (xv[static_cast<size_t>(idx)] > xv[static_cast<size_t>(best)]) best = idx;
          }
        }
        out[o] = xv[static_cast<size_t>(best)];
        arg[o] = best;
      }
    }
  }
  return MakeOp({c, ho, wo}, std::move(out), {x}, [arg = std::move(arg)](Node& self) {
    if (double* g = InGrad(self, 0)) {
      for (size_t i = 0; i < arg.size(); ++i) g[arg[i]] += self.grad[i];
    }
  });
}

Var UpConv2d(const Var& x, const Var& w, const Var& b) {
  ExpectRank(x, 3, "UpConv2d");
  const int c = x.dim(0), h = x.dim(1), wd = x.dim(2), hw = h * wd;
  const int co = static_cast<int>(b.numel());
  if (w.dim(0) != 4 * co || w.dim(1) != c) ShapeError("UpConv2d", "weight " + ShapeToString(w.shape()));
  MatR y = CMapR(w.value().data(), 4 * co, c) * CMapR(x.value().data(), c, hw);
  const int ho = 2 * h, wo = 2 * wd;
  Buffer out(static_cast<size_t>(co) * ho * wo);
  for (int o = 0; o < co; ++o) {
    for (int a = 0; a < 2; ++a) {
      for (int bb = 0; bb < 2; ++bb) {
        const long row = o * 4 + a * 2 + bb;
        for (int i = 0; i < h; ++i) {
          for (int j = 0; j < wd; ++j) {
            out[(static_cast<size_t>(o) * ho + 2 * i + a) * wo + 2 * j + bb] = y(row, i * wd + j) + b.value()[static_cast<size_t>(o)];
          }
        }
      }
    }
  }
  return MakeOp({co, ho, wo}, std::move(out), {x, w, b}, [c, h, wd, hw, co, ho, wo](Node& self) {
    MatR dy(4 * co, hw);
    for (int o = 0; o < co; ++o) {
      for (int a = 0; a < 2; ++a) {
        for (int bb = 0; bb < 2; ++bb) {
          const long row = o * 4 + a * 2 + bb;
          for (int i = 0; i < h; ++i) {
            for (int j = 0; j < wd; ++j) dy(row, i * wd + j) = self.grad[(static_cast<size_t>(o) * ho + 2 * i + a) * wo + 2 * j + bb];
          }
        }
      }
    }
    if (double* g = InGrad(self, 0)) MapR(g, c, hw).noalias() += CMapR(self.parents[1]->value.data(), 4 * co, c).transpose() * dy;
    if (double* g = InGrad(self, 1)) MapR(g, 4 * co, c).noalias() += dy * CMapR(self.parents[0]->value.data(), c, hw).transpose();
    if (double* g = InGrad(self, 2)) {
      for (int o = 0; o < co; ++o) g[o] += dy.middleRows(o * 4, 4).sum();
    }
  });
}

// ---------------------------------------------------------------------------
// alignment-specific

Var CrossCorrelate(const Var& text, const Var& audio, int c_in) {
  ExpectRank(text, 2, "CrossCorrelate");
  ExpectRank(audio, 2, "CrossCorrelate");
  if (c_in <= 0 || text.dim(1) != audio.dim(1) || text.dim(1) % c_in != 0) {
    ShapeError("CrossCorrelate", "text " + ShapeToString(text.shape()) + " vs audio " + ShapeToString(audio.shape()) +
                                     " with c_in " + std::to_string(c_in));
  }
  const int l = text.dim(0), t = audio.dim(0), width = text.dim(1), ce = width / c_in;
  using Stride = Eigen::OuterStride<>;
  using CBlock = Eigen::Map<const MatR, 0, Stride>;
  using Block = Eigen::Map<MatR, 0, Stride>;
  Buffer out(static_cast<size_t>(c_in) * l * t);
  for (int c = 0; c < c_in; ++c) {
    CBlock tc(text.value().data() + c * ce, l, ce, Stride(width));
    CBlock ac(audio.value().data() + c * ce, t, ce, Stride(width));
    MapR(out.data() + static_cast<size_t>(c) * l * t, l, t).noalias() = tc * ac.transpose();
  }
  return MakeOp({c_in, l, t}, std::move(out), {text, audio}, [=](Node& self) {
    double* gt = InGrad(self, 0);
    double* ga = InGrad(self, 1);
    for (int c = 0; c < c_in; ++c) {
      CMapR dm(self.grad.data() + static_cast<size_t>(c) * l * t, l, t);
      if (gt) {
        Block(gt + c * ce, l, ce, Stride(width)).noalias() +=
            dm * CBlock(self.parents[1]->value.data() + c * ce, t, ce, Stride(width));
      }
      if (ga) {
        Block(ga + c * ce, t, ce, Stride(width)).noalias() +=
            dm.transpose() * CBlock(self.parents[0]->value.data() + c * ce, l, ce, Stride(width));
      }
    }
  });
}

Var RowCrossEntropy(const Var& logits, std::span<const int> rows, std::span<const int> targets) {
  ExpectRank(logits, 2, "RowCrossEntropy");
  if (rows.size() != targets.size()) ShapeError("RowCrossEntropy", "rows/targets length differ");
  if (rows.empty()) throw Error(ErrorCode::kNoSupervisedRows, "no supervised rows");
  const int l = logits.dim(0), t = logits.dim(1);
  const auto lv = logits.value();
  Buffer softmax(rows.size() * static_cast<size_t>(t));
  double loss = 0.0;
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= l || targets[i] < 0 || targets[i] >= t) {
      throw Error(ErrorCode::kInvalidArgument, "supervision index out of range");
    }
    const double* row = lv.data() + static_cast<size_t>(rows[i]) * t;
    const double mx = *std::max_element(row, row + t);
    double sum = 0.0;
    for (int j = 0; j < t; ++j) sum += std::exp(row[j] - mx);
    const double log_z = mx + std::log(sum);
    for (int j = 0; j < t; ++j) softmax[i * static_cast<size_t>(t) + j] = std::exp(row[j] - log_z);
    loss += log_z - row[targets[i]];
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  std::vector<int> rows_copy(rows.begin(), rows.end()), targets_copy(targets.begin(), targets.end());
  return MakeOp({1}, {loss * inv}, {logits},
                [t, inv, softmax = std::move(softmax), rows_copy = std::move(rows_copy),
                 targets_copy = std::move(targets_copy)](Node& self) {
                  double* g = InGrad(self, 0);
                  if (!g) return;
                  const double scale = self.grad[0] * inv;
                  for (size_t i = 0; i < rows_copy.size(); ++i) {
                    double* gr = g + static_cast<size_t>(rows_copy[i]) * t;
                    for (int j = 0; j < t; ++j) gr[j] += scale * softmax[i * static_cast<size_t>(t) + j];
                    gr[targets_copy[i]] -= scale;
                  }
                });
}

// ---------------------------------------------------------------------------
// AdamW

AdamW::AdamW(std::vector<Var> params, Options options) : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void AdamW::ZeroGrad() {
  for (auto& p : params_) {
    auto& g = p.mutable_grad();
    std::fill(g.begin(), g.end(), 0.0);
  }
}

void AdamW::Step(double grad_scale) {
  ++step_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  const double lr = options_.learning_rate;
  for (size_t k = 0; k < params_.size(); ++k) {
    auto value = params_[k].mutable_value();
    const auto& grad = params_[k].mutable_grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i] * grad_scale;
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g;
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g;
      value[i] -= lr * options_.weight_decay * value[i];
      value[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + options_.eps);
    }
  }
}

std::vector<double> AdamW::SaveState() const {
  std::vector<double> out;
  for (size_t k = 0; k < params_.size(); ++k) {
    out.insert(out.end(), m_[k].begin(), m_[k].end());
    out.insert(out.end(), v_[k].begin(), v_[k].end());
  }
  return out;
}

void AdamW::LoadState(std::span<const double> state, long step) {
  size_t expected = 0;
  for (const auto& p : params_) expected += 2 * p.numel();
  if (state.size() != expected) throw Error(ErrorCode::kParseError, "optimizer state size mismatch");
  size_t o = 0;
  for (size_t k = 0; k < params_.size(); ++k) {
    std::copy_n(state.begin() + static_cast<long>(o), m_[k].size(), m_[k].begin());
    o += m_[k].size();
    std::copy_n(state.begin() + static_cast<long>(o), v_[k].size(), v_[k].begin());
    o += v_[k].size();
  }
  step_ = step;
}

}  // namespace lyricsync::nn
