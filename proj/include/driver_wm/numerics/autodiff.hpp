#pragma once

// Taped reverse-mode differentiation over 2D binary64 matrices.
//
// A Var is a handle to a graph node. Nodes built from inputs that do not
// require gradients carry no parents and no backward closure, so inference
// passes cost one allocation per op and nothing else. backward() visits the
// graph reachable from a scalar root in reverse topological order; leaf
// gradients accumulate across calls until the caller clears them.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "driver_wm/error.hpp"
#include "driver_wm/numerics/tensor.hpp"

namespace dwm::ad {

struct Node {
  Tensor value;
  Tensor grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;

  Tensor& grad_buffer() {
    if (grad.size() != value.size()) grad = Tensor(value.shape(), 0.0);
    return grad;
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  double item() const { return node_->value.item(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }

  /// Gradient accumulated on this node (zeros if backward never reached it).
  Tensor grad() const {
    if (node_->grad.size() == node_->value.size()) return node_->grad;
    return Tensor(node_->value.shape(), 0.0);
  }
  void zero_grad() { node_->grad = Tensor(); }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

inline Tensor as_matrix(Tensor t) {
  if (t.rank() == 2) return t;
  const std::size_t r = t.rows();
  const std::size_t c = t.cols();
  return t.reshaped({r, c});
}

inline Var make(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (const auto& in : inputs) node->parents.push_back(in.shared());
    node->backward_fn = std::move(fn);
  }
  return Var(std::move(node));
}

inline void require_same(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorCode::kShapeMismatch, std::string(op) + ": " + a.value().shape_string() + " vs " +
                                        b.value().shape_string());
  }
}

enum class Broadcast { kNone, kRow, kScalar };

inline Broadcast broadcast_kind(const Var& a, const Var& b, const char* op) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::kNone;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::kScalar;
  fail(ErrorCode::kShapeMismatch,
       std::string(op) + ": cannot broadcast " + b.value().shape_string() + " onto " +
           a.value().shape_string());
}

inline std::size_t b_index(Broadcast kind, std::size_t i, std::size_t cols) {
  switch (kind) {
    case Broadcast::kNone: return i;
    case Broadcast::kRow: return i % cols;
    case Broadcast::kScalar: return 0;
  }
  return i;
}

template <typename F, typename DF>
Var unary(const Var& x, F f, DF df) {
  Tensor out(x.value().shape());
  const auto& in = x.value();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return make(std::move(out), {x}, [df](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(p.value[i], self.value[i]);
  });
}

}  // namespace detail

/// Leaf that participates in differentiation.
inline Var leaf(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = detail::as_matrix(std::move(value));
  node->requires_grad = true;
  return Var(std::move(node));
}

inline Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = detail::as_matrix(std::move(value));
  return Var(std::move(node));
}

inline Var scalar(double v) { return constant(Tensor::scalar(v)); }

// ---------------------------------------------------------------- arithmetic

inline Var add(const Var& a, const Var& b) {
  const auto kind = detail::broadcast_kind(a, b, "add");
  Tensor out = a.value();
  const std::size_t cols = a.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[detail::b_index(kind, i, cols)];
  return detail::make(std::move(out), {a, b}, [kind, cols](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      Tensor& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      Tensor& g = pb.grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[detail::b_index(kind, i, cols)] += self.grad[i];
    }
  });
}

inline Var sub(const Var& a, const Var& b) {
  const auto kind = detail::broadcast_kind(a, b, "sub");
  Tensor out = a.value();
  const std::size_t cols = a.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[detail::b_index(kind, i, cols)];
  return detail::make(std::move(out), {a, b}, [kind, cols](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      Tensor& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      Tensor& g = pb.grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[detail::b_index(kind, i, cols)] -= self.grad[i];
    }
  });
}

/// Elementwise product; b may be a row or a scalar broadcast over a.
inline Var mul(const Var& a, const Var& b) {
  const auto kind = detail::broadcast_kind(a, b, "mul");
  Tensor out = a.value();
  const std::size_t cols = a.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[detail::b_index(kind, i, cols)];
  return detail::make(std::move(out), {a, b}, [kind, cols](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      Tensor& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += self.grad[i] * pb.value[detail::b_index(kind, i, cols)];
    }
    if (pb.requires_grad) {
      Tensor& g = pb.grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        g[detail::b_index(kind, i, cols)] += self.grad[i] * pa.value[i];
    }
  });
}

/// alpha * x + beta
inline Var affine(const Var& x, double alpha, double beta = 0.0) {
  return detail::unary(
      x, [alpha, beta](double v) { return alpha * v + beta; },
      [alpha](double, double) { return alpha; });
}

inline Var scale(const Var& x, double alpha) { return affine(x, alpha, 0.0); }

inline Var matmul(const Var& a, const Var& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    fail(ErrorCode::kShapeMismatch,
         "matmul: " + a.value().shape_string() + " x " + b.value().shape_string());
  }
  Tensor out = Tensor::matrix(m, n);
  const double* A = a.value().storage().data();
  const double* B = b.value().storage().data();
  double* C = out.storage().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B + p * n;
      double* crow = C + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return detail::make(std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const double* G = self.grad.storage().data();
    if (pa.requires_grad) {
      double* GA = pa.grad_buffer().storage().data();
      const double* B = pb.value.storage().data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          const double* brow = B + p * n;
          const double* grow = G + i * n;
          for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
          GA[i * k + p] += s;
        }
      }
    }
    if (pb.requires_grad) {
      double* GB = pb.grad_buffer().storage().data();
      const double* A = pa.value.storage().data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          if (av == 0.0) continue;
          const double* grow = G + i * n;
          double* gbrow = GB + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
      }
    }
  });
}

inline Var transpose(const Var& x) {
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out = Tensor::matrix(c, r);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(j, i) = x.value()(i, j);
  return detail::make(std::move(out), {x}, [r, c](Node& self) {
    Node& p = *self.parents[0];
    Tensor& g = p.grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g(i, j) += self.grad(j, i);
  });
}

// ---------------------------------------------------------------- pointwise

inline Var tanh(const Var& x) {
  return detail::unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

inline double sigmoid_scalar(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

inline Var sigmoid(const Var& x) {
  return detail::unary(
      x, [](double v) { return sigmoid_scalar(v); }, [](double, double y) { return y * (1.0 - y); });
}

inline Var exp(const Var& x) {
  return detail::unary(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Var log(const Var& x) {
  return detail::unary(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

inline Var relu(const Var& x) {
  return detail::unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

/// Subgradient 0 at the kink.
inline Var abs(const Var& x) {
  return detail::unary(
      x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

/// Gradient taken as 0 at x = 0.
inline Var sqrt(const Var& x) {
  return detail::unary(
      x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

inline Var square(const Var& x) {
  return detail::unary(
      x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

/// Gradient passes only strictly inside (lo, hi).
inline Var clamp(const Var& x, double lo, double hi) {
  return detail::unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------- reductions

inline Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().storage()) s += v;
  return detail::make(Tensor::scalar(s), {x}, [](Node& self) {
    Node& p = *self.parents[0];
    Tensor& g = p.grad_buffer();
    const double up = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += up;
  });
}

/// Column sums: m x n -> 1 x n.
inline Var sum_rows(const Var& x) {
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out = Tensor::matrix(1, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += x.value()(i, j);
  return detail::make(std::move(out), {x}, [r, c](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g(i, j) += self.grad[j];
  });
}

inline Var mean_rows(const Var& x) { return scale(sum_rows(x), 1.0 / static_cast<double>(x.rows())); }

/// Row sums: m x n -> m x 1.
inline Var sum_cols(const Var& x) {
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out = Tensor::matrix(r, 1);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i] += x.value()(i, j);
  return detail::make(std::move(out), {x}, [r, c](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g(i, j) += self.grad[i];
  });
}

/// Row-wise softmax. With causal=true, row i only sees columns j <= i + offset;
/// the masked entries are exactly zero and receive no gradient.
inline Var softmax_rows(const Var& x, bool causal = false, std::size_t offset = 0) {
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out = Tensor::matrix(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t width = causal ? std::min(c, i + offset + 1) : c;
    double mx = x.value()(i, 0);
    for (std::size_t j = 1; j < width; ++j) mx = std::max(mx, x.value()(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      const double e = std::exp(x.value()(i, j) - mx);
      out(i, j) = e;
      z += e;
    }
    for (std::size_t j = 0; j < width; ++j) out(i, j) /= z;
  }
  return detail::make(std::move(out), {x}, [r, c](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += self.grad(i, j) * self.value(i, j);
      for (std::size_t j = 0; j < c; ++j) g(i, j) += self.value(i, j) * (self.grad(i, j) - dot);
    }
  });
}

// ---------------------------------------------------------------- structure

inline Var reshape(const Var& x, std::size_t rows, std::size_t cols) {
  if (rows * cols != x.value().size()) {
    fail(ErrorCode::kShapeMismatch, "reshape " + x.value().shape_string() + " to " +
                                        std::to_string(rows) + "x" + std::to_string(cols));
  }
  return detail::make(x.value().reshaped({rows, cols}), {x}, [](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

inline Var slice_rows(const Var& x, std::size_t begin, std::size_t end) {
  if (begin > end || end > x.rows()) {
    fail(ErrorCode::kShapeMismatch, "slice_rows [" + std::to_string(begin) + "," + std::to_string(end) +
                                        ") of " + x.value().shape_string());
  }
  const std::size_t c = x.cols();
  Tensor out = Tensor::matrix(end - begin, c);
  std::copy(x.value().storage().begin() + static_cast<std::ptrdiff_t>(begin * c),
            x.value().storage().begin() + static_cast<std::ptrdiff_t>(end * c), out.storage().begin());
  return detail::make(std::move(out), {x}, [begin, c](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * c + i] += self.grad[i];
  });
}

inline Var row(const Var& x, std::size_t i) { return slice_rows(x, i, i + 1); }

inline Var slice_cols(const Var& x, std::size_t begin, std::size_t end) {
  if (begin > end || end > x.cols()) {
    fail(ErrorCode::kShapeMismatch, "slice_cols [" + std::to_string(begin) + "," + std::to_string(end) +
                                        ") of " + x.value().shape_string());
  }
  const std::size_t r = x.rows(), w = end - begin;
  Tensor out = Tensor::matrix(r, w);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) out(i, j) = x.value()(i, begin + j);
  return detail::make(std::move(out), {x}, [r, w, begin](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) g(i, begin + j) += self.grad(i, j);
  });
}

inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) fail(ErrorCode::kEmptyInput, "concat_rows of nothing");
  const std::size_t c = parts[0].cols();
  std::size_t r = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) fail(ErrorCode::kShapeMismatch, "concat_rows column mismatch");
    r += p.rows();
  }
  Tensor out = Tensor::matrix(r, c);
  std::size_t at = 0;
  for (const auto& p : parts) {
    std::copy(p.value().storage().begin(), p.value().storage().end(), out.storage().begin() + static_cast<std::ptrdiff_t>(at));
    at += p.value().size();
  }
  return detail::make(std::move(out), parts, [](Node& self) {
    std::size_t off = 0;
    for (auto& parent : self.parents) {
      const std::size_t n = parent->value.size();
      if (parent->requires_grad) {
        Tensor& g = parent->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[off + i];
      }
      off += n;
    }
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) fail(ErrorCode::kEmptyInput, "concat_cols of nothing");
  const std::size_t r = parts[0].rows();
  std::size_t c = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) fail(ErrorCode::kShapeMismatch, "concat_cols row mismatch");
    c += p.cols();
  }
  Tensor out = Tensor::matrix(r, c);
  std::size_t at = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) out(i, at + j) = p.value()(i, j);
    at += p.cols();
  }
  return detail::make(std::move(out), parts, [r](Node& self) {
    std::size_t at = 0;
    for (auto& parent : self.parents) {
      const std::size_t w = parent->value.cols();
      if (parent->requires_grad) {
        Tensor& g = parent->grad_buffer();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < w; ++j) g(i, j) += self.grad(i, at + j);
      }
      at += w;
    }
  });
}

/// 1 x n -> m x n.
inline Var broadcast_rows(const Var& x, std::size_t m) {
  if (x.rows() != 1) fail(ErrorCode::kShapeMismatch, "broadcast_rows expects one row");
  return add(constant(Tensor::matrix(m, x.cols())), x);
}

// ---------------------------------------------------------------- losses

/// Softmax cross-entropy of a 1 x k logit row against a class index,
/// computed through log-sum-exp.
inline Var cross_entropy(const Var& logits, std::size_t label) {
  if (logits.rows() != 1) fail(ErrorCode::kShapeMismatch, "cross_entropy expects one logit row");
  const std::size_t k = logits.cols();
  if (label >= k) {
    fail(ErrorCode::kLabelOutOfRange, "label " + std::to_string(label) + " for " + std::to_string(k) + " classes");
  }
  const auto& z = logits.value();
  double mx = z[0];
  for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, z[j]);
  double s = 0.0;
  for (std::size_t j = 0; j < k; ++j) s += std::exp(z[j] - mx);
  const double lse = mx + std::log(s);
  return detail::make(Tensor::scalar(lse - z[label]), {logits}, [k, label, lse](Node& self) {
    Node& p = *self.parents[0];
    Tensor& g = p.grad_buffer();
    const double up = self.grad[0];
    for (std::size_t j = 0; j < k; ++j) {
      const double prob = std::exp(p.value[j] - lse);
      g[j] += up * (prob - (j == label ? 1.0 : 0.0));
    }
  });
}

// ---------------------------------------------------------------- operators

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

// ---------------------------------------------------------------- backward

/// Reverse pass from a 1x1 root. Intermediate gradients are rebuilt on every
/// call; gradients on leaves (nodes without parents) accumulate.
inline void backward(const Var& root) {
  if (root.value().size() != 1) fail(ErrorCode::kShapeMismatch, "backward root must be scalar");
  if (!root.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && !seen.count(parent)) {
        seen.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) {
    if (!n->parents.empty()) n->grad = Tensor();
  }
  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() == n->value.size()) n->backward_fn(*n);
  }
}

}  // namespace dwm::ad
