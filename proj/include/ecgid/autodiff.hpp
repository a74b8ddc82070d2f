#pragma once

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <initializer_list>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ecgid/tensor.hpp"

namespace ecgid::tn {

// Reverse-mode autodiff over whole tensors. Each op produces a node holding
// its value; when gradients are wanted the node also keeps parent links and a
// closure that pushes the node's gradient into its parents. A forward pass
// under NoGradGuard produces plain values with no graph behind them, so
// inference over frozen weights is read-only and safe to run concurrently.

template <class T>
struct Node;
template <class T>
using Var = std::shared_ptr<Node<T>>;

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated lazily during backward
  bool requires_grad = false;
  std::vector<Var<T>> parents;
  std::function<void(Node<T>&)> backprop;
};

inline thread_local bool g_grad_enabled = true;

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
  ~NoGradGuard() { g_grad_enabled = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <class T>
Var<T> leaf(Tensor<T> value, bool requires_grad = false) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

template <class T>
Tensor<T>& grad_of(Node<T>& n) {
  if (n.grad.empty()) n.grad = Tensor<T>::zeros(n.value.shape);
  return n.grad;
}

namespace detail {

template <class T>
bool track(std::initializer_list<const Var<T>*> parents) {
  if (!g_grad_enabled) return false;
  for (const Var<T>* p : parents) {
    if ((*p)->requires_grad) return true;
  }
  return false;
}

template <class T>
Var<T> op_node(Tensor<T> value, std::vector<Var<T>> parents, std::function<void(Node<T>&)> bp) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = true;
  n->parents = std::move(parents);
  n->backprop = std::move(bp);
  return n;
}

// Generic elementwise unary op; dfdx receives (x_i, y_i).
template <class T, class F, class DF>
Var<T> unary(const Var<T>& a, F f, DF dfdx) {
  Tensor<T> out(a->value.shape);
  for (int64_t i = 0; i < out.size(); ++i) out[i] = f(a->value[i]);
  if (!track<T>({&a})) return leaf(std::move(out));
  return op_node<T>(std::move(out), {a}, [a, dfdx](Node<T>& n) {
    Tensor<T>& g = grad_of(*a);
    for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * dfdx(a->value[i], n.value[i]);
  });
}

}  // namespace detail

template <class T>
void backward(const Var<T>& root) {
  if (root->value.size() != 1) throw std::invalid_argument("backward: root must be a scalar");
  // Reverse post-order over parent links = topological order from the root.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node<T>* p = n->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  root->grad = Tensor<T>::full(root->value.shape, T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backprop && !n->grad.empty()) n->backprop(*n);
  }
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check_shape(a->value.same_shape(b->value), "add " + shape_str(a->value.shape) + " vs " + shape_str(b->value.shape));
  Tensor<T> out(a->value.shape);
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
  if (!detail::track<T>({&a, &b})) return leaf(std::move(out));
  return detail::op_node<T>(std::move(out), {a, b}, [a, b](Node<T>& n) {
    if (a->requires_grad) {
      Tensor<T>& g = grad_of(*a);
      for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (b->requires_grad) {
      Tensor<T>& g = grad_of(*b);
      for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  check_shape(a->value.same_shape(b->value), "sub " + shape_str(a->value.shape) + " vs " + shape_str(b->value.shape));
  Tensor<T> out(a->value.shape);
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] - b->value[i];
  if (!detail::track<T>({&a, &b})) return leaf(std::move(out));
  return detail::op_node<T>(std::move(out), {a, b}, [a, b](Node<T>& n) {
    if (a->requires_grad) {
      Tensor<T>& g = grad_of(*a);
      for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (b->requires_grad) {
      Tensor<T>& g = grad_of(*b);
      for (int64_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  check_shape(a->value.same_shape(b->value), "mul " + shape_str(a->value.shape) + " vs " + shape_str(b->value.shape));
  Tensor<T> out(a->value.shape);
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
  if (!detail::track<T>({&a, &b})) return leaf(std::move(out));
  return detail::op_node<T>(std::move(out), {a, b}, [a, b](Node<T>& n) {
    if (a->requires_grad) {
      Tensor<T>& g = grad_of(*a);
      for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * b->value[i];
    }
    if (b->requires_grad) {
      Tensor<T>& g = grad_of(*b);
      for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * a->value[i];
    }
  });
}

template <class T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  check_shape(a->value.same_shape(b->value), "div " + shape_str(a->value.shape) + " vs " + shape_str(b->value.shape));
  Tensor<T> out(a->value.shape);
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] / b->value[i];
  if (!detail::track<T>({&a, &b})) return leaf(std::move(out));
  return detail::op_node<T>(std::move(out), {a, b}, [a, b](Node<T>& n) {
    if (a->requires_grad) {
      Tensor<T>& g = grad_of(*a);
      for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] / b->value[i];
    }
    if (b->requires_grad) {
      Tensor<T>& g = grad_of(*b);
      for (int64_t i = 0; i < g.size(); ++i) {
        g[i] -= n.grad[i] * a->value[i] / (b->value[i] * b->value[i]);
      }
    }
  });
}

template <class T>
Var<T> neg(const Var<T>& a) {
  return detail::unary(a, [](T x) { return -x; }, [](T, T) { return T(-1); });
}

template <class T>
Var<T> scale(const Var<T>& a, T c) {
  return detail::unary(a, [c](T x) { return c * x; }, [c](T, T) { return c; });
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T c) {
  return detail::unary(a, [c](T x) { return x + c; }, [](T, T) { return T(1); });
}

template <class T>
Var<T> abs_(const Var<T>& a) {
  return detail::unary(a, [](T x) { return std::abs(x); },
                       [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <class T>
Var<T> relu(const Var<T>& a) {
  return detail::unary(a, [](T x) { return x > T(0) ? x : T(0); },
                       [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <class T>
Var<T> sigmoid(const Var<T>& a) {
  return detail::unary(a, [](T x) { return T(1) / (T(1) + std::exp(-x)); },
                       [](T, T y) { return y * (T(1) - y); });
}

// Forward is the exact square root; the derivative denominator is guarded so
// a zero input does not poison the whole gradient with infinities.
template <class T>
Var<T> sqrt_(const Var<T>& a) {
  return detail::unary(a, [](T x) { return std::sqrt(x); },
                       [](T, T y) { return T(0.5) / std::max(y, T(1e-12)); });
}

template <class T>
Var<T> exp_(const Var<T>& a) {
  return detail::unary(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <class T>
Var<T> log_(const Var<T>& a) {
  return detail::unary(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <class T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
  return detail::unary(a, [lo, hi](T x) { return std::min(std::max(x, lo), hi); },
                       [lo, hi](T x, T) { return (x >= lo && x <= hi) ? T(1) : T(0); });
}

// ---------------------------------------------------------------------------
// Shape ops and reductions

template <class T>
Var<T> reshape(const Var<T>& a, std::vector<int64_t> new_shape) {
  check_shape(Tensor<T>::count(new_shape) == a->value.size(),
              "reshape " + shape_str(a->value.shape) + " -> " + shape_str(new_shape));
  Tensor<T> out(std::move(new_shape), a->value.v);
  if (!detail::track<T>({&a})) return leaf(std::move(out));
  return detail::op_node<T>(std::move(out), {a}, [a](Node<T>& n) {
    Tensor<T>& g = grad_of(*a);
    for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  });
}

// (..., D) -> (...)
template <class T>
Var<T> sum_last(const Var<T>& a) {
  check_shape(a->value.rank() >= 1, "sum_last needs rank >= 1");
  const int64_t d = a->value.shape.back();
  std::vector<int64_t> out_shape(a->value.shape.begin(), a->value.shape.end() - 1);
  if (out_shape.empty()) out_shape = {1};
  Tensor<T> out(out_shape);
  for (int64_t r = 0; r < out.size(); ++r) {
    T s = T(0);
    for (int64_t i = 0; i < d; ++i) s += a->value[r * d + i];
    out[r] = s;
  }
  if (!detail::track<T>({&a})) return leaf(std::move(out));
  return detail::op_node<T>(std::move(out), {a}, [a, d](Node<T>& n) {
    Tensor<T>& g = grad_of(*a);
    for (int64_t r = 0; r < n.grad.size(); ++r) {
      for (int64_t i = 0; i < d; ++i) g[r * d + i] += n.grad[r];
    }
  });
}

template <class T>
Var<T> mean_last(const Var<T>& a) {
  const int64_t d = a->value.shape.back();
  return scale(sum_last(a), T(1) / T(d));
}

// (B, C, L) -> (B, C); alias that carries the model-facing name.
template <class T>
Var<T> mean_over_time(const Var<T>& a) {
  check_shape(a->value.rank() == 3 || a->value.rank() == 2, "mean_over_time expects (B,C,L) or (C,L)");
  return mean_last(a);
}

template <class T>
Var<T> sum_all(const Var<T>& a) {
  Tensor<T> out({1});
  T s = T(0);
  for (int64_t i = 0; i < a->value.size(); ++i) s += a->value[i];
  out[0] = s;
  if (!detail::track<T>({&a})) return leaf(std::move(out));
  return detail::op_node<T>(std::move(out), {a}, [a](Node<T>& n) {
    Tensor<T>& g = grad_of(*a);
    for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[0];
  });
}

template <class T>
Var<T> mean_all(const Var<T>& a) {
  return scale(sum_all(a), T(1) / T(a->value.size()));
}

// Residual connection; add with an explicit name so call sites read like the
// architecture tables.
template <class T>
Var<T> residual_add(const Var<T>& a, const Var<T>& b) {
  return add(a, b);
}

// Concatenate along a new last axis: k inputs of shape (B,) -> (B, k).
template <class T>
Var<T> stack_last(const std::vector<Var<T>>& xs) {
  check_shape(!xs.empty(), "stack_last needs at least one input");
  const auto& s0 = xs[0]->value.shape;
  for (const auto& x : xs) check_shape(x->value.shape == s0, "stack_last inputs must share shape");
  const int64_t rows = xs[0]->value.size();
  const int64_t k = static_cast<int64_t>(xs.size());
  std::vector<int64_t> out_shape = s0;
  out_shape.push_back(k);
  Tensor<T> out(out_shape);
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t j = 0; j < k; ++j) out[r * k + j] = xs[static_cast<size_t>(j)]->value[r];
  }
  bool any = false;
  for (const auto& x : xs) any = any || (g_grad_enabled && x->requires_grad);
  if (!g_grad_enabled || !any) return leaf(std::move(out));
  std::vector<Var<T>> parents(xs.begin(), xs.end());
  return detail::op_node<T>(std::move(out), std::move(parents), [xs, rows, k](Node<T>& n) {
    for (int64_t j = 0; j < k; ++j) {
      const auto& x = xs[static_cast<size_t>(j)];
      if (!x->requires_grad) continue;
      Tensor<T>& g = grad_of(*x);
      for (int64_t r = 0; r < rows; ++r) g[r] += n.grad[r * k + j];
    }
  });
}

// a: (..., D), w: (D); multiplies every trailing slice by w.
template <class T>
Var<T> broadcast_mul_last(const Var<T>& a, const Var<T>& w) {
  check_shape(w->value.rank() == 1 && a->value.shape.back() == w->value.dim(0),
              "broadcast_mul_last " + shape_str(a->value.shape) + " vs " + shape_str(w->value.shape));
  const int64_t d = w->value.dim(0);
  const int64_t rows = a->value.size() / d;
  Tensor<T> out(a->value.shape);
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t i = 0; i < d; ++i) out[r * d + i] = a->value[r * d + i] * w->value[i];
  }
  if (!detail::track<T>({&a, &w})) return leaf(std::move(out));
  return detail::op_node<T>(std::move(out), {a, w}, [a, w, rows, d](Node<T>& n) {
    if (a->requires_grad) {
      Tensor<T>& g = grad_of(*a);
      for (int64_t r = 0; r < rows; ++r) {
        for (int64_t i = 0; i < d; ++i) g[r * d + i] += n.grad[r * d + i] * w->value[i];
      }
    }
    if (w->requires_grad) {
      Tensor<T>& g = grad_of(*w);
      for (int64_t r = 0; r < rows; ++r) {
        for (int64_t i = 0; i < d; ++i) g[i] += n.grad[r * d + i] * a->value[r * d + i];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Dense / conv1d (Eigen GEMM under the hood)

namespace detail {
template <class T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapRM = Eigen::Map<MatRM<T>>;
template <class T>
using CMapRM = Eigen::Map<const MatRM<T>>;
}  // namespace detail

// x: (B, N) or (N,); w: (M, N); b: (M) or empty -> (B, M) or (M,)
template <class T>
Var<T> dense(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  const bool batched = x->value.rank() == 2;
  check_shape(x->value.rank() == 1 || batched, "dense input must be (N,) or (B,N)");
  check_shape(w->value.rank() == 2, "dense weights must be (M,N)");
  const int64_t n = batched ? x->value.dim(1) : x->value.dim(0);
  const int64_t batch = batched ? x->value.dim(0) : 1;
  const int64_t m = w->value.dim(0);
  check_shape(w->value.dim(1) == n, "dense: weight columns " + shape_str(w->value.shape) +
                                        " vs input " + shape_str(x->value.shape));
  const bool has_bias = !b->value.empty();
  if (has_bias) check_shape(b->value.rank() == 1 && b->value.dim(0) == m, "dense: bias must be (M,)");

  Tensor<T> out(batched ? std::vector<int64_t>{batch, m} : std::vector<int64_t>{m});
  {
    detail::CMapRM<T> X(x->value.data(), batch, n);
    detail::CMapRM<T> W(w->value.data(), m, n);
    detail::MapRM<T> Y(out.data(), batch, m);
    Y.noalias() = X * W.transpose();
    if (has_bias) {
      for (int64_t r = 0; r < batch; ++r) {
        for (int64_t j = 0; j < m; ++j) out[r * m + j] += b->value[j];
      }
    }
  }
  if (!detail::track<T>({&x, &w, &b})) return leaf(std::move(out));
  return detail::op_node<T>(std::move(out), {x, w, b}, [x, w, b, batch, n, m, has_bias](Node<T>& nd) {
    detail::CMapRM<T> G(nd.grad.data(), batch, m);
    if (x->requires_grad) {
      detail::CMapRM<T> W(w->value.data(), m, n);
      detail::MapRM<T> GX(grad_of(*x).data(), batch, n);
      GX.noalias() += G * W;
    }
    if (w->requires_grad) {
      detail::CMapRM<T> X(x->value.data(), batch, n);
      detail::MapRM<T> GW(grad_of(*w).data(), m, n);
      GW.noalias() += G.transpose() * X;
    }
    if (has_bias && b->requires_grad) {
      Tensor<T>& gb = grad_of(*b);
      for (int64_t r = 0; r < batch; ++r) {
        for (int64_t j = 0; j < m; ++j) gb[j] += nd.grad[r * m + j];
      }
    }
  });
}

enum class PadMode { Zeros, Circular };

struct Conv1dSpec {
  int stride = 1;
  int dilation = 1;
  PadMode pad = PadMode::Zeros;
  // Explicit padding for Zeros mode. Circular mode derives (K-1)*dilation
  // split floor-left / ceil-right, which keeps L_out == L at stride 1.
  int pad_left = 0;
  int pad_right = 0;
};

namespace detail {

struct ConvDims {
  int64_t batch, cin, len, cout, k;
  int64_t pad_left, pad_right, lout;
  bool batched;
};

template <class T>
ConvDims conv_dims(const Tensor<T>& x, const Tensor<T>& w, const Conv1dSpec& spec) {
  ConvDims d{};
  d.batched = x.rank() == 3;
  check_shape(x.rank() == 2 || x.rank() == 3, "conv1d input must be (C,L) or (B,C,L)");
  check_shape(w.rank() == 3, "conv1d kernels must be (Cout,Cin,K)");
  d.batch = d.batched ? x.dim(0) : 1;
  d.cin = d.batched ? x.dim(1) : x.dim(0);
  d.len = d.batched ? x.dim(2) : x.dim(1);
  d.cout = w.dim(0);
  d.k = w.dim(2);
  check_shape(w.dim(1) == d.cin, "conv1d: kernel channels " + shape_str(w.shape) + " vs input " + shape_str(x.shape));
  check_shape(spec.stride >= 1 && spec.dilation >= 1, "conv1d: stride/dilation must be >= 1");
  const int64_t span = static_cast<int64_t>(spec.dilation) * (d.k - 1) + 1;
  if (spec.pad == PadMode::Circular) {
    const int64_t total = static_cast<int64_t>(spec.dilation) * (d.k - 1);
    d.pad_left = total / 2;
    d.pad_right = total - d.pad_left;
  } else {
    d.pad_left = spec.pad_left;
    d.pad_right = spec.pad_right;
  }
  const int64_t padded = d.len + d.pad_left + d.pad_right;
  check_shape(padded >= span, "conv1d: kernel span exceeds padded input");
  d.lout = (padded - span) / spec.stride + 1;
  return d;
}

// col layout: (Cin*K, B*Lout) row-major, so each (ci,k) row is contiguous
// over (b, j) and circular stride-1 rows are two memcpy segments.
template <class T>
void im2col(const Tensor<T>& x, const ConvDims& d, const Conv1dSpec& spec, std::vector<T>& col) {
  col.assign(static_cast<size_t>(d.cin * d.k * d.batch * d.lout), T(0));
  const int64_t row_stride = d.batch * d.lout;
  for (int64_t ci = 0; ci < d.cin; ++ci) {
    for (int64_t k = 0; k < d.k; ++k) {
      T* row = col.data() + (ci * d.k + k) * row_stride;
      const int64_t off = k * spec.dilation - d.pad_left;
      for (int64_t b = 0; b < d.batch; ++b) {
        const T* src = x.data() + (b * d.cin + ci) * d.len;
        T* dst = row + b * d.lout;
        if (spec.pad == PadMode::Circular && spec.stride == 1) {
          int64_t start = ((off % d.len) + d.len) % d.len;
          const int64_t first = std::min(d.lout, d.len - start);
          std::copy(src + start, src + start + first, dst);
          if (first < d.lout) std::copy(src, src + (d.lout - first), dst + first);
        } else {
          for (int64_t j = 0; j < d.lout; ++j) {
            int64_t s = j * spec.stride + off;
            if (spec.pad == PadMode::Circular) {
              s = ((s % d.len) + d.len) % d.len;
            } else if (s < 0 || s >= d.len) {
              continue;  // zero padding
            }
            dst[j] = src[s];
          }
        }
      }
    }
  }
}

}  // namespace detail

// x: (B, Cin, L) or (Cin, L); w: (Cout, Cin, K); b: (Cout) or empty.
// Cross-correlation semantics: y[b,co,j] = sum_{ci,k} w[co,ci,k] * x[b,ci,j*stride + k*dilation - pad_left].
template <class T>
Var<T> conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& b, const Conv1dSpec& spec) {
  const detail::ConvDims d = detail::conv_dims(x->value, w->value, spec);
  const bool has_bias = !b->value.empty();
  if (has_bias) check_shape(b->value.rank() == 1 && b->value.dim(0) == d.cout, "conv1d: bias must be (Cout,)");

  thread_local std::vector<T> col;  // scratch reused across calls
  detail::im2col(x->value, d, spec, col);

  Tensor<T> out(d.batched ? std::vector<int64_t>{d.batch, d.cout, d.lout}
                          : std::vector<int64_t>{d.cout, d.lout});
  {
    detail::CMapRM<T> W(w->value.data(), d.cout, d.cin * d.k);
    detail::CMapRM<T> C(col.data(), d.cin * d.k, d.batch * d.lout);
    detail::MatRM<T> Y = W * C;  // (Cout, B*Lout)
    for (int64_t co = 0; co < d.cout; ++co) {
      const T* yrow = Y.data() + co * d.batch * d.lout;
      const T bias = has_bias ? b->value[co] : T(0);
      for (int64_t bb = 0; bb < d.batch; ++bb) {
        T* dst = out.data() + (bb * d.cout + co) * d.lout;
        const T* src = yrow + bb * d.lout;
        for (int64_t j = 0; j < d.lout; ++j) dst[j] = src[j] + bias;
      }
    }
  }
  if (!detail::track<T>({&x, &w, &b})) return leaf(std::move(out));
  return detail::op_node<T>(std::move(out), {x, w, b}, [x, w, b, spec, d, has_bias](Node<T>& nd) {
    // Gather output grad into (Cout, B*Lout).
    detail::MatRM<T> G(d.cout, d.batch * d.lout);
    for (int64_t co = 0; co < d.cout; ++co) {
      for (int64_t bb = 0; bb < d.batch; ++bb) {
        const T* src = nd.grad.data() + (bb * d.cout + co) * d.lout;
        T* dst = G.data() + co * d.batch * d.lout + bb * d.lout;
        std::copy(src, src + d.lout, dst);
      }
    }
    if (w->requires_grad) {
      // Rebuild col from the saved input instead of keeping it alive.
      static thread_local std::vector<T> col;
      detail::im2col(x->value, d, spec, col);
      detail::CMapRM<T> C(col.data(), d.cin * d.k, d.batch * d.lout);
      detail::MapRM<T> GW(grad_of(*w).data(), d.cout, d.cin * d.k);
      GW.noalias() += G * C.transpose();
    }
    if (has_bias && b->requires_grad) {
      Tensor<T>& gb = grad_of(*b);
      for (int64_t co = 0; co < d.cout; ++co) {
        T s = T(0);
        const T* row = G.data() + co * d.batch * d.lout;
        for (int64_t i = 0; i < d.batch * d.lout; ++i) s += row[i];
        gb[co] += s;
      }
    }
    if (x->requires_grad) {
      detail::CMapRM<T> W(w->value.data(), d.cout, d.cin * d.k);
      detail::MatRM<T> dcol = W.transpose() * G;  // (Cin*K, B*Lout)
      Tensor<T>& gx = grad_of(*x);
      const int64_t row_stride = d.batch * d.lout;
      for (int64_t ci = 0; ci < d.cin; ++ci) {
        for (int64_t k = 0; k < d.k; ++k) {
          const T* row = dcol.data() + (ci * d.k + k) * row_stride;
          const int64_t off = k * spec.dilation - d.pad_left;
          for (int64_t bb = 0; bb < d.batch; ++bb) {
            T* dst = gx.data() + (bb * d.cin + ci) * d.len;
            const T* src = row + bb * d.lout;
            if (spec.pad == PadMode::Circular && spec.stride == 1) {
              // scatter is two contiguous segment adds
              const int64_t start = ((off % d.len) + d.len) % d.len;
              const int64_t first = std::min(d.lout, d.len - start);
              for (int64_t j = 0; j < first; ++j) dst[start + j] += src[j];
              for (int64_t j = first; j < d.lout; ++j) dst[j - first] += src[j];
            } else {
              for (int64_t j = 0; j < d.lout; ++j) {
                int64_t s = j * spec.stride + off;
                if (spec.pad == PadMode::Circular) {
                  s = ((s % d.len) + d.len) % d.len;
                } else if (s < 0 || s >= d.len) {
                  continue;
                }
                dst[s] += src[j];
              }
            }
          }
        }
      }
    }
  });
}

}  // namespace ecgid::tn
