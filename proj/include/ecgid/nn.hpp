#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ecgid/autodiff.hpp"

namespace ecgid::tn {

// A trainable tensor: a persistent leaf node plus Adam state. The node is
// shared by every graph that uses the parameter, so gradients from all uses
// accumulate in one place.
template <class T>
struct Parameter {
  std::string name;
  Var<T> node;
  Tensor<T> m, v;  // Adam moments

  Parameter() = default;
  Parameter(std::string n, Tensor<T> t)
      : name(std::move(n)), node(leaf(std::move(t), true)), m(node->value.shape), v(node->value.shape) {}

  Tensor<T>& tensor() { return node->value; }
  const Tensor<T>& tensor() const { return node->value; }
};

template <class T>
Tensor<T> uniform_init(std::vector<int64_t> shape, int64_t fan_in, std::mt19937_64& rng) {
  const T bound = T(std::sqrt(1.0 / static_cast<double>(fan_in)));
  std::uniform_real_distribution<double> dist(-static_cast<double>(bound), static_cast<double>(bound));
  Tensor<T> t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(dist(rng));
  return t;
}

template <class T>
void zero_grads(const std::vector<Parameter<T>*>& params) {
  for (auto* p : params) p->node->grad = Tensor<T>();
}

// ---------------------------------------------------------------------------
// Adam (bias-corrected; no schedule, no weight decay)

template <class T>
struct AdamConfig {
  T lr = T(0.001);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
};

template <class T>
class Adam {
 public:
  explicit Adam(AdamConfig<T> cfg = {}) : cfg_(cfg) {}

  void step(const std::vector<Parameter<T>*>& params) {
    ++t_;
    const T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(t_)));
    const T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(t_)));
    for (Parameter<T>* p : params) {
      Tensor<T>& w = p->tensor();
      const bool has_grad = !p->node->grad.empty();
      for (int64_t i = 0; i < w.size(); ++i) {
        const T g = has_grad ? p->node->grad[i] : T(0);
        p->m[i] = cfg_.beta1 * p->m[i] + (T(1) - cfg_.beta1) * g;
        p->v[i] = cfg_.beta2 * p->v[i] + (T(1) - cfg_.beta2) * g * g;
        const T mhat = p->m[i] / bc1;
        const T vhat = p->v[i] / bc2;
        w[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

  int64_t steps_taken() const { return t_; }

 private:
  AdamConfig<T> cfg_;
  int64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Layers

template <class T>
class Dense {
 public:
  Dense() = default;
  Dense(const std::string& name, int64_t in, int64_t out, std::mt19937_64& rng)
      : w_(name + ".w", uniform_init<T>({out, in}, in, rng)),
        b_(name + ".b", uniform_init<T>({out}, in, rng)) {}

  Var<T> operator()(const Var<T>& x) const { return dense(x, w_.node, b_.node); }

  void collect(std::vector<Parameter<T>*>& out) {
    out.push_back(&w_);
    out.push_back(&b_);
  }
  Parameter<T>& weight() { return w_; }
  Parameter<T>& bias() { return b_; }
  const Parameter<T>& weight() const { return w_; }
  const Parameter<T>& bias() const { return b_; }

 private:
  Parameter<T> w_, b_;
};

template <class T>
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(const std::string& name, int64_t cin, int64_t cout, int64_t k, Conv1dSpec spec, std::mt19937_64& rng)
      : w_(name + ".w", uniform_init<T>({cout, cin, k}, cin * k, rng)),
        b_(name + ".b", uniform_init<T>({cout}, cin * k, rng)),
        spec_(spec) {}

  Var<T> operator()(const Var<T>& x) const { return conv1d(x, w_.node, b_.node, spec_); }

  void collect(std::vector<Parameter<T>*>& out) {
    out.push_back(&w_);
    out.push_back(&b_);
  }
  const Conv1dSpec& spec() const { return spec_; }
  Parameter<T>& weight() { return w_; }
  Parameter<T>& bias() { return b_; }
  const Parameter<T>& weight() const { return w_; }
  const Parameter<T>& bias() const { return b_; }

 private:
  Parameter<T> w_, b_;
  Conv1dSpec spec_;
};

// ---------------------------------------------------------------------------
// Losses. All of them take batched (B, D) embeddings / (B,) scores and reduce
// to a scalar mean over the batch.

template <class T>
Var<T> euclidean_distance(const Var<T>& a, const Var<T>& b) {
  auto d = sub(a, b);
  return sqrt_(sum_last(mul(d, d)));
}

template <class T>
Var<T> cosine_similarity(const Var<T>& a, const Var<T>& b) {
  auto num = sum_last(mul(a, b));
  auto den = mul(sqrt_(sum_last(mul(a, a))), sqrt_(sum_last(mul(b, b))));
  return div(num, den);
}

// max(0, d(a,p) - d(a,n) + margin), Euclidean d.
template <class T>
Var<T> triplet_loss(const Var<T>& anchor, const Var<T>& positive, const Var<T>& negative, T margin = T(1)) {
  auto viol = relu(add_scalar(sub(euclidean_distance(anchor, positive), euclidean_distance(anchor, negative)), margin));
  return mean_all(viol);
}

// Pairwise circle loss on cosine similarities:
//   log(1 + exp(gamma*an*(sn - dn)) * exp(-gamma*ap*(sp - dp)))
//   ap = max(0, 1 + m - sp), an = max(0, sn + m), dp = 1 - m, dn = m.
template <class T>
Var<T> circle_loss(const Var<T>& anchor, const Var<T>& positive, const Var<T>& negative,
                   T gamma = T(80), T m = T(0.4)) {
  auto sp = cosine_similarity(anchor, positive);
  auto sn = cosine_similarity(anchor, negative);
  auto ap = relu(add_scalar(neg(sp), T(1) + m));
  auto an = relu(add_scalar(sn, m));
  auto term_n = exp_(scale(mul(an, add_scalar(sn, -m)), gamma));
  auto term_p = exp_(scale(mul(ap, add_scalar(sp, -(T(1) - m))), -gamma));
  return mean_all(log_(add_scalar(mul(term_n, term_p), T(1))));
}

// -(y ln p + (1-y) ln(1-p)) with p clamped to [1e-7, 1-1e-7].
template <class T>
Var<T> bce_loss(const Var<T>& pred, const Tensor<T>& labels) {
  check_shape(pred->value.same_shape(labels), "bce: prediction/label shape mismatch");
  auto p = clamp(pred, T(1e-7), T(1) - T(1e-7));
  auto y = leaf(labels);
  auto one_minus_y = add_scalar(neg(y), T(1));
  auto one_minus_p = add_scalar(neg(p), T(1));
  auto ll = add(mul(y, log_(p)), mul(one_minus_y, log_(one_minus_p)));
  return neg(mean_all(ll));
}

}  // namespace ecgid::tn
