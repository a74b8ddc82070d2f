#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ecgid/ecgvec.hpp"
#include "ecgid/embedder.hpp"
#include "ecgid/nn.hpp"

namespace ecgid::disc {

enum class FeatureMode { Exclude, Merge, Full };

const char* feature_mode_name(FeatureMode m);
FeatureMode feature_mode_from_name(const std::string& name);

// Which distance families feed the head and whether their sums carry
// learnable per-dimension weights (full) or stay plain (merge). Defaults are
// the best searched configuration: l1 full, hidden size 16, rest excluded.
struct DiscriminatorConfig {
  FeatureMode l1 = FeatureMode::Full;
  FeatureMode l2 = FeatureMode::Exclude;
  FeatureMode cos = FeatureMode::Exclude;
  int hidden_size = 16;  // 0 = linear combination only
  int embedding_dim = 256;
  uint64_t init_seed = 2;
};

void validate(const DiscriminatorConfig& cfg);

// sum_i w_i |p_i - q_i|; w empty means w == 1.
double distance_l1(std::span<const double> p, std::span<const double> q, std::span<const double> w = {});
// sum_i w_i (p_i - q_i)^2 (squared distance, no root).
double distance_l2(std::span<const double> p, std::span<const double> q, std::span<const double> w = {});
// sum_i w_i p_i q_i / (|p| |q|); throws std::domain_error on a zero-norm input.
double distance_cos(std::span<const double> p, std::span<const double> q, std::span<const double> w = {});

// Discriminator head f(u, v): one scalar feature per enabled distance family
// (feature order l1, l2, cos), optional hidden layer, linear combination,
// sigmoid. Symmetric in its arguments by construction.
template <class T>
class DiscriminatorHead : public PairScorer {
 public:
  explicit DiscriminatorHead(const DiscriminatorConfig& cfg) : cfg_(cfg) {
    validate(cfg);
    std::mt19937_64 rng(cfg.init_seed);
    const int64_t d = cfg.embedding_dim;
    if (cfg.l1 == FeatureMode::Full) w_l1_.emplace("disc.w_l1", tn::Tensor<T>::full({d}, T(1) / T(d)));
    if (cfg.l2 == FeatureMode::Full) w_l2_.emplace("disc.w_l2", tn::Tensor<T>::full({d}, T(1) / T(d)));
    if (cfg.cos == FeatureMode::Full) w_cos_.emplace("disc.w_cos", tn::Tensor<T>::full({d}, T(1) / T(d)));
    n_features_ = (cfg.l1 != FeatureMode::Exclude) + (cfg.l2 != FeatureMode::Exclude) +
                  (cfg.cos != FeatureMode::Exclude);
    if (cfg.hidden_size > 0) {
      hidden_.emplace("disc.hidden", n_features_, cfg.hidden_size, rng);
      out_ = tn::Dense<T>("disc.out", cfg.hidden_size, 1, rng);
    } else {
      out_ = tn::Dense<T>("disc.out", n_features_, 1, rng);
    }
  }

  DiscriminatorHead(const DiscriminatorHead&) = delete;
  DiscriminatorHead& operator=(const DiscriminatorHead&) = delete;

  const DiscriminatorConfig& config() const { return cfg_; }

  // Graph path for training; p, q: (B, D) -> (B,) probabilities.
  tn::Var<T> forward(const tn::Var<T>& p, const tn::Var<T>& q) const {
    const int64_t batch = p->value.dim(0);
    const auto diff = tn::sub(p, q);
    std::vector<tn::Var<T>> feats;
    if (cfg_.l1 != FeatureMode::Exclude) {
      auto a = tn::abs_(diff);
      feats.push_back(tn::sum_last(cfg_.l1 == FeatureMode::Full ? tn::broadcast_mul_last(a, w_l1_->node) : a));
    }
    if (cfg_.l2 != FeatureMode::Exclude) {
      auto s = tn::mul(diff, diff);
      feats.push_back(tn::sum_last(cfg_.l2 == FeatureMode::Full ? tn::broadcast_mul_last(s, w_l2_->node) : s));
    }
    if (cfg_.cos != FeatureMode::Exclude) {
      auto prod = tn::mul(p, q);
      auto num = tn::sum_last(cfg_.cos == FeatureMode::Full ? tn::broadcast_mul_last(prod, w_cos_->node) : prod);
      auto den = tn::mul(tn::sqrt_(tn::sum_last(tn::mul(p, p))), tn::sqrt_(tn::sum_last(tn::mul(q, q))));
      feats.push_back(tn::div(num, den));
    }
    tn::Var<T> h = tn::stack_last(feats);  // (B, F)
    if (hidden_) h = tn::relu((*hidden_)(h));
    return tn::sigmoid(tn::reshape(out_(h), {batch}));
  }

  // Inference path on plain vectors; arithmetic in double.
  double discriminate(const EcgVector& p, const EcgVector& q) const {
    if (p.dim() != cfg_.embedding_dim || q.dim() != cfg_.embedding_dim) {
      throw std::invalid_argument("discriminate: vector dimension mismatch");
    }
    std::vector<double> feats;
    feats.reserve(static_cast<size_t>(n_features_));
    if (cfg_.l1 != FeatureMode::Exclude) {
      feats.push_back(distance_l1(p.values, q.values, family_weights(w_l1_)));
    }
    if (cfg_.l2 != FeatureMode::Exclude) {
      feats.push_back(distance_l2(p.values, q.values, family_weights(w_l2_)));
    }
    if (cfg_.cos != FeatureMode::Exclude) {
      feats.push_back(distance_cos(p.values, q.values, family_weights(w_cos_)));
    }
    std::vector<double> h = std::move(feats);
    if (hidden_) {
      h = affine(hidden_->weight().tensor(), hidden_->bias().tensor(), h);
      for (double& x : h) x = x > 0.0 ? x : 0.0;
    }
    const std::vector<double> o = affine(out_.weight().tensor(), out_.bias().tensor(), h);
    return 1.0 / (1.0 + std::exp(-o[0]));
  }

  double score(const EcgVector& p, const EcgVector& q) const override { return discriminate(p, q); }

  std::vector<tn::Parameter<T>*> parameters() {
    std::vector<tn::Parameter<T>*> out;
    if (w_l1_) out.push_back(&*w_l1_);
    if (w_l2_) out.push_back(&*w_l2_);
    if (w_cos_) out.push_back(&*w_cos_);
    if (hidden_) hidden_->collect(out);
    out_.collect(out);
    return out;
  }

  std::vector<std::pair<std::string, const tn::Tensor<T>*>> named_tensors() {
    std::vector<std::pair<std::string, const tn::Tensor<T>*>> out;
    for (auto* p : parameters()) out.emplace_back(p->name, &p->tensor());
    return out;
  }

  void load_tensors(const std::map<std::string, tn::Tensor<T>>& blocks) {
    for (auto* p : parameters()) {
      auto it = blocks.find(p->name);
      if (it == blocks.end()) throw tn::CheckpointError("missing block " + p->name);
      if (it->second.shape != p->tensor().shape) throw tn::CheckpointError("shape mismatch for " + p->name);
      p->tensor() = it->second;
    }
  }

  std::vector<tn::Tensor<T>> snapshot() {
    std::vector<tn::Tensor<T>> s;
    for (auto* p : parameters()) s.push_back(p->tensor());
    return s;
  }
  void restore(const std::vector<tn::Tensor<T>>& s) {
    auto params = parameters();
    if (s.size() != params.size()) throw std::invalid_argument("restore: snapshot size mismatch");
    for (size_t i = 0; i < params.size(); ++i) params[i]->tensor() = s[i];
  }

 private:
  // Cached double copies of the family weights for the inference path; kept
  // in sync lazily by comparing against the source tensor.
  std::span<const double> family_weights(const std::optional<tn::Parameter<T>>& w) const {
    if (!w) return {};
    thread_local std::vector<double> scratch;
    const tn::Tensor<T>& t = w->tensor();
    scratch.resize(static_cast<size_t>(t.size()));
    for (int64_t i = 0; i < t.size(); ++i) scratch[static_cast<size_t>(i)] = static_cast<double>(t[i]);
    return scratch;
  }

  static std::vector<double> affine(const tn::Tensor<T>& w, const tn::Tensor<T>& b,
                                    const std::vector<double>& x) {
    const int64_t m = w.dim(0);
    const int64_t n = w.dim(1);
    std::vector<double> y(static_cast<size_t>(m), 0.0);
    for (int64_t r = 0; r < m; ++r) {
      double acc = static_cast<double>(b[r]);
      for (int64_t c = 0; c < n; ++c) acc += static_cast<double>(w[r * n + c]) * x[static_cast<size_t>(c)];
      y[static_cast<size_t>(r)] = acc;
    }
    return y;
  }

  DiscriminatorConfig cfg_;
  std::optional<tn::Parameter<T>> w_l1_, w_l2_, w_cos_;
  std::optional<tn::Dense<T>> hidden_;
  tn::Dense<T> out_;
  int n_features_ = 0;
};

// ---------------------------------------------------------------------------
// Phase-two training (Siamese pairs, BCE)

struct LabeledPair {
  store::ModelInput a, b;
  bool positive = false;
};

class PairSource {
 public:
  virtual ~PairSource() = default;
  virtual LabeledPair next() = 0;
};

enum class FineTune { Freeze, EndToEnd };

struct SiameseTrainOptions {
  int steps = 1000;
  int batch_size = 128;
  FineTune fine_tune = FineTune::EndToEnd;
  double lr = 0.001;
  int validate_every = 100;
  int patience = 10;
  int val_batch = 256;
};

struct SiameseTrainResult {
  std::vector<emb::CurvePoint> train_loss;
  std::vector<emb::CurvePoint> val_loss;
  int best_step = 0;
  double best_val = std::numeric_limits<double>::infinity();
  int steps_run = 0;
  double val_accuracy = 0.0;  // at threshold 0.5, final weights
};

namespace detail {

template <class T>
struct PairBatch {
  tn::Tensor<T> a, b, labels;
};

template <class T, class Model>
PairBatch<T> draw_pairs(Model& model, PairSource& source, int count) {
  std::vector<store::ModelInput> as, bs;
  tn::Tensor<T> labels({count});
  as.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    LabeledPair p = source.next();
    as.push_back(std::move(p.a));
    bs.push_back(std::move(p.b));
    labels[i] = p.positive ? T(1) : T(0);
  }
  return {model.prepare_batch(as), model.prepare_batch(bs), std::move(labels)};
}

template <class T, class Model>
tn::Var<T> siamese_scores(Model& model, const DiscriminatorHead<T>& head, const PairBatch<T>& batch,
                          FineTune mode) {
  if (mode == FineTune::Freeze) {
    tn::Tensor<T> va, vb;
    {
      tn::NoGradGuard no_grad;
      va = model.forward(tn::leaf(batch.a))->value;
      vb = model.forward(tn::leaf(batch.b))->value;
    }
    return head.forward(tn::leaf(std::move(va)), tn::leaf(std::move(vb)));
  }
  return head.forward(model.forward(tn::leaf(batch.a)), model.forward(tn::leaf(batch.b)));
}

}  // namespace detail

// Model: anything with the Embedder's training surface (see train_metric).
template <class T, class Model = emb::Embedder<T>>
SiameseTrainResult train_siamese(Model& model, DiscriminatorHead<T>& head, PairSource& train_source,
                                 PairSource& val_source, const SiameseTrainOptions& opts) {
  SiameseTrainResult result;
  std::vector<tn::Parameter<T>*> params = head.parameters();
  if (opts.fine_tune == FineTune::EndToEnd) {
    for (auto* p : model.parameters()) params.push_back(p);
  }
  tn::Adam<T> adam(tn::AdamConfig<T>{static_cast<T>(opts.lr)});

  const detail::PairBatch<T> val = detail::draw_pairs<T>(model, val_source, opts.val_batch);
  auto eval_val = [&]() {
    tn::NoGradGuard no_grad;
    auto scores = detail::siamese_scores(model, head, val, opts.fine_tune);
    return static_cast<double>(tn::bce_loss(scores, val.labels)->value[0]);
  };

  result.best_val = eval_val();
  result.val_loss.push_back({0, result.best_val});
  std::vector<tn::Tensor<T>> best_head = head.snapshot();
  std::vector<tn::Tensor<T>> best_model;
  if (opts.fine_tune == FineTune::EndToEnd) best_model = model.snapshot();

  int rounds_since_best = 0;
  for (int step = 1; step <= opts.steps; ++step) {
    const detail::PairBatch<T> batch = detail::draw_pairs<T>(model, train_source, opts.batch_size);
    auto scores = detail::siamese_scores(model, head, batch, opts.fine_tune);
    auto loss = tn::bce_loss(scores, batch.labels);
    tn::zero_grads(params);
    tn::backward(loss);
    adam.step(params);
    result.train_loss.push_back({step, static_cast<double>(loss->value[0])});
    result.steps_run = step;

    if (step % opts.validate_every == 0) {
      const double v = eval_val();
      result.val_loss.push_back({step, v});
      if (v < result.best_val) {
        result.best_val = v;
        result.best_step = step;
        best_head = head.snapshot();
        if (opts.fine_tune == FineTune::EndToEnd) best_model = model.snapshot();
        rounds_since_best = 0;
      } else if (++rounds_since_best >= opts.patience) {
        break;
      }
    }
  }
  head.restore(best_head);
  if (opts.fine_tune == FineTune::EndToEnd) model.restore(best_model);

  {
    tn::NoGradGuard no_grad;
    auto scores = detail::siamese_scores(model, head, val, opts.fine_tune);
    int correct = 0;
    for (int64_t i = 0; i < scores->value.size(); ++i) {
      const bool pred = scores->value[i] >= T(0.5);
      if (pred == (val.labels[i] > T(0.5))) ++correct;
    }
    result.val_accuracy = static_cast<double>(correct) / static_cast<double>(scores->value.size());
  }
  return result;
}

}  // namespace ecgid::disc
