#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ecgid/checkpoint.hpp"
#include "ecgid/ecgvec.hpp"
#include "ecgid/nn.hpp"
#include "ecgid/preprocess.hpp"

namespace ecgid::emb {

enum class Arch { Cdil, Resnet1d };

struct EmbedderConfig {
  Arch arch = Arch::Cdil;
  int embedding_dim = 256;  // one of {128, 256, 384, 512}

  // CDIL: channel width of the dilated blocks and of the expanding block.
  int cdil_width = 32;
  int cdil_out_width = 256;

  // 1D-RN: per-stage channel widths and perceptron hidden sizes.
  std::array<int, 4> resnet_channels = {128, 196, 256, 320};
  int resnet_hidden1 = 1024;
  int resnet_hidden2 = 512;

  pp::PreprocessConfig preprocess;
  uint64_t init_seed = 1;
};

inline EmbedderConfig cdil_paper() { return EmbedderConfig{}; }

inline EmbedderConfig cdil_desk() {
  EmbedderConfig cfg;
  cfg.cdil_width = 8;
  cfg.cdil_out_width = 32;
  cfg.embedding_dim = 128;
  return cfg;
}

inline EmbedderConfig resnet_paper() {
  EmbedderConfig cfg;
  cfg.arch = Arch::Resnet1d;
  return cfg;
}

inline EmbedderConfig resnet_desk() {
  EmbedderConfig cfg;
  cfg.arch = Arch::Resnet1d;
  cfg.resnet_channels = {16, 24, 32, 40};
  cfg.resnet_hidden1 = 128;
  cfg.resnet_hidden2 = 128;
  cfg.embedding_dim = 128;
  return cfg;
}

inline void validate(const EmbedderConfig& cfg) {
  const int d = cfg.embedding_dim;
  if (d != 128 && d != 256 && d != 384 && d != 512) {
    throw std::invalid_argument("embedding_dim must be one of 128, 256, 384, 512");
  }
  if (cfg.cdil_width < 1 || cfg.cdil_out_width < 1) throw std::invalid_argument("cdil widths must be positive");
  for (int c : cfg.resnet_channels) {
    if (c < 1) throw std::invalid_argument("resnet channel widths must be positive");
  }
}

// Embedding model: preprocessing plus one of the two convolutional stacks,
// mapping a (12, 4096) recording to a D-dimensional ECG vector.
//
// CDIL stack: initial conv to `cdil_width` channels, 7 circular-dilated
// residual base blocks with dilations 1,2,4,...,64, a deformable block
// (per-position 1x1 channel mixing in front of the dilated conv), another
// base block, a deformable block expanding to `cdil_out_width`, mean across
// time, dense to D. Kernel size 3 everywhere, stride 1, circular padding, so
// every intermediate sequence keeps length 4096.
//
// 1D-RN stack: four residual stages (kernel 7, stride 4, pre-activation,
// 1x1 strided projection on the skip), flatten, 3-layer perceptron to D.
template <class T>
class Embedder {
 public:
  explicit Embedder(const EmbedderConfig& cfg) : cfg_(cfg) {
    validate(cfg);
    std::mt19937_64 rng(cfg.init_seed);
    if (cfg.arch == Arch::Cdil) build_cdil(rng);
    else build_resnet(rng);
  }

  Embedder(const Embedder&) = delete;
  Embedder& operator=(const Embedder&) = delete;

  const EmbedderConfig& config() const { return cfg_; }
  int embedding_dim() const { return cfg_.embedding_dim; }

  // x: (B, 12, 4096), already preprocessed.
  tn::Var<T> forward(const tn::Var<T>& x) const { return forward_impl(x, nullptr); }

  // Feature map before the time reduction: (B, C, 4096) for CDIL,
  // (B, C, 16) for 1D-RN.
  tn::Var<T> forward_features(const tn::Var<T>& x) const { return features(x); }

  // Named output shape of every block for one forward pass.
  std::vector<std::pair<std::string, std::vector<int64_t>>> trace_shapes(const tn::Tensor<T>& x) const {
    tn::NoGradGuard no_grad;
    std::vector<std::pair<std::string, std::vector<int64_t>>> out;
    Recorder rec = [&](const std::string& name, const std::vector<int64_t>& shape) {
      out.emplace_back(name, shape);
    };
    auto y = forward_impl(tn::leaf(x), &rec);
    out.emplace_back("output", y->value.shape);
    return out;
  }

  EcgVector embed(const store::ModelInput& input) const {
    if (input.values.rows != store::kModelLeads || input.values.cols != store::kModelSamples) {
      throw std::invalid_argument("embed: input must be (12, 4096)");
    }
    tn::NoGradGuard no_grad;
    const tn::Tensor<T> batch = prepare_batch({input});
    const tn::Var<T> out = forward(tn::leaf(batch));
    EcgVector v;
    v.values.assign(out->value.v.begin(), out->value.v.end());
    return v;
  }

  // Applies the model's preprocessing and packs inputs into (B, 12, 4096).
  tn::Tensor<T> prepare_batch(const std::vector<store::ModelInput>& inputs) const {
    const int64_t b = static_cast<int64_t>(inputs.size());
    tn::Tensor<T> t({b, store::kModelLeads, store::kModelSamples});
    for (int64_t i = 0; i < b; ++i) {
      const store::ModelInput prepped = pp::preprocess(inputs[static_cast<size_t>(i)], cfg_.preprocess);
      T* dst = t.data() + i * store::kModelLeads * store::kModelSamples;
      for (size_t j = 0; j < prepped.values.data.size(); ++j) dst[j] = static_cast<T>(prepped.values.data[j]);
    }
    return t;
  }

  std::vector<tn::Parameter<T>*> parameters() {
    std::vector<tn::Parameter<T>*> out;
    if (initial_) initial_->collect(out);
    for (auto& blk : blocks_) {
      if (blk.mix) blk.mix->collect(out);
      blk.conv.collect(out);
    }
    for (auto& st : stages_) {
      st.conv1.collect(out);
      st.conv2.collect(out);
      st.proj.collect(out);
    }
    for (auto& d : mlp_) d.collect(out);
    out_.collect(out);
    return out;
  }

  int64_t parameter_count() {
    int64_t n = 0;
    for (const auto* p : parameters()) n += p->tensor().size();
    return n;
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
  struct CdilBlock {
    std::optional<tn::Conv1d<T>> mix;  // 1x1 mixing conv, deformable blocks only
    tn::Conv1d<T> conv;
    bool residual = true;
  };
  struct ResStage {
    tn::Conv1d<T> conv1, conv2, proj;
    bool pre_relu = true;
  };

  void build_cdil(std::mt19937_64& rng) {
    const int w = cfg_.cdil_width;
    const int ow = cfg_.cdil_out_width;
    tn::Conv1dSpec circ{1, 1, tn::PadMode::Circular, 0, 0};
    initial_.emplace("cdil.initial", store::kModelLeads, w, 3, circ, rng);
    int dilation = 1;
    auto circular = [&](int d) { return tn::Conv1dSpec{1, d, tn::PadMode::Circular, 0, 0}; };
    auto one_by_one = [&]() { return tn::Conv1dSpec{1, 1, tn::PadMode::Zeros, 0, 0}; };
    for (int i = 0; i < 7; ++i) {
      blocks_.push_back(CdilBlock{std::nullopt,
                                  tn::Conv1d<T>("cdil.base" + std::to_string(i), w, w, 3, circular(dilation), rng),
                                  true});
      dilation *= 2;
    }
    blocks_.push_back(CdilBlock{tn::Conv1d<T>("cdil.deform0.mix", w, w, 1, one_by_one(), rng),
                                tn::Conv1d<T>("cdil.deform0.conv", w, w, 3, circular(dilation), rng), true});
    dilation *= 2;
    blocks_.push_back(
        CdilBlock{std::nullopt, tn::Conv1d<T>("cdil.base7", w, w, 3, circular(dilation), rng), true});
    dilation *= 2;
    blocks_.push_back(CdilBlock{tn::Conv1d<T>("cdil.deform1.mix", w, w, 1, one_by_one(), rng),
                                tn::Conv1d<T>("cdil.deform1.conv", w, ow, 3, circular(dilation), rng), false});
    out_ = tn::Dense<T>("cdil.out", ow, cfg_.embedding_dim, rng);
  }

  void build_resnet(std::mt19937_64& rng) {
    int cin = store::kModelLeads;
    const tn::Conv1dSpec down{4, 1, tn::PadMode::Zeros, 3, 3};
    const tn::Conv1dSpec same{1, 1, tn::PadMode::Zeros, 3, 3};
    const tn::Conv1dSpec proj{4, 1, tn::PadMode::Zeros, 0, 0};
    for (int s = 0; s < 4; ++s) {
      const int cout = cfg_.resnet_channels[static_cast<size_t>(s)];
      const std::string base = "resnet.stage" + std::to_string(s);
      stages_.push_back(ResStage{tn::Conv1d<T>(base + ".conv1", cin, cout, 7, down, rng),
                                 tn::Conv1d<T>(base + ".conv2", cout, cout, 7, same, rng),
                                 tn::Conv1d<T>(base + ".proj", cin, cout, 1, proj, rng), s != 0});
      cin = cout;
    }
    const int64_t flat = static_cast<int64_t>(cfg_.resnet_channels[3]) * 16;
    mlp_.emplace_back("resnet.mlp0", flat, cfg_.resnet_hidden1, rng);
    mlp_.emplace_back("resnet.mlp1", cfg_.resnet_hidden1, cfg_.resnet_hidden2, rng);
    out_ = tn::Dense<T>("resnet.mlp2", cfg_.resnet_hidden2, cfg_.embedding_dim, rng);
  }

  using Recorder = std::function<void(const std::string&, const std::vector<int64_t>&)>;

  tn::Var<T> forward_impl(const tn::Var<T>& x, const Recorder* rec) const {
    tn::Var<T> h = features(x, rec);
    if (cfg_.arch == Arch::Cdil) {
      h = tn::mean_over_time(h);
      if (rec) (*rec)("mean_over_time", h->value.shape);
    } else {
      h = flatten_features(h);
      if (rec) (*rec)("flatten", h->value.shape);
      for (size_t i = 0; i < mlp_.size(); ++i) {
        h = tn::relu(mlp_[i](h));
        if (rec) (*rec)("mlp" + std::to_string(i), h->value.shape);
      }
    }
    return out_(h);
  }

  tn::Var<T> features(const tn::Var<T>& x, const Recorder* rec = nullptr) const {
    if (cfg_.arch == Arch::Cdil) {
      tn::Var<T> h = tn::relu((*initial_)(x));
      if (rec) (*rec)("initial", h->value.shape);
      for (size_t i = 0; i < blocks_.size(); ++i) {
        const CdilBlock& blk = blocks_[i];
        tn::Var<T> t = blk.mix ? (*blk.mix)(h) : h;
        t = blk.conv(t);
        if (blk.residual) t = tn::residual_add(t, h);
        h = tn::relu(t);
        if (rec) (*rec)("block" + std::to_string(i), h->value.shape);
      }
      return h;
    }
    tn::Var<T> h = x;
    for (size_t s = 0; s < stages_.size(); ++s) {
      const ResStage& st = stages_[s];
      const tn::Var<T> in = st.pre_relu ? tn::relu(h) : h;
      const tn::Var<T> main = st.conv2(tn::relu(st.conv1(in)));
      h = tn::residual_add(main, st.proj(in));
      if (rec) (*rec)("stage" + std::to_string(s), h->value.shape);
    }
    return h;
  }

  tn::Var<T> flatten_features(const tn::Var<T>& h) const {
    const auto& s = h->value.shape;
    return tn::reshape(h, {s[0], s[1] * s[2]});
  }

  EmbedderConfig cfg_;
  std::optional<tn::Conv1d<T>> initial_;
  std::vector<CdilBlock> blocks_;
  std::vector<ResStage> stages_;
  std::vector<tn::Dense<T>> mlp_;
  tn::Dense<T> out_;
};

// ---------------------------------------------------------------------------
// Phase-one training (metric learning on triplets)

struct Triplet {
  store::ModelInput anchor, positive, negative;
};

class TripletSource {
 public:
  virtual ~TripletSource() = default;
  virtual Triplet next() = 0;
};

enum class MetricLoss { Triplet, Circle };

struct MetricTrainOptions {
  int steps = 1000;
  int batch_size = 128;
  MetricLoss loss = MetricLoss::Triplet;
  double triplet_margin = 1.0;
  double circle_gamma = 80.0;
  double circle_m = 0.4;
  double lr = 0.001;
  int validate_every = 100;
  int patience = 10;  // validation rounds without improvement
  int val_batch = 128;
};

struct CurvePoint {
  int step;
  double value;
};

struct MetricTrainResult {
  std::vector<CurvePoint> train_loss;
  std::vector<CurvePoint> val_loss;  // includes step 0
  int best_step = 0;
  double best_val = std::numeric_limits<double>::infinity();
  int steps_run = 0;
};

namespace detail {

template <class T>
tn::Var<T> metric_loss(const tn::Var<T>& a, const tn::Var<T>& p, const tn::Var<T>& n,
                       const MetricTrainOptions& opts) {
  if (opts.loss == MetricLoss::Triplet) return tn::triplet_loss(a, p, n, static_cast<T>(opts.triplet_margin));
  return tn::circle_loss(a, p, n, static_cast<T>(opts.circle_gamma), static_cast<T>(opts.circle_m));
}

template <class T>
struct TripletBatch {
  tn::Tensor<T> a, p, n;
};

template <class T, class Model>
TripletBatch<T> draw_batch(Model& model, TripletSource& source, int count) {
  std::vector<store::ModelInput> as, ps, ns;
  as.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    Triplet t = source.next();
    as.push_back(std::move(t.anchor));
    ps.push_back(std::move(t.positive));
    ns.push_back(std::move(t.negative));
  }
  return {model.prepare_batch(as), model.prepare_batch(ps), model.prepare_batch(ns)};
}

template <class T, class Model>
double eval_metric_loss(Model& model, const TripletBatch<T>& b, const MetricTrainOptions& opts) {
  tn::NoGradGuard no_grad;
  auto loss = metric_loss(model.forward(tn::leaf(b.a)), model.forward(tn::leaf(b.p)),
                          model.forward(tn::leaf(b.n)), opts);
  return static_cast<double>(loss->value[0]);
}

}  // namespace detail

// Model is any type with the Embedder's training surface: prepare_batch,
// forward, parameters, snapshot, restore.
template <class T, class Model = Embedder<T>>
MetricTrainResult train_metric(Model& model, TripletSource& train_source, TripletSource& val_source,
                               const MetricTrainOptions& opts) {
  MetricTrainResult result;
  auto params = model.parameters();
  tn::Adam<T> adam(tn::AdamConfig<T>{static_cast<T>(opts.lr)});

  const detail::TripletBatch<T> val = detail::draw_batch<T>(model, val_source, opts.val_batch);
  result.best_val = detail::eval_metric_loss<T>(model, val, opts);
  result.val_loss.push_back({0, result.best_val});
  result.best_step = 0;
  std::vector<tn::Tensor<T>> best = model.snapshot();

  int rounds_since_best = 0;
  for (int step = 1; step <= opts.steps; ++step) {
    const detail::TripletBatch<T> batch = detail::draw_batch<T>(model, train_source, opts.batch_size);
    auto loss = detail::metric_loss(model.forward(tn::leaf(batch.a)), model.forward(tn::leaf(batch.p)),
                                    model.forward(tn::leaf(batch.n)), opts);
    tn::zero_grads(params);
    tn::backward(loss);
    adam.step(params);
    result.train_loss.push_back({step, static_cast<double>(loss->value[0])});
    result.steps_run = step;

    if (step % opts.validate_every == 0) {
      const double v = detail::eval_metric_loss<T>(model, val, opts);
      result.val_loss.push_back({step, v});
      if (v < result.best_val) {
        result.best_val = v;
        result.best_step = step;
        best = model.snapshot();
        rounds_since_best = 0;
      } else if (++rounds_since_best >= opts.patience) {
        break;
      }
    }
  }
  model.restore(best);
  return result;
}

}  // namespace ecgid::emb
