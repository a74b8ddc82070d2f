#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "ecgid/checkpoint.hpp"
#include "ecgid/nn.hpp"
#include "support/testutil.hpp"

using namespace ecgid;
using tn::Tensor;
using tn::Var;
using testutil::random_tensor;

namespace {

// Scalar re-implementations of the loss formulas, used as oracles.
double oracle_triplet(const std::vector<double>& a, const std::vector<double>& p,
                      const std::vector<double>& n, double margin) {
  double dp = 0.0, dn = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dp += (a[i] - p[i]) * (a[i] - p[i]);
    dn += (a[i] - n[i]) * (a[i] - n[i]);
  }
  return std::max(0.0, std::sqrt(dp) - std::sqrt(dn) + margin);
}

double oracle_cos(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

double oracle_circle(const std::vector<double>& a, const std::vector<double>& p,
                     const std::vector<double>& n, double gamma, double m) {
  const double sp = oracle_cos(a, p);
  const double sn = oracle_cos(a, n);
  const double ap = std::max(0.0, 1.0 + m - sp);
  const double an = std::max(0.0, sn + m);
  return std::log(1.0 + std::exp(gamma * an * (sn - m)) * std::exp(-gamma * ap * (sp - (1.0 - m))));
}

double oracle_bce(double p, double y) {
  p = std::min(std::max(p, 1e-7), 1.0 - 1e-7);
  return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

std::vector<double> to_vec(const Tensor<double>& t) { return t.v; }

}  // namespace

TEST_CASE("conv1d: identity kernel is the identity") {
  std::mt19937_64 rng(1);
  auto x = tn::leaf(random_tensor<double>({3, 17}, rng));
  Tensor<double> w({1, 1, 1}, {1.0});
  // single channel slice
  auto x1 = tn::leaf(random_tensor<double>({1, 17}, rng));
  auto y = tn::conv1d(x1, tn::leaf(w), tn::leaf(Tensor<double>{}), {});
  REQUIRE(y->value.shape == x1->value.shape);
  for (int64_t i = 0; i < y->value.size(); ++i) CHECK(y->value[i] == doctest::Approx(x1->value[i]));
}

TEST_CASE("conv1d: circular K=2 on [1,2,3,4] matches the nested-loop oracle") {
  Tensor<double> x({1, 4}, {1, 2, 3, 4});
  Tensor<double> w({1, 1, 2}, {1, 1});
  tn::Conv1dSpec spec;
  spec.pad = tn::PadMode::Circular;
  auto y = tn::conv1d(tn::leaf(x), tn::leaf(w), tn::leaf(Tensor<double>{}), spec);
  const Tensor<double> ref = testutil::reference_conv1d(x, w, Tensor<double>{}, spec);
  REQUIRE(y->value.size() == 4);
  for (int64_t i = 0; i < 4; ++i) CHECK(y->value[i] == doctest::Approx(ref[i]));
  // frozen from the oracle: pad splits (K-1)*d floor/ceil, so taps are x[j], x[j+1 mod L]
  CHECK(y->value[0] == doctest::Approx(3));
  CHECK(y->value[1] == doctest::Approx(5));
  CHECK(y->value[2] == doctest::Approx(7));
  CHECK(y->value[3] == doctest::Approx(5));
}

TEST_CASE("conv1d: GEMM path equals the nested-loop oracle on random configurations") {
  std::mt19937_64 rng(7);
  struct Case {
    int64_t b, cin, len, cout, k;
    tn::Conv1dSpec spec;
  };
  std::vector<Case> cases = {
      {2, 3, 19, 4, 3, {1, 1, tn::PadMode::Zeros, 1, 1}},
      {1, 2, 16, 3, 3, {1, 2, tn::PadMode::Circular, 0, 0}},
      {3, 4, 24, 2, 5, {2, 1, tn::PadMode::Zeros, 2, 2}},
      {2, 1, 32, 5, 3, {1, 4, tn::PadMode::Circular, 0, 0}},
      {1, 3, 21, 2, 7, {3, 1, tn::PadMode::Zeros, 3, 3}},
      {2, 2, 16, 2, 2, {1, 3, tn::PadMode::Circular, 0, 0}},
      {1, 5, 40, 3, 4, {4, 2, tn::PadMode::Zeros, 3, 3}},
  };
  for (const auto& c : cases) {
    CAPTURE(c.len);
    auto x = random_tensor<double>({c.b, c.cin, c.len}, rng);
    auto w = random_tensor<double>({c.cout, c.cin, c.k}, rng);
    auto b = random_tensor<double>({c.cout}, rng);
    auto y = tn::conv1d(tn::leaf(x), tn::leaf(w), tn::leaf(b), c.spec);
    const Tensor<double> ref = testutil::reference_conv1d(x, w, b, c.spec);
    REQUIRE(y->value.shape == ref.shape);
    for (int64_t i = 0; i < ref.size(); ++i) CHECK(y->value[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv1d: circular stride-1 commutes with input rotation") {
  std::mt19937_64 rng(11);
  auto x = random_tensor<double>({2, 24}, rng);
  auto w = random_tensor<double>({3, 2, 3}, rng);
  auto b = random_tensor<double>({3}, rng);
  tn::Conv1dSpec spec;
  spec.pad = tn::PadMode::Circular;
  spec.dilation = 2;
  const int64_t len = 24, shift = 7;
  Tensor<double> xr({2, len});
  for (int64_t c = 0; c < 2; ++c) {
    for (int64_t t = 0; t < len; ++t) xr[c * len + (t + shift) % len] = x[c * len + t];
  }
  auto y = tn::conv1d(tn::leaf(x), tn::leaf(w), tn::leaf(b), spec);
  auto yr = tn::conv1d(tn::leaf(xr), tn::leaf(w), tn::leaf(b), spec);
  for (int64_t c = 0; c < 3; ++c) {
    for (int64_t t = 0; t < len; ++t) {
      CHECK(yr->value[c * len + (t + shift) % len] == doctest::Approx(y->value[c * len + t]).epsilon(1e-12));
    }
  }
}

TEST_CASE("conv1d: shape errors") {
  std::mt19937_64 rng(2);
  auto x = tn::leaf(random_tensor<double>({3, 10}, rng));
  auto w = tn::leaf(random_tensor<double>({2, 4, 3}, rng));  // wrong Cin
  CHECK_THROWS_AS(tn::conv1d(x, w, tn::leaf(Tensor<double>{}), {}), std::invalid_argument);
  auto w2 = tn::leaf(random_tensor<double>({2, 3, 12}, rng));  // kernel longer than input
  CHECK_THROWS_AS(tn::conv1d(x, w2, tn::leaf(Tensor<double>{}), {}), std::invalid_argument);
}

TEST_CASE("conv1d and dense gradients match finite differences") {
  std::mt19937_64 rng(13);
  for (int rep = 0; rep < 5; ++rep) {
    const int64_t cin = 1 + static_cast<int64_t>(rng() % 3);
    const int64_t cout = 1 + static_cast<int64_t>(rng() % 3);
    const int64_t len = 10 + static_cast<int64_t>(rng() % 8);
    const int64_t k = 2 + static_cast<int64_t>(rng() % 3);
    tn::Conv1dSpec spec;
    spec.pad = (rep % 2 == 0) ? tn::PadMode::Circular : tn::PadMode::Zeros;
    if (spec.pad == tn::PadMode::Zeros) spec.pad_left = spec.pad_right = static_cast<int>(k) - 1;
    spec.dilation = 1 + rep % 3;
    spec.stride = (rep % 2) + 1;
    if (spec.pad == tn::PadMode::Circular) spec.stride = 1;
    auto x = tn::leaf(random_tensor<double>({2, cin, len}, rng), true);
    auto w = tn::leaf(random_tensor<double>({cout, cin, k}, rng), true);
    auto b = tn::leaf(random_tensor<double>({cout}, rng), true);
    auto build = [&] { return tn::mean_all(tn::mul(tn::conv1d(x, w, b, spec), tn::conv1d(x, w, b, spec))); };
    const auto r = testutil::check_gradients<double>({x, w, b}, build);
    CAPTURE(r.worst_rel);
    CHECK(r.ok);
  }
  for (int rep = 0; rep < 5; ++rep) {
    const int64_t n = 2 + static_cast<int64_t>(rng() % 5);
    const int64_t m = 1 + static_cast<int64_t>(rng() % 4);
    auto x = tn::leaf(random_tensor<double>({3, n}, rng), true);
    auto w = tn::leaf(random_tensor<double>({m, n}, rng), true);
    auto b = tn::leaf(random_tensor<double>({m}, rng), true);
    auto build = [&] { return tn::mean_all(tn::sigmoid(tn::dense(x, w, b))); };
    const auto r = testutil::check_gradients<double>({x, w, b}, build);
    CHECK(r.ok);
  }
}

TEST_CASE("dense: frozen examples") {
  Tensor<double> eye({2, 2}, {1, 0, 0, 1});
  Tensor<double> x({2}, {3.5, -1.25});
  auto y = tn::dense(tn::leaf(x), tn::leaf(eye), tn::leaf(Tensor<double>({2}, {0, 0})));
  CHECK(y->value[0] == doctest::Approx(3.5));
  CHECK(y->value[1] == doctest::Approx(-1.25));

  Tensor<double> w({2, 2}, {1, 2, 3, 4});
  Tensor<double> ones({2}, {1, 1});
  auto y2 = tn::dense(tn::leaf(ones), tn::leaf(w), tn::leaf(Tensor<double>({2}, {0, 0})));
  CHECK(y2->value[0] == doctest::Approx(3));
  CHECK(y2->value[1] == doctest::Approx(7));

  CHECK_THROWS_AS(tn::dense(tn::leaf(Tensor<double>({3}, {1, 2, 3})), tn::leaf(w), tn::leaf(ones)),
                  std::invalid_argument);
}

TEST_CASE("elementwise ops and reductions: values and gradients") {
  CHECK(tn::sigmoid(tn::leaf(Tensor<double>::scalar(0)))->value[0] == doctest::Approx(0.5));

  // mean across time of constant rows returns those constants
  Tensor<double> c({2, 3, 4});
  for (int64_t ch = 0; ch < 6; ++ch) {
    for (int64_t t = 0; t < 4; ++t) c[ch * 4 + t] = static_cast<double>(ch) + 1.0;
  }
  auto m = tn::mean_over_time(tn::leaf(c));
  REQUIRE(m->value.shape == std::vector<int64_t>{2, 3});
  for (int64_t ch = 0; ch < 6; ++ch) CHECK(m->value[ch] == doctest::Approx(static_cast<double>(ch) + 1.0));

  std::mt19937_64 rng(17);
  for (int rep = 0; rep < 5; ++rep) {
    auto a = tn::leaf(random_tensor<double>({3, 4}, rng, 0.3, 1.7), true);  // positive: log/sqrt safe
    auto b = tn::leaf(random_tensor<double>({3, 4}, rng, 0.3, 1.7), true);
    auto w = tn::leaf(random_tensor<double>({4}, rng), true);
    auto build = [&] {
      auto t1 = tn::mul(tn::relu(tn::sub(a, b)), tn::sigmoid(a));
      auto t2 = tn::div(tn::exp_(tn::neg(a)), tn::add_scalar(tn::sqrt_(b), 1.0));
      auto t3 = tn::log_(tn::add_scalar(tn::abs_(tn::sub(a, b)), 0.5));
      auto t4 = tn::broadcast_mul_last(tn::add(t1, t2), w);
      const std::vector<Var<double>> feats{tn::sum_last(t4), tn::mean_last(t3),
                                           tn::sum_last(tn::clamp(a, 0.4, 1.5))};
      auto t5 = tn::stack_last(feats);
      return tn::mean_all(tn::mul(t5, t5));
    };
    const auto r = testutil::check_gradients<double>({a, b, w}, build);
    CAPTURE(r.worst_rel);
    CHECK(r.ok);
  }
}

TEST_CASE("residual_add rejects shape mismatches") {
  std::mt19937_64 rng(3);
  auto a = tn::leaf(random_tensor<double>({2, 3}, rng));
  auto b = tn::leaf(random_tensor<double>({3, 2}, rng));
  CHECK_THROWS_AS(tn::residual_add(a, b), std::invalid_argument);
}

TEST_CASE("triplet loss: frozen cases, oracle equality, nonnegativity, gradients") {
  std::mt19937_64 rng(23);
  const int64_t d = 6;

  // a == p and d(a,n) >= margin -> 0
  auto a0 = random_tensor<double>({1, d}, rng);
  Tensor<double> far = a0;
  far[0] += 10.0;
  auto l0 = tn::triplet_loss(tn::leaf(a0), tn::leaf(a0), tn::leaf(far), 1.0);
  CHECK(l0->value[0] == doctest::Approx(0.0));

  // a == p == n -> margin
  auto l1 = tn::triplet_loss(tn::leaf(a0), tn::leaf(a0), tn::leaf(a0), 1.0);
  CHECK(l1->value[0] == doctest::Approx(1.0));

  for (int rep = 0; rep < 20; ++rep) {
    auto a = random_tensor<double>({1, d}, rng);
    auto p = random_tensor<double>({1, d}, rng);
    auto n = random_tensor<double>({1, d}, rng);
    const double got = tn::triplet_loss(tn::leaf(a), tn::leaf(p), tn::leaf(n), 1.0)->value[0];
    CHECK(got == doctest::Approx(oracle_triplet(to_vec(a), to_vec(p), to_vec(n), 1.0)).epsilon(1e-12));
    CHECK(got >= 0.0);
  }

  for (int rep = 0; rep < 5; ++rep) {
    auto a = tn::leaf(random_tensor<double>({3, d}, rng), true);
    auto p = tn::leaf(random_tensor<double>({3, d}, rng), true);
    auto n = tn::leaf(random_tensor<double>({3, d}, rng), true);
    auto build = [&] { return tn::triplet_loss(a, p, n, 1.0); };
    CHECK(testutil::check_gradients<double>({a, p, n}, build).ok);
  }
}

TEST_CASE("circle loss: saturated case, gamma->0 limit, oracle equality, gradients") {
  const int64_t d = 5;
  // sp = 1 (p == a), sn = -1 (n == -a): formula evaluates to ~2.75e-6, not 0
  Tensor<double> a({1, d}, {0.3, -1.2, 0.5, 2.0, -0.7});
  Tensor<double> neg_a = a;
  for (int64_t i = 0; i < d; ++i) neg_a[i] = -a[i];
  const double sat = tn::circle_loss(tn::leaf(a), tn::leaf(a), tn::leaf(neg_a), 80.0, 0.4)->value[0];
  CHECK(sat == doctest::Approx(oracle_circle(to_vec(a), to_vec(a), to_vec(neg_a), 80.0, 0.4)).epsilon(1e-9));
  CHECK(sat < 1e-5);
  CHECK(sat > 0.0);

  std::mt19937_64 rng(29);
  auto p = random_tensor<double>({1, d}, rng);
  auto n = random_tensor<double>({1, d}, rng);
  const double at_zero = tn::circle_loss(tn::leaf(a), tn::leaf(p), tn::leaf(n), 0.0, 0.4)->value[0];
  CHECK(at_zero == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  for (int rep = 0; rep < 20; ++rep) {
    auto x = random_tensor<double>({1, d}, rng);
    auto y = random_tensor<double>({1, d}, rng);
    auto z = random_tensor<double>({1, d}, rng);
    const double got = tn::circle_loss(tn::leaf(x), tn::leaf(y), tn::leaf(z), 80.0, 0.4)->value[0];
    CHECK(got == doctest::Approx(oracle_circle(to_vec(x), to_vec(y), to_vec(z), 80.0, 0.4)).epsilon(1e-9));
    CHECK(got >= 0.0);
  }

  for (int rep = 0; rep < 5; ++rep) {
    auto x = tn::leaf(random_tensor<double>({2, d}, rng), true);
    auto y = tn::leaf(random_tensor<double>({2, d}, rng), true);
    auto z = tn::leaf(random_tensor<double>({2, d}, rng), true);
    // gamma 4: keeps the exponentials in a well-conditioned range for FD
    auto build = [&] { return tn::circle_loss(x, y, z, 4.0, 0.4); };
    const auto r = testutil::check_gradients<double>({x, y, z}, build);
    CAPTURE(r.worst_rel);
    CHECK(r.ok);
  }
}

TEST_CASE("bce loss: frozen values, oracle equality, gradients") {
  Tensor<double> half({1}, {0.5});
  Tensor<double> one_label({1}, {1.0});
  CHECK(tn::bce_loss(tn::leaf(half), one_label)->value[0] == doctest::Approx(std::log(2.0)));
  Tensor<double> zero_label({1}, {0.0});
  CHECK(tn::bce_loss(tn::leaf(half), zero_label)->value[0] == doctest::Approx(std::log(2.0)));

  Tensor<double> near_one({1}, {1.0 - 1e-9});
  CHECK(tn::bce_loss(tn::leaf(near_one), one_label)->value[0] < 1e-6);

  std::mt19937_64 rng(31);
  for (int rep = 0; rep < 20; ++rep) {
    std::uniform_real_distribution<double> up(0.01, 0.99);
    const double p = up(rng);
    const double y = (rng() & 1) ? 1.0 : 0.0;
    const double got = tn::bce_loss(tn::leaf(Tensor<double>({1}, {p})), Tensor<double>({1}, {y}))->value[0];
    CHECK(got == doctest::Approx(oracle_bce(p, y)).epsilon(1e-12));
    CHECK(got >= 0.0);
  }

  for (int rep = 0; rep < 5; ++rep) {
    auto logits = tn::leaf(random_tensor<double>({6}, rng), true);
    Tensor<double> labels({6});
    for (int64_t i = 0; i < 6; ++i) labels[i] = (rng() & 1) ? 1.0 : 0.0;
    auto build = [&] { return tn::bce_loss(tn::sigmoid(logits), labels); };
    CHECK(testutil::check_gradients<double>({logits}, build).ok);
  }
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  tn::Parameter<double> p("p", Tensor<double>({3}, {1.0, -2.0, 0.5}));
  const Tensor<double> before = p.tensor();
  tn::Adam<double> adam;
  for (int i = 0; i < 10; ++i) adam.step({&p});  // grad buffer never written
  CHECK(p.tensor().v == before.v);
}

TEST_CASE("adam: first-step magnitude is about lr") {
  tn::Parameter<double> p("p", Tensor<double>({1}, {0.7}));
  p.node->grad = Tensor<double>({1}, {0.003});
  tn::Adam<double> adam;  // lr 0.001
  adam.step({&p});
  CHECK(p.tensor()[0] == doctest::Approx(0.7 - 0.001).epsilon(1e-4));

  tn::Parameter<double> q("q", Tensor<double>({1}, {0.7}));
  q.node->grad = Tensor<double>({1}, {-5.0});
  tn::Adam<double> adam2;
  adam2.step({&q});
  CHECK(q.tensor()[0] == doctest::Approx(0.7 + 0.001).epsilon(1e-4));
}

TEST_CASE("adam: 100 steps minimize a convex quadratic") {
  // f(p) = (p - 1.05)^2 from p = 1.0
  tn::Parameter<double> p("p", Tensor<double>({1}, {1.0}));
  const double target = 1.05;
  tn::Adam<double> adam;
  for (int i = 0; i < 100; ++i) {
    tn::zero_grads<double>({&p});
    auto diff = tn::add_scalar(p.node, -target);
    auto loss = tn::sum_all(tn::mul(diff, diff));
    tn::backward(loss);
    adam.step({&p});
  }
  CHECK(std::abs(p.tensor()[0] - target) < 1e-2);
}

TEST_CASE("forward passes are deterministic for identical inputs and weights") {
  std::mt19937_64 rng(41);
  auto x = random_tensor<double>({2, 3, 20}, rng);
  auto w = random_tensor<double>({4, 3, 3}, rng);
  auto b = random_tensor<double>({4}, rng);
  tn::Conv1dSpec spec;
  spec.pad = tn::PadMode::Circular;
  auto y1 = tn::conv1d(tn::leaf(x), tn::leaf(w), tn::leaf(b), spec);
  auto y2 = tn::conv1d(tn::leaf(x), tn::leaf(w), tn::leaf(b), spec);
  CHECK(y1->value.v == y2->value.v);  // bit-exact
}

TEST_CASE("no-grad forwards build no graph") {
  std::mt19937_64 rng(43);
  auto w = tn::leaf(random_tensor<double>({2, 2}, rng), true);
  tn::NoGradGuard guard;
  auto y = tn::dense(tn::leaf(random_tensor<double>({1, 2}, rng)), w, tn::leaf(Tensor<double>({2}, {0, 0})));
  CHECK(y->parents.empty());
  CHECK_FALSE(y->requires_grad);
}

TEST_CASE("checkpoint: write -> read identity and error paths") {
  std::mt19937_64 rng(47);
  const Tensor<float> a = random_tensor<float>({3, 4}, rng);
  const Tensor<float> b = random_tensor<float>({7}, rng);
  const auto bytes = tn::write_checkpoint<float>({{"layer.w", &a}, {"layer.b", &b}});
  const auto bytes2 = tn::write_checkpoint<float>({{"layer.w", &a}, {"layer.b", &b}});
  CHECK(bytes == bytes2);  // deterministic serialization

  auto blocks = tn::read_checkpoint<float>(bytes);
  REQUIRE(blocks.count("layer.w"));
  REQUIRE(blocks.count("layer.b"));
  CHECK(blocks["layer.w"].v == a.v);
  CHECK(blocks["layer.b"].v == b.v);
  CHECK(blocks["layer.w"].shape == a.shape);

  CHECK_THROWS_AS(tn::read_checkpoint<double>(bytes), tn::CheckpointError);  // dtype mismatch
  auto corrupt = bytes;
  corrupt[0] = 'X';
  CHECK_THROWS_AS(tn::read_checkpoint<float>(corrupt), tn::CheckpointError);
  auto truncated = bytes;
  truncated.resize(truncated.size() - 3);
  CHECK_THROWS_AS(tn::read_checkpoint<float>(truncated), tn::CheckpointError);
}
