#include "ecgid/discriminator.hpp"

#include <cmath>
#include <stdexcept>

namespace ecgid::disc {

const char* feature_mode_name(FeatureMode m) {
  switch (m) {
    case FeatureMode::Exclude: return "exclude";
    case FeatureMode::Merge: return "merge";
    case FeatureMode::Full: return "full";
  }
  return "?";
}

FeatureMode feature_mode_from_name(const std::string& name) {
  if (name == "exclude") return FeatureMode::Exclude;
  if (name == "merge") return FeatureMode::Merge;
  if (name == "full") return FeatureMode::Full;
  throw std::invalid_argument("unknown feature mode: " + name);
}

void validate(const DiscriminatorConfig& cfg) {
  if (cfg.l1 == FeatureMode::Exclude && cfg.l2 == FeatureMode::Exclude && cfg.cos == FeatureMode::Exclude) {
    throw std::invalid_argument("discriminator: at least one distance family must be enabled");
  }
  if (cfg.hidden_size < 0) throw std::invalid_argument("discriminator: hidden_size must be >= 0");
  if (cfg.embedding_dim < 1) throw std::invalid_argument("discriminator: embedding_dim must be positive");
}

namespace {

void check_dims(std::span<const double> p, std::span<const double> q, std::span<const double> w,
                const char* op) {
  if (p.size() != q.size()) throw std::invalid_argument(std::string(op) + ": dimension mismatch");
  if (!w.empty() && w.size() != p.size()) {
    throw std::invalid_argument(std::string(op) + ": weight dimension mismatch");
  }
}

}  // namespace

double distance_l1(std::span<const double> p, std::span<const double> q, std::span<const double> w) {
  check_dims(p, q, w, "distance_l1");
  double acc = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    const double d = std::abs(p[i] - q[i]);
    acc += w.empty() ? d : w[i] * d;
  }
  return acc;
}

double distance_l2(std::span<const double> p, std::span<const double> q, std::span<const double> w) {
  check_dims(p, q, w, "distance_l2");
  double acc = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    const double d = (p[i] - q[i]) * (p[i] - q[i]);
    acc += w.empty() ? d : w[i] * d;
  }
  return acc;
}

double distance_cos(std::span<const double> p, std::span<const double> q, std::span<const double> w) {
  check_dims(p, q, w, "distance_cos");
  double pp = 0.0, qq = 0.0, num = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    pp += p[i] * p[i];
    qq += q[i] * q[i];
    const double d = p[i] * q[i];
    num += w.empty() ? d : w[i] * d;
  }
  const double np = std::sqrt(pp);
  const double nq = std::sqrt(qq);
  if (np <= 1e-12 || nq <= 1e-12) throw std::domain_error("distance_cos: zero-norm vector");
  return num / (np * nq);
}

}  // namespace ecgid::disc
