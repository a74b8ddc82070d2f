#include "ecgid/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ecgid::pp {

namespace wavelet {

namespace {

// sym2 orthogonal filter bank; highpass is the quadrature mirror of lowpass.
const double kSqrt3 = 1.7320508075688772935;
const double kNorm = 4.0 * 1.4142135623730950488;
const double kLo[4] = {(1.0 + kSqrt3) / kNorm, (3.0 + kSqrt3) / kNorm, (3.0 - kSqrt3) / kNorm,
                       (1.0 - kSqrt3) / kNorm};
const double kHi[4] = {kLo[3], -kLo[2], kLo[1], -kLo[0]};

}  // namespace

void dwt_periodic(const std::vector<double>& x, std::vector<double>& approx, std::vector<double>& detail) {
  const size_t n = x.size();
  if (n < 2 || n % 2 != 0) throw std::invalid_argument("dwt: length must be even and >= 2");
  const size_t half = n / 2;
  approx.assign(half, 0.0);
  detail.assign(half, 0.0);
  // all taps in range until 2k+3 wraps, i.e. the last two k
  const size_t bulk = n >= 4 ? half - 1 : 0;
  for (size_t k = 0; k < bulk; ++k) {
    const double* p = x.data() + 2 * k;
    approx[k] = kLo[0] * p[0] + kLo[1] * p[1] + kLo[2] * p[2] + kLo[3] * p[3];
    detail[k] = kHi[0] * p[0] + kHi[1] * p[1] + kHi[2] * p[2] + kHi[3] * p[3];
  }
  for (size_t k = bulk; k < half; ++k) {
    double a = 0.0, d = 0.0;
    for (size_t m = 0; m < 4; ++m) {
      const double v = x[(2 * k + m) % n];
      a += kLo[m] * v;
      d += kHi[m] * v;
    }
    approx[k] = a;
    detail[k] = d;
  }
}

std::vector<double> idwt_periodic(const std::vector<double>& approx, const std::vector<double>& detail) {
  const size_t half = approx.size();
  if (detail.size() != half) throw std::invalid_argument("idwt: band size mismatch");
  const size_t n = 2 * half;
  std::vector<double> x(n, 0.0);
  const size_t bulk = n >= 4 ? half - 1 : 0;
  for (size_t k = 0; k < bulk; ++k) {
    double* p = x.data() + 2 * k;
    const double a = approx[k], d = detail[k];
    p[0] += kLo[0] * a + kHi[0] * d;
    p[1] += kLo[1] * a + kHi[1] * d;
    p[2] += kLo[2] * a + kHi[2] * d;
    p[3] += kLo[3] * a + kHi[3] * d;
  }
  for (size_t k = bulk; k < half; ++k) {
    for (size_t m = 0; m < 4; ++m) {
      x[(2 * k + m) % n] += kLo[m] * approx[k] + kHi[m] * detail[k];
    }
  }
  return x;
}

}  // namespace wavelet

namespace {

// Mirror-doubling makes the periodic extension continuous, which keeps the
// approximation from ringing at the edges of non-periodic signals.
std::vector<double> mirror_double(const std::vector<double>& x) {
  std::vector<double> y(x);
  y.insert(y.end(), x.rbegin(), x.rend());
  return y;
}

int feasible_levels(size_t n, int requested) {
  int levels = 0;
  while (levels < requested && n % 2 == 0 && n >= 2) {
    n /= 2;
    ++levels;
  }
  return levels;
}

void check_length(size_t n, int levels, const char* op) {
  if (levels < 1) throw std::invalid_argument(std::string(op) + ": levels must be >= 1");
  if (n < (size_t(1) << levels)) {
    throw std::invalid_argument(std::string(op) + ": input length " + std::to_string(n) +
                                " shorter than 2^" + std::to_string(levels));
  }
}

struct Decomposition {
  std::vector<double> approx;
  std::vector<std::vector<double>> details;  // details[0] = finest
};

Decomposition decompose(const std::vector<double>& x, int levels) {
  Decomposition dec;
  dec.approx = x;
  for (int l = 0; l < levels; ++l) {
    std::vector<double> a, d;
    wavelet::dwt_periodic(dec.approx, a, d);
    dec.details.push_back(std::move(d));
    dec.approx = std::move(a);
  }
  return dec;
}

std::vector<double> reconstruct(const Decomposition& dec) {
  std::vector<double> x = dec.approx;
  for (auto it = dec.details.rbegin(); it != dec.details.rend(); ++it) {
    x = wavelet::idwt_periodic(x, *it);
  }
  return x;
}

double soft(double v, double thr) {
  if (v > thr) return v - thr;
  if (v < -thr) return v + thr;
  return 0.0;
}

std::vector<double> hfnr_impl(const std::vector<double>& lead, int detail_levels, bool estimate,
                              double threshold) {
  check_length(lead.size(), detail_levels, "remove_hf_noise");
  const std::vector<double> doubled = mirror_double(lead);
  const int levels = feasible_levels(doubled.size(), detail_levels);
  Decomposition dec = decompose(doubled, levels);
  if (estimate) {
    std::vector<double> mags(dec.details[0].size());
    for (size_t i = 0; i < mags.size(); ++i) mags[i] = std::abs(dec.details[0][i]);
    const size_t mid = mags.size() / 2;
    std::nth_element(mags.begin(), mags.begin() + mid, mags.end());
    const double sigma = mags[mid] / 0.6745;
    threshold = sigma * std::sqrt(2.0 * std::log(static_cast<double>(lead.size())));
  }
  for (auto& band : dec.details) {
    for (double& v : band) v = soft(v, threshold);
  }
  std::vector<double> out = reconstruct(dec);
  out.resize(lead.size());
  return out;
}

}  // namespace

std::vector<double> remove_baseline_wander(const std::vector<double>& lead, int levels) {
  check_length(lead.size(), levels, "remove_baseline_wander");
  const std::vector<double> doubled = mirror_double(lead);
  const int eff = feasible_levels(doubled.size(), levels);
  Decomposition dec = decompose(doubled, eff);
  for (auto& band : dec.details) std::fill(band.begin(), band.end(), 0.0);
  const std::vector<double> baseline = reconstruct(dec);
  std::vector<double> out(lead.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = lead[i] - baseline[i];
  return out;
}

std::vector<double> remove_hf_noise(const std::vector<double>& lead, int detail_levels) {
  return hfnr_impl(lead, detail_levels, true, 0.0);
}

std::vector<double> remove_hf_noise_with_threshold(const std::vector<double>& lead, int detail_levels,
                                                   double threshold) {
  return hfnr_impl(lead, detail_levels, false, threshold);
}

std::vector<double> normalize_zscore(const std::vector<double>& lead) {
  const size_t n = lead.size();
  if (n == 0) return {};
  double mean = 0.0;
  for (double v : lead) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : lead) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(n));
  std::vector<double> out(n, 0.0);
  if (sd <= 1e-8) return out;
  for (size_t i = 0; i < n; ++i) out[i] = (lead[i] - mean) / sd;
  return out;
}

store::ModelInput preprocess(const store::ModelInput& input, const PreprocessConfig& cfg) {
  if (cfg.hfnr_detail_levels > cfg.wavelet_levels) {
    throw std::invalid_argument("preprocess: hfnr_detail_levels must not exceed wavelet_levels");
  }
  store::ModelInput out = input;
  const int64_t n = out.values.cols;
  std::vector<double> lead(static_cast<size_t>(n));
  for (int r = 0; r < out.values.rows; ++r) {
    std::copy(out.values.row(r), out.values.row(r) + n, lead.begin());
    if (cfg.apply_bwr) lead = remove_baseline_wander(lead, cfg.wavelet_levels);
    if (cfg.apply_hfnr) lead = remove_hf_noise(lead, cfg.hfnr_detail_levels);
    if (cfg.apply_norm) lead = normalize_zscore(lead);
    std::copy(lead.begin(), lead.end(), out.values.row(r));
  }
  return out;
}

}  // namespace ecgid::pp
