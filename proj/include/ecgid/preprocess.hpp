#pragma once

#include <vector>

#include "ecgid/ecgstore.hpp"

namespace ecgid::pp {

// Per-lead filter chain: baseline wander removal -> high-frequency noise
// removal -> z-score, each independently switchable. Defaults are the
// configuration that performed best (normalize + denoise, no BWR).
struct PreprocessConfig {
  bool apply_bwr = false;
  bool apply_hfnr = true;
  bool apply_norm = true;
  int wavelet_levels = 9;      // BWR decomposition depth
  int hfnr_detail_levels = 2;  // finest detail levels thresholded by HFNR
};

// Subtracts the level-`levels` wavelet approximation (sym2 filter bank,
// mirror-doubled periodic transform) from the lead.
std::vector<double> remove_baseline_wander(const std::vector<double>& lead, int levels = 9);

// Soft-thresholds the `detail_levels` finest detail bands at the universal
// threshold sigma*sqrt(2 ln n), sigma = median(|d1|)/0.6745.
std::vector<double> remove_hf_noise(const std::vector<double>& lead, int detail_levels = 2);

// Same transform with a caller-chosen threshold; threshold 0 keeps the map
// linear, which the property tests rely on.
std::vector<double> remove_hf_noise_with_threshold(const std::vector<double>& lead, int detail_levels,
                                                   double threshold);

// (x - mean) / std with population std; all zeros when std <= 1e-8.
std::vector<double> normalize_zscore(const std::vector<double>& lead);

store::ModelInput preprocess(const store::ModelInput& input, const PreprocessConfig& cfg);

namespace wavelet {

// One periodized sym2 analysis/synthesis step. Input length must be even;
// approx/detail each get half the samples. Perfect reconstruction holds.
void dwt_periodic(const std::vector<double>& x, std::vector<double>& approx, std::vector<double>& detail);
std::vector<double> idwt_periodic(const std::vector<double>& approx, const std::vector<double>& detail);

}  // namespace wavelet

}  // namespace ecgid::pp
