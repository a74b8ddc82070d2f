#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ecgid/ecgstore.hpp"

namespace ecgid::synth {

// One Gaussian bump of the beat template. Width and center are fractions of
// the beat period; amplitude is in millivolts.
struct WaveParams {
  double amplitude_mv = 0.0;
  double width = 0.02;
  double center = 0.5;
};

struct SyntheticPatientParams {
  uint64_t seed = 0;
  double heart_rate_hz = 1.2;  // [0.7, 3.0]
  WaveParams p_wave, qrs, t_wave;
  std::array<double, store::kStoredLeads> lead_coeffs{};
  double noise_mv = 0.01;
  double drift_amp_mv = 0.1;
  double drift_freq_hz = 0.2;
};

// Per-recording jitter derived deterministically from (params, recording_seed).
struct RecordingPlan {
  double heart_rate_hz = 0.0;  // effective rate after jitter
  double phase0 = 0.0;
  double amplitude_scale = 1.0;
  uint64_t noise_seed = 0;
};

SyntheticPatientParams generate_patient(uint64_t seed);

RecordingPlan make_plan(const SyntheticPatientParams& params, uint64_t recording_seed);

store::EcgRecord generate_recording(const SyntheticPatientParams& params, uint64_t recording_seed,
                                    int64_t n_samples = store::kModelSamples, int rate_hz = store::kModelRateHz);

// Clean single-beat waveform (unit lead coefficient), n points over one period.
std::vector<double> beat_template(const SyntheticPatientParams& params, int n);

// Patients get ids 1..n_patients; recordings per patient drawn uniformly from
// [min_recordings, max_recordings].
store::DatasetContainer generate_dataset(int n_patients, int min_recordings, int max_recordings, uint64_t seed,
                                         int64_t n_samples = store::kModelSamples,
                                         int rate_hz = store::kModelRateHz);

}  // namespace ecgid::synth
