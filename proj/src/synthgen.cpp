#include "ecgid/synthgen.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace ecgid::synth {

namespace {

constexpr double kPi = 3.14159265358979323846;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

uint64_t mix(uint64_t a, uint64_t b) {
  // splitmix64 over the combined seed
  uint64_t z = a + 0x9e3779b97f4a7c15ull + b;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double gauss_bump(double u, const WaveParams& w) {
  const double d = u - w.center;
  return w.amplitude_mv * std::exp(-(d * d) / (2.0 * w.width * w.width));
}

double template_at(const SyntheticPatientParams& p, double u) {
  return gauss_bump(u, p.p_wave) + gauss_bump(u, p.qrs) + gauss_bump(u, p.t_wave);
}

}  // namespace

SyntheticPatientParams generate_patient(uint64_t seed) {
  std::mt19937_64 rng(mix(seed, 0x5eedu));
  SyntheticPatientParams p;
  p.seed = seed;
  p.heart_rate_hz = uniform(rng, 0.7, 3.0);
  p.p_wave = {uniform(rng, 0.05, 0.25), uniform(rng, 0.010, 0.030), uniform(rng, 0.10, 0.20)};
  p.qrs = {uniform(rng, 0.60, 2.00), uniform(rng, 0.008, 0.020), uniform(rng, 0.35, 0.45)};
  p.t_wave = {uniform(rng, 0.10, 0.50), uniform(rng, 0.030, 0.070), uniform(rng, 0.60, 0.75)};
  for (double& c : p.lead_coeffs) {
    const double mag = uniform(rng, 0.3, 1.5);
    c = (rng() & 1u) ? mag : -mag;
  }
  p.noise_mv = uniform(rng, 0.005, 0.030);
  p.drift_amp_mv = uniform(rng, 0.05, 0.30);
  p.drift_freq_hz = uniform(rng, 0.05, 0.40);
  return p;
}

RecordingPlan make_plan(const SyntheticPatientParams& params, uint64_t recording_seed) {
  std::mt19937_64 rng(mix(params.seed, recording_seed));
  RecordingPlan plan;
  plan.heart_rate_hz = params.heart_rate_hz * uniform(rng, 0.97, 1.03);
  plan.phase0 = uniform(rng, 0.0, 1.0);
  plan.amplitude_scale = uniform(rng, 0.95, 1.05);
  plan.noise_seed = rng();
  return plan;
}

store::EcgRecord generate_recording(const SyntheticPatientParams& params, uint64_t recording_seed,
                                    int64_t n_samples, int rate_hz) {
  if (n_samples <= 0 || rate_hz <= 0) throw std::invalid_argument("generate_recording: bad shape");
  const RecordingPlan plan = make_plan(params, recording_seed);
  std::mt19937_64 noise_rng(plan.noise_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Shared clean waveform across leads; drift and noise vary per lead.
  std::vector<double> clean(static_cast<size_t>(n_samples));
  for (int64_t t = 0; t < n_samples; ++t) {
    const double beats = static_cast<double>(t) / rate_hz * plan.heart_rate_hz + plan.phase0;
    const double u = beats - std::floor(beats);
    clean[static_cast<size_t>(t)] = plan.amplitude_scale * template_at(params, u);
  }

  store::VoltMatrix volts(store::kStoredLeads, n_samples);
  for (int lead = 0; lead < store::kStoredLeads; ++lead) {
    const double coeff = params.lead_coeffs[static_cast<size_t>(lead)];
    const double drift_phase = uniform(noise_rng, 0.0, 2.0 * kPi);
    double* row = volts.row(lead);
    for (int64_t t = 0; t < n_samples; ++t) {
      const double drift =
          params.drift_amp_mv * std::sin(2.0 * kPi * params.drift_freq_hz * t / rate_hz + drift_phase);
      const double noise = params.noise_mv * gauss(noise_rng);
      const double mv = coeff * clean[static_cast<size_t>(t)] + drift + noise;
      row[t] = mv * 1e-3;  // millivolts -> volts
    }
  }

  store::EcgRecord rec;
  rec.sample_rate_hz = static_cast<uint32_t>(rate_hz);
  rec.granularity_volts = store::kDefaultGranularityVolts;
  rec.leads = store::quantize(volts, rec.granularity_volts);
  return rec;
}

std::vector<double> beat_template(const SyntheticPatientParams& params, int n) {
  std::vector<double> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = template_at(params, static_cast<double>(i) / n);
  return out;
}

store::DatasetContainer generate_dataset(int n_patients, int min_recordings, int max_recordings, uint64_t seed,
                                         int64_t n_samples, int rate_hz) {
  if (n_patients < 0 || min_recordings < 1 || max_recordings < min_recordings) {
    throw std::invalid_argument("generate_dataset: bad configuration");
  }
  std::mt19937_64 rng(mix(seed, 0xda7a5e7u));
  store::DatasetContainer c;
  c.header.sample_rate_hz = static_cast<uint32_t>(rate_hz);
  c.header.samples_per_record = static_cast<uint32_t>(n_samples);
  c.header.lead_count = store::kStoredLeads;
  c.header.granularity_volts = store::kDefaultGranularityVolts;
  for (int i = 0; i < n_patients; ++i) {
    const uint32_t patient_id = static_cast<uint32_t>(i + 1);
    const SyntheticPatientParams params = generate_patient(rng());
    const int recs = std::uniform_int_distribution<int>(min_recordings, max_recordings)(rng);
    for (int r = 0; r < recs; ++r) {
      store::EcgRecord rec = generate_recording(params, rng(), n_samples, rate_hz);
      rec.patient_id = patient_id;
      c.records.push_back(std::move(rec));
    }
  }
  // Interleave patients the way a clinical stream would; a record-sequence
  // split then shares patients across splits instead of cutting by patient.
  for (size_t i = c.records.size(); i > 1; --i) {
    const size_t j = std::uniform_int_distribution<size_t>(0, i - 1)(rng);
    std::swap(c.records[i - 1], c.records[j]);
  }
  c.header.record_count = static_cast<uint32_t>(c.records.size());
  return c;
}

}  // namespace ecgid::synth
