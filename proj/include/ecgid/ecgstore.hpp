#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ecgid::store {

inline constexpr int kStoredLeads = 8;   // I, II, V1..V6
inline constexpr int kModelLeads = 12;   // I, II, III, aVR, aVL, aVF, V1..V6
inline constexpr int kModelSamples = 4096;
inline constexpr int kModelRateHz = 500;
inline constexpr float kDefaultGranularityVolts = 4.88e-6f;

// Row-major (leads, samples) matrix.
template <class T>
struct LeadMatrix {
  int rows = 0;
  int64_t cols = 0;
  std::vector<T> data;

  LeadMatrix() = default;
  LeadMatrix(int r, int64_t c) : rows(r), cols(c), data(static_cast<size_t>(r) * static_cast<size_t>(c), T{}) {}

  T& at(int r, int64_t c) { return data[static_cast<size_t>(r) * static_cast<size_t>(cols) + static_cast<size_t>(c)]; }
  const T& at(int r, int64_t c) const {
    return data[static_cast<size_t>(r) * static_cast<size_t>(cols) + static_cast<size_t>(c)];
  }
  T* row(int r) { return data.data() + static_cast<size_t>(r) * static_cast<size_t>(cols); }
  const T* row(int r) const { return data.data() + static_cast<size_t>(r) * static_cast<size_t>(cols); }

  bool operator==(const LeadMatrix&) const = default;
};

using QuantMatrix = LeadMatrix<int16_t>;
using VoltMatrix = LeadMatrix<double>;

// One stored recording: 8 quantized leads plus ownership and scale metadata.
struct EcgRecord {
  uint32_t patient_id = 0;
  uint32_t sample_rate_hz = kModelRateHz;
  QuantMatrix leads;  // (8, n_samples)
  float granularity_volts = kDefaultGranularityVolts;

  bool operator==(const EcgRecord&) const = default;
};

// What the embedding model consumes: 12 leads x 4096 samples, in volts.
struct ModelInput {
  VoltMatrix values;  // (12, 4096)
};

struct ContainerHeader {
  uint32_t version = 1;
  uint32_t record_count = 0;
  uint32_t sample_rate_hz = kModelRateHz;
  uint32_t samples_per_record = kModelSamples;
  uint8_t lead_count = kStoredLeads;
  float granularity_volts = kDefaultGranularityVolts;
};

struct DatasetContainer {
  ContainerHeader header;
  std::vector<EcgRecord> records;
};

class ParseError : public std::runtime_error {
 public:
  enum class Kind { BadMagic, BadVersion, Truncated, Inconsistent };
  ParseError(Kind kind, const std::string& what) : std::runtime_error("container: " + what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

VoltMatrix dequantize(const EcgRecord& rec);
// Rounds to the nearest quantum and clamps to int16 range.
QuantMatrix quantize(const VoltMatrix& volts, float granularity_volts);

// 8 leads (I, II, V1..V6) -> 12 leads (I, II, III, aVR, aVL, aVF, V1..V6):
//   III = II - I, aVR = -(I + II)/2, aVL = I - II/2, aVF = II - I/2.
VoltMatrix expand_leads(const VoltMatrix& eight);

// Bidirectional trim/pad to target_len columns; the extra sample of an odd
// excess or deficit goes to the back.
VoltMatrix fit_length(const VoltMatrix& signal, int64_t target_len = kModelSamples);

// Integer-factor downsampling = moving average over the factor, then
// decimation; anything else is linear interpolation.
VoltMatrix resample(const VoltMatrix& signal, int from_hz, int to_hz);

// dequantize -> resample to 500 Hz -> fit to 4096 -> expand to 12 leads.
ModelInput to_model_input(const EcgRecord& rec, int target_rate_hz = kModelRateHz,
                          int64_t target_len = kModelSamples);

// "ECGG" v1 binary container, little-endian, bit-exact round trip.
std::vector<uint8_t> write_container(const DatasetContainer& c);
DatasetContainer read_container(const std::vector<uint8_t>& bytes);
void save_container(const std::string& path, const DatasetContainer& c);
DatasetContainer load_container(const std::string& path);

// One line per record: patient_id, byte offset of the record block, checksum.
std::string write_manifest(const DatasetContainer& c);

uint64_t fnv1a64(const void* data, size_t n);

}  // namespace ecgid::store
