#include "ecgid/ecgstore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ecgid::store {

namespace {

constexpr char kMagic[4] = {'E', 'C', 'G', 'G'};
constexpr uint32_t kVersion = 1;

void require(bool ok, ParseError::Kind kind, const std::string& what) {
  if (!ok) throw ParseError(kind, what);
}

}  // namespace

uint64_t fnv1a64(const void* data, size_t n) {
  const auto* p = static_cast<const uint8_t*>(data);
  uint64_t h = 1469598103934665603ull;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

VoltMatrix dequantize(const EcgRecord& rec) {
  VoltMatrix out(rec.leads.rows, rec.leads.cols);
  const double g = static_cast<double>(rec.granularity_volts);
  for (size_t i = 0; i < rec.leads.data.size(); ++i) out.data[i] = static_cast<double>(rec.leads.data[i]) * g;
  return out;
}

QuantMatrix quantize(const VoltMatrix& volts, float granularity_volts) {
  QuantMatrix out(volts.rows, volts.cols);
  const double g = static_cast<double>(granularity_volts);
  for (size_t i = 0; i < volts.data.size(); ++i) {
    const double q = std::nearbyint(volts.data[i] / g);
    out.data[i] = static_cast<int16_t>(std::clamp(q, -32768.0, 32767.0));
  }
  return out;
}

VoltMatrix expand_leads(const VoltMatrix& eight) {
  if (eight.rows != kStoredLeads) {
    throw std::invalid_argument("expand_leads: expected 8 rows, got " + std::to_string(eight.rows));
  }
  VoltMatrix out(kModelLeads, eight.cols);
  const double* li = eight.row(0);
  const double* lii = eight.row(1);
  std::copy(li, li + eight.cols, out.row(0));
  std::copy(lii, lii + eight.cols, out.row(1));
  double* liii = out.row(2);
  double* avr = out.row(3);
  double* avl = out.row(4);
  double* avf = out.row(5);
  for (int64_t t = 0; t < eight.cols; ++t) {
    liii[t] = lii[t] - li[t];
    avr[t] = -(li[t] + lii[t]) / 2.0;
    avl[t] = li[t] - lii[t] / 2.0;
    avf[t] = lii[t] - li[t] / 2.0;
  }
  for (int v = 0; v < 6; ++v) {
    const double* src = eight.row(2 + v);
    std::copy(src, src + eight.cols, out.row(6 + v));
  }
  return out;
}

VoltMatrix fit_length(const VoltMatrix& signal, int64_t target_len) {
  if (target_len <= 0) throw std::invalid_argument("fit_length: target_len must be positive");
  if (signal.cols == target_len) return signal;
  VoltMatrix out(signal.rows, target_len);
  if (signal.cols > target_len) {
    const int64_t excess = signal.cols - target_len;
    const int64_t front = excess / 2;
    for (int r = 0; r < signal.rows; ++r) {
      const double* src = signal.row(r) + front;
      std::copy(src, src + target_len, out.row(r));
    }
  } else {
    const int64_t deficit = target_len - signal.cols;
    const int64_t front = deficit / 2;
    for (int r = 0; r < signal.rows; ++r) {
      std::copy(signal.row(r), signal.row(r) + signal.cols, out.row(r) + front);
    }
  }
  return out;
}

VoltMatrix resample(const VoltMatrix& signal, int from_hz, int to_hz) {
  if (from_hz <= 0 || to_hz <= 0) throw std::invalid_argument("resample: rates must be positive");
  if (from_hz == to_hz) return signal;
  const int64_t n = signal.cols;
  const int64_t out_len = static_cast<int64_t>(std::llround(static_cast<double>(n) * to_hz / from_hz));
  VoltMatrix out(signal.rows, out_len);
  if (n == 0 || out_len == 0) return out;
  if (from_hz % to_hz == 0 && from_hz > to_hz) {
    const int64_t f = from_hz / to_hz;
    for (int r = 0; r < signal.rows; ++r) {
      const double* src = signal.row(r);
      double* dst = out.row(r);
      for (int64_t j = 0; j < out_len; ++j) {
        double acc = 0.0;
        int64_t cnt = 0;
        for (int64_t k = j * f; k < std::min(n, (j + 1) * f); ++k) {
          acc += src[k];
          ++cnt;
        }
        dst[j] = cnt > 0 ? acc / static_cast<double>(cnt) : src[n - 1];
      }
    }
  } else {
    const double step = static_cast<double>(from_hz) / static_cast<double>(to_hz);
    for (int r = 0; r < signal.rows; ++r) {
      const double* src = signal.row(r);
      double* dst = out.row(r);
      for (int64_t j = 0; j < out_len; ++j) {
        const double pos = std::min(static_cast<double>(j) * step, static_cast<double>(n - 1));
        const int64_t i0 = static_cast<int64_t>(pos);
        const int64_t i1 = std::min(i0 + 1, n - 1);
        const double frac = pos - static_cast<double>(i0);
        dst[j] = (1.0 - frac) * src[i0] + frac * src[i1];
      }
    }
  }
  return out;
}

ModelInput to_model_input(const EcgRecord& rec, int target_rate_hz, int64_t target_len) {
  VoltMatrix volts = dequantize(rec);
  if (static_cast<int>(rec.sample_rate_hz) != target_rate_hz) {
    volts = resample(volts, static_cast<int>(rec.sample_rate_hz), target_rate_hz);
  }
  volts = fit_length(volts, target_len);
  return ModelInput{expand_leads(volts)};
}

namespace {

void put_bytes(std::vector<uint8_t>& out, const void* p, size_t n) {
  const auto* b = static_cast<const uint8_t*>(p);
  out.insert(out.end(), b, b + n);
}

template <class V>
void put(std::vector<uint8_t>& out, V v) {
  put_bytes(out, &v, sizeof(V));
}

struct Reader {
  const uint8_t* p;
  size_t remaining;
  void read(void* dst, size_t n) {
    require(remaining >= n, ParseError::Kind::Truncated, "payload ends early");
    std::memcpy(dst, p, n);
    p += n;
    remaining -= n;
  }
  template <class V>
  V get() {
    V v;
    read(&v, sizeof(V));
    return v;
  }
};

}  // namespace

std::vector<uint8_t> write_container(const DatasetContainer& c) {
  if (c.header.record_count != c.records.size()) {
    throw ParseError(ParseError::Kind::Inconsistent, "header record count != stored records");
  }
  std::vector<uint8_t> out;
  put_bytes(out, kMagic, 4);
  put<uint32_t>(out, kVersion);
  put<uint32_t>(out, c.header.record_count);
  put<uint32_t>(out, c.header.sample_rate_hz);
  put<uint32_t>(out, c.header.samples_per_record);
  put<uint8_t>(out, c.header.lead_count);
  put<float>(out, c.header.granularity_volts);
  for (const EcgRecord& rec : c.records) {
    if (rec.leads.rows != c.header.lead_count ||
        rec.leads.cols != static_cast<int64_t>(c.header.samples_per_record)) {
      throw ParseError(ParseError::Kind::Inconsistent, "record shape differs from header");
    }
    put<uint32_t>(out, rec.patient_id);
    put_bytes(out, rec.leads.data.data(), rec.leads.data.size() * sizeof(int16_t));
  }
  return out;
}

DatasetContainer read_container(const std::vector<uint8_t>& bytes) {
  Reader r{bytes.data(), bytes.size()};
  char magic[4];
  r.read(magic, 4);
  require(std::memcmp(magic, kMagic, 4) == 0, ParseError::Kind::BadMagic, "bad magic");
  const auto version = r.get<uint32_t>();
  require(version == kVersion, ParseError::Kind::BadVersion, "unsupported version " + std::to_string(version));
  DatasetContainer c;
  c.header.version = version;
  c.header.record_count = r.get<uint32_t>();
  c.header.sample_rate_hz = r.get<uint32_t>();
  c.header.samples_per_record = r.get<uint32_t>();
  c.header.lead_count = r.get<uint8_t>();
  c.header.granularity_volts = r.get<float>();
  c.records.reserve(c.header.record_count);
  for (uint32_t i = 0; i < c.header.record_count; ++i) {
    EcgRecord rec;
    rec.patient_id = r.get<uint32_t>();
    rec.sample_rate_hz = c.header.sample_rate_hz;
    rec.granularity_volts = c.header.granularity_volts;
    rec.leads = QuantMatrix(c.header.lead_count, c.header.samples_per_record);
    r.read(rec.leads.data.data(), rec.leads.data.size() * sizeof(int16_t));
    c.records.push_back(std::move(rec));
  }
  require(r.remaining == 0, ParseError::Kind::Truncated, "trailing bytes after last record");
  return c;
}

void save_container(const std::string& path, const DatasetContainer& c) {
  const auto bytes = write_container(c);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

DatasetContainer load_container(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw std::runtime_error("cannot open " + path);
  const auto size = f.tellg();
  f.seekg(0);
  std::vector<uint8_t> bytes(static_cast<size_t>(size));
  f.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!f) throw std::runtime_error("read failed: " + path);
  return read_container(bytes);
}

std::string write_manifest(const DatasetContainer& c) {
  // Offsets are relative to the start of the container byte stream.
  const size_t header_size = 4 + 4 + 4 + 4 + 4 + 1 + 4;
  const size_t record_size =
      4 + static_cast<size_t>(c.header.lead_count) * c.header.samples_per_record * sizeof(int16_t);
  std::ostringstream os;
  for (size_t i = 0; i < c.records.size(); ++i) {
    const EcgRecord& rec = c.records[i];
    const uint64_t checksum = fnv1a64(rec.leads.data.data(), rec.leads.data.size() * sizeof(int16_t));
    os << rec.patient_id << '\t' << header_size + i * record_size << '\t' << std::hex << checksum << std::dec
       << '\n';
  }
  return os.str();
}

}  // namespace ecgid::store
