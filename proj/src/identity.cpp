#include "ecgid/identity.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace ecgid::idb {

namespace {

void check_nonempty(const PatientCluster& c) {
  if (c.vectors.empty()) throw EmptyClusterError();
}

// f over unordered pairs, row-major with j < k.
std::vector<double> pair_scores(const PatientCluster& c, const PairScorer& f) {
  const size_t n = c.vectors.size();
  std::vector<double> out;
  out.reserve(n * (n - 1) / 2);
  for (size_t j = 0; j < n; ++j) {
    for (size_t k = j + 1; k < n; ++k) out.push_back(f.score(c.vectors[j], c.vectors[k]));
  }
  return out;
}

size_t upper_index(size_t j, size_t k, size_t n) {
  // j < k
  return j * n - j * (j + 1) / 2 + (k - j - 1);
}

std::vector<double> quality_weights(const std::vector<double>& pair_upper, size_t n) {
  std::vector<double> q(n, 0.0);
  for (size_t j = 0; j < n; ++j) {
    for (size_t k = j + 1; k < n; ++k) {
      const double s = pair_upper[upper_index(j, k, n)];
      q[j] += s;
      q[k] += s;
    }
  }
  return q;
}

double consistency_from(const std::vector<double>& pair_upper, size_t n) {
  if (n < 2) return 1.0;
  double sum = 0.0;
  for (double s : pair_upper) sum += s;
  // ordered-pair mean; each unordered pair counts twice
  return 2.0 * sum / (static_cast<double>(n) * static_cast<double>(n - 1));
}

EcgVector mean_vector(const PatientCluster& c) {
  const size_t n = c.vectors.size();
  EcgVector mean;
  mean.values.assign(c.vectors[0].values.size(), 0.0);
  for (const EcgVector& v : c.vectors) {
    for (size_t i = 0; i < mean.values.size(); ++i) mean.values[i] += v.values[i];
  }
  for (double& x : mean.values) x /= static_cast<double>(n);
  return mean;
}

double weighted_avg(const EcgVector& v, const PatientCluster& c, const PairScorer& f,
                    const std::vector<double>& q) {
  double qsum = 0.0;
  for (double x : q) qsum += x;
  if (qsum <= 0.0) return likelihood_disc_avg(v, c, f);
  double acc = 0.0;
  for (size_t j = 0; j < c.vectors.size(); ++j) acc += f.score(v, c.vectors[j]) * q[j];
  return acc / qsum;
}

}  // namespace

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::VecAvg: return "vec_avg";
    case Strategy::DiscAvg: return "disc_avg";
    case Strategy::WeightedDiscAvg: return "weighted_disc_avg";
    case Strategy::WeightedConsistency: return "weighted_consistency";
  }
  return "?";
}

Strategy strategy_from_name(const std::string& name) {
  if (name == "vec_avg") return Strategy::VecAvg;
  if (name == "disc_avg") return Strategy::DiscAvg;
  if (name == "weighted_disc_avg") return Strategy::WeightedDiscAvg;
  if (name == "weighted_consistency") return Strategy::WeightedConsistency;
  throw std::invalid_argument("unknown strategy: " + name);
}

double likelihood_vec_avg(const EcgVector& v, const PatientCluster& c, const PairScorer& f) {
  check_nonempty(c);
  return f.score(v, mean_vector(c));
}

double likelihood_disc_avg(const EcgVector& v, const PatientCluster& c, const PairScorer& f) {
  check_nonempty(c);
  double acc = 0.0;
  for (const EcgVector& p : c.vectors) acc += f.score(v, p);
  return acc / static_cast<double>(c.vectors.size());
}

double likelihood_weighted_disc_avg(const EcgVector& v, const PatientCluster& c, const PairScorer& f) {
  check_nonempty(c);
  const size_t n = c.vectors.size();
  if (n == 1) return likelihood_disc_avg(v, c, f);
  const std::vector<double> pairs = pair_scores(c, f);
  return weighted_avg(v, c, f, quality_weights(pairs, n));
}

double likelihood_weighted_consistency(const EcgVector& v, const PatientCluster& c, const PairScorer& f) {
  check_nonempty(c);
  const size_t n = c.vectors.size();
  if (n == 1) return likelihood_disc_avg(v, c, f);
  const std::vector<double> pairs = pair_scores(c, f);
  const double consistency = consistency_from(pairs, n);
  return consistency * weighted_avg(v, c, f, quality_weights(pairs, n));
}

double likelihood(const EcgVector& v, const PatientCluster& c, Strategy s, const PairScorer& f) {
  switch (s) {
    case Strategy::VecAvg: return likelihood_vec_avg(v, c, f);
    case Strategy::DiscAvg: return likelihood_disc_avg(v, c, f);
    case Strategy::WeightedDiscAvg: return likelihood_weighted_disc_avg(v, c, f);
    case Strategy::WeightedConsistency: return likelihood_weighted_consistency(v, c, f);
  }
  throw std::invalid_argument("unknown strategy");
}

VectorDatabase::VectorDatabase(int dim) : dim_(dim) {
  if (dim <= 0) throw DbError("dimension must be positive");
}

VectorDatabase::VectorDatabase(VectorDatabase&& o) noexcept
    : dim_(o.dim_), cache_enabled_(o.cache_enabled_), clusters_(std::move(o.clusters_)),
      cache_(std::move(o.cache_)) {}

VectorDatabase& VectorDatabase::operator=(VectorDatabase&& o) noexcept {
  if (this != &o) {
    dim_ = o.dim_;
    cache_enabled_ = o.cache_enabled_;
    clusters_ = std::move(o.clusters_);
    cache_ = std::move(o.cache_);
  }
  return *this;
}

void VectorDatabase::register_patient(uint32_t patient_id) {
  std::unique_lock lock(data_mu_);
  clusters_.try_emplace(patient_id, PatientCluster{patient_id, {}});
}

void VectorDatabase::insert(uint32_t patient_id, EcgVector v) {
  if (v.dim() != dim_) {
    throw DbError("vector dimension " + std::to_string(v.dim()) + " != database dimension " +
                  std::to_string(dim_));
  }
  std::unique_lock lock(data_mu_);
  auto [it, created] = clusters_.try_emplace(patient_id, PatientCluster{patient_id, {}});
  it->second.vectors.push_back(std::move(v));
  std::lock_guard cache_lock(cache_mu_);
  cache_.erase(patient_id);
}

bool VectorDatabase::has_patient(uint32_t patient_id) const {
  std::shared_lock lock(data_mu_);
  return clusters_.count(patient_id) > 0;
}

size_t VectorDatabase::patient_count() const {
  std::shared_lock lock(data_mu_);
  return clusters_.size();
}

size_t VectorDatabase::vector_count() const {
  std::shared_lock lock(data_mu_);
  size_t n = 0;
  for (const auto& [id, c] : clusters_) n += c.vectors.size();
  return n;
}

std::vector<uint32_t> VectorDatabase::patient_ids() const {
  std::shared_lock lock(data_mu_);
  std::vector<uint32_t> ids;
  ids.reserve(clusters_.size());
  for (const auto& [id, c] : clusters_) ids.push_back(id);
  return ids;
}

PatientCluster VectorDatabase::cluster(uint32_t patient_id) const {
  std::shared_lock lock(data_mu_);
  auto it = clusters_.find(patient_id);
  if (it == clusters_.end()) throw DbError("unknown patient " + std::to_string(patient_id));
  return it->second;
}

const VectorDatabase::IntraCache& VectorDatabase::intra(const PatientCluster& c, const PairScorer& f) const {
  auto& entry = cache_[c.patient_id];
  if (entry.scorer != &f || entry.n != c.vectors.size()) {
    entry.scorer = &f;
    entry.n = c.vectors.size();
    entry.pair_upper = pair_scores(c, f);
    entry.q = quality_weights(entry.pair_upper, entry.n);
    entry.consistency = consistency_from(entry.pair_upper, entry.n);
  }
  return entry;
}

double VectorDatabase::likelihood_locked(const EcgVector& v, const PatientCluster& c, Strategy s,
                                         const PairScorer& f) const {
  check_nonempty(c);
  const size_t n = c.vectors.size();
  // Only the weighted strategies recompute intra-cluster scores; those are
  // what the cache is for. The mean/plain averages are cheap to redo.
  const bool needs_intra = cache_enabled_ && n > 1 &&
                           (s == Strategy::WeightedDiscAvg || s == Strategy::WeightedConsistency);
  if (!needs_intra) return idb::likelihood(v, c, s, f);
  std::unique_lock cache_lock(cache_mu_);
  const IntraCache entry = intra(c, f);  // copy so scoring below runs unlocked
  cache_lock.unlock();
  if (s == Strategy::WeightedDiscAvg) return weighted_avg(v, c, f, entry.q);
  return entry.consistency * weighted_avg(v, c, f, entry.q);
}

double VectorDatabase::likelihood(const EcgVector& v, uint32_t patient_id, Strategy s,
                                  const PairScorer& f) const {
  std::shared_lock lock(data_mu_);
  auto it = clusters_.find(patient_id);
  if (it == clusters_.end()) throw DbError("unknown patient " + std::to_string(patient_id));
  return likelihood_locked(v, it->second, s, f);
}

std::vector<std::pair<uint32_t, double>> VectorDatabase::score_all(const EcgVector& v, Strategy s,
                                                                   const PairScorer& f) const {
  std::shared_lock lock(data_mu_);
  std::vector<std::pair<uint32_t, double>> out;
  out.reserve(clusters_.size());
  for (const auto& [id, c] : clusters_) out.emplace_back(id, likelihood_locked(v, c, s, f));
  return out;
}

void VectorDatabase::set_cache_enabled(bool enabled) {
  std::unique_lock lock(data_mu_);
  cache_enabled_ = enabled;
  std::lock_guard cache_lock(cache_mu_);
  cache_.clear();
}

namespace {

constexpr char kDbMagic[4] = {'E', 'C', 'G', 'V'};

template <class V>
void put(std::vector<uint8_t>& out, V v) {
  const auto* b = reinterpret_cast<const uint8_t*>(&v);
  out.insert(out.end(), b, b + sizeof(V));
}

struct Reader {
  const uint8_t* p;
  size_t remaining;
  void read(void* dst, size_t n) {
    if (remaining < n) throw DbError("truncated database file");
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

std::vector<uint8_t> VectorDatabase::serialize() const {
  std::shared_lock lock(data_mu_);
  std::vector<uint8_t> out;
  out.insert(out.end(), kDbMagic, kDbMagic + 4);
  put<uint32_t>(out, 1);  // version
  put<uint32_t>(out, static_cast<uint32_t>(dim_));
  put<uint64_t>(out, clusters_.size());
  for (const auto& [id, c] : clusters_) {
    put<uint32_t>(out, id);
    put<uint64_t>(out, c.vectors.size());
    for (const EcgVector& v : c.vectors) {
      const auto* b = reinterpret_cast<const uint8_t*>(v.values.data());
      out.insert(out.end(), b, b + v.values.size() * sizeof(double));
    }
  }
  return out;
}

VectorDatabase VectorDatabase::deserialize(const std::vector<uint8_t>& bytes) {
  Reader r{bytes.data(), bytes.size()};
  char magic[4];
  r.read(magic, 4);
  if (std::memcmp(magic, kDbMagic, 4) != 0) throw DbError("bad magic");
  const auto version = r.get<uint32_t>();
  if (version != 1) throw DbError("unsupported version " + std::to_string(version));
  const auto dim = r.get<uint32_t>();
  VectorDatabase db(static_cast<int>(dim));
  const auto n_clusters = r.get<uint64_t>();
  for (uint64_t i = 0; i < n_clusters; ++i) {
    const auto id = r.get<uint32_t>();
    const auto n = r.get<uint64_t>();
    PatientCluster c{id, {}};
    c.vectors.resize(n);
    for (EcgVector& v : c.vectors) {
      v.values.resize(dim);
      r.read(v.values.data(), dim * sizeof(double));
    }
    db.clusters_.emplace(id, std::move(c));
  }
  if (r.remaining != 0) throw DbError("trailing bytes");
  return db;
}

void VectorDatabase::save(const std::string& path) const {
  const auto bytes = serialize();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DbError("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DbError("write failed: " + path);
}

VectorDatabase VectorDatabase::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw DbError("cannot open " + path);
  const auto size = f.tellg();
  f.seekg(0);
  std::vector<uint8_t> bytes(static_cast<size_t>(size));
  f.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!f) throw DbError("read failed: " + path);
  return deserialize(bytes);
}

std::string VectorDatabase::dump_text() const {
  std::shared_lock lock(data_mu_);
  std::ostringstream os;
  os.precision(17);
  for (const auto& [id, c] : clusters_) {
    for (size_t j = 0; j < c.vectors.size(); ++j) {
      os << id << '\t' << j;
      for (double x : c.vectors[j].values) os << '\t' << x;
      os << '\n';
    }
  }
  return os.str();
}

}  // namespace ecgid::idb
