#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecgid/ecgvec.hpp"

namespace ecgid::idb {

struct PatientCluster {
  uint32_t patient_id = 0;
  std::vector<EcgVector> vectors;
};

enum class Strategy { VecAvg, DiscAvg, WeightedDiscAvg, WeightedConsistency };

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

class EmptyClusterError : public std::domain_error {
 public:
  EmptyClusterError() : std::domain_error("likelihood: cluster has no vectors") {}
};

class DbError : public std::runtime_error {
 public:
  explicit DbError(const std::string& what) : std::runtime_error("vectordb: " + what) {}
};

// Likelihood that vector v belongs to the cluster, per strategy:
//   vec_avg:              f(v, mean of cluster vectors)
//   disc_avg:             (1/n) sum_j f(v, p_j)
//   weighted_disc_avg:    sum_j f(v, p_j) q_j / sum_j q_j,
//                         q_j = sum_{k != j} f(p_j, p_k)
//   weighted_consistency: c * weighted_disc_avg,
//                         c = mean of f over ordered intra-cluster pairs
// Singleton clusters: weighted_disc_avg falls back to disc_avg and
// weighted_consistency uses c = 1 (the formulas are undefined at n = 1).
// A cluster whose intra scores sum to zero also falls back to disc_avg.
//
// Scorer call counts (uncached): vec_avg 1; disc_avg n; the two weighted
// strategies n + n(n-1)/2 for n >= 2 (intra pairs evaluated once, unordered)
// and 1 for n = 1.
double likelihood_vec_avg(const EcgVector& v, const PatientCluster& c, const PairScorer& f);
double likelihood_disc_avg(const EcgVector& v, const PatientCluster& c, const PairScorer& f);
double likelihood_weighted_disc_avg(const EcgVector& v, const PatientCluster& c, const PairScorer& f);
double likelihood_weighted_consistency(const EcgVector& v, const PatientCluster& c, const PairScorer& f);
double likelihood(const EcgVector& v, const PatientCluster& c, Strategy s, const PairScorer& f);

// Patient vector database. Concurrency: any number of concurrent scoring
// readers OR one writer; a shared mutex enforces the exclusion, and the
// intra-cluster score cache has its own lock.
class VectorDatabase {
 public:
  explicit VectorDatabase(int dim);

  VectorDatabase(VectorDatabase&&) noexcept;
  VectorDatabase& operator=(VectorDatabase&&) noexcept;

  int dim() const { return dim_; }
  void register_patient(uint32_t patient_id);
  void insert(uint32_t patient_id, EcgVector v);

  bool has_patient(uint32_t patient_id) const;
  size_t patient_count() const;
  size_t vector_count() const;
  std::vector<uint32_t> patient_ids() const;  // ascending
  PatientCluster cluster(uint32_t patient_id) const;

  double likelihood(const EcgVector& v, uint32_t patient_id, Strategy s, const PairScorer& f) const;
  // All clusters, ascending patient id.
  std::vector<std::pair<uint32_t, double>> score_all(const EcgVector& v, Strategy s, const PairScorer& f) const;

  // Intra-cluster score memoization; invalidated per cluster on insert and
  // whenever a different scorer shows up.
  void set_cache_enabled(bool enabled);

  std::vector<uint8_t> serialize() const;
  static VectorDatabase deserialize(const std::vector<uint8_t>& bytes);
  void save(const std::string& path) const;
  static VectorDatabase load(const std::string& path);

  // patient_id, index, vector values in text form; one line per vector.
  std::string dump_text() const;

 private:
  struct IntraCache {
    const PairScorer* scorer = nullptr;
    size_t n = 0;
    std::vector<double> pair_upper;  // f over unordered pairs, row-major j < k
    std::vector<double> q;           // quality weights
    double consistency = 1.0;
  };

  const IntraCache& intra(const PatientCluster& c, const PairScorer& f) const;
  double likelihood_locked(const EcgVector& v, const PatientCluster& c, Strategy s, const PairScorer& f) const;

  int dim_ = 0;
  bool cache_enabled_ = true;
  std::map<uint32_t, PatientCluster> clusters_;
  mutable std::shared_mutex data_mu_;
  mutable std::mutex cache_mu_;
  mutable std::map<uint32_t, IntraCache> cache_;
};

}  // namespace ecgid::idb
