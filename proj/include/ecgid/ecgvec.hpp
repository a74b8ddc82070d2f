#pragma once

#include <vector>

namespace ecgid {

// D-dimensional embedding of one ECG recording.
struct EcgVector {
  std::vector<double> values;

  int dim() const { return static_cast<int>(values.size()); }
  bool operator==(const EcgVector&) const = default;
};

// Anything that scores a pair of ECG vectors with the probability that they
// share a patient. The discriminator head is the production implementation;
// tests substitute stubs and counting decorators.
class PairScorer {
 public:
  virtual ~PairScorer() = default;
  virtual double score(const EcgVector& p, const EcgVector& q) const = 0;
};

}  // namespace ecgid
