#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecgid/discriminator.hpp"
#include "ecgid/ecgstore.hpp"
#include "ecgid/ecgvec.hpp"
#include "ecgid/embedder.hpp"
#include "ecgid/identity.hpp"

namespace ecgid::eval {

class InsufficientDataError : public std::runtime_error {
 public:
  explicit InsufficientDataError(const std::string& what) : std::runtime_error("eval: " + what) {}
};

class MetricError : public std::runtime_error {
 public:
  explicit MetricError(const std::string& what) : std::runtime_error("metric: " + what) {}
};

// ---------------------------------------------------------------------------
// Dataset splits

struct SplitSpec {
  double train = 0.7;
  double dev = 0.1;  // test gets the remainder
  bool patient_disjoint = false;
};

enum class Split { Train, Dev, Test, All };

Split split_from_name(const std::string& name);
const char* split_name(Split s);

// A split of a container: record indices plus a per-patient index. The
// default split runs over the record sequence, so patients may be shared
// across splits; patient_disjoint assigns whole patients (by order of first
// appearance) until each split's record fraction is filled.
class DatasetView {
 public:
  DatasetView(const store::DatasetContainer& container, const SplitSpec& spec, Split split);

  const store::DatasetContainer& container() const { return *container_; }
  const std::vector<int>& record_indices() const { return indices_; }
  size_t size() const { return indices_.size(); }
  const store::EcgRecord& record(int container_index) const {
    return container_->records[static_cast<size_t>(container_index)];
  }

  const std::vector<uint32_t>& patients() const { return patients_; }  // ascending
  const std::vector<int>& records_of(uint32_t patient) const;
  std::vector<uint32_t> patients_with_at_least(int k) const;

 private:
  const store::DatasetContainer* container_;
  std::vector<int> indices_;
  std::map<uint32_t, std::vector<int>> by_patient_;
  std::vector<uint32_t> patients_;
};

// ---------------------------------------------------------------------------
// Seeded samplers

// Positive and negative pairs in strict alternation, positive first.
class PairSampler : public disc::PairSource {
 public:
  PairSampler(const DatasetView& view, uint64_t seed);

  struct PairIdx {
    int a = 0, b = 0;  // container record indices
    bool positive = false;
  };
  PairIdx next_idx();
  disc::LabeledPair next() override;

 private:
  const DatasetView* view_;
  std::mt19937_64 rng_;
  std::vector<uint32_t> multi_record_patients_;
  bool next_positive_ = true;
};

class TripletSampler : public emb::TripletSource {
 public:
  TripletSampler(const DatasetView& view, uint64_t seed);

  struct TripletIdx {
    int anchor = 0, positive = 0, negative = 0;
  };
  TripletIdx next_idx();
  emb::Triplet next() override;

 private:
  const DatasetView* view_;
  std::mt19937_64 rng_;
  std::vector<uint32_t> multi_record_patients_;
};

std::vector<PairSampler::PairIdx> sample_pairs(PairSampler& sampler, int count);

// ---------------------------------------------------------------------------
// Metrics. Two score conventions are in play:
//  - verification scores: label 1 should score HIGH (discriminator outputs);
//  - detection scores: label 1 = mistake, detection fires when the
//    likelihood is BELOW the threshold.

// Mann-Whitney rank AUROC with tie averaging; throws MetricError when either
// class is empty.
double auroc(std::span<const double> scores, std::span<const int> labels);

// Fraction of correct predictions with pred = score >= threshold.
double accuracy_at(std::span<const double> scores, std::span<const int> labels, double threshold);

struct BinaryCounts {
  int tp = 0, fp = 0, fn = 0, tn = 0;
};
double precision_of(const BinaryCounts& c);
double recall_of(const BinaryCounts& c);
double f1_of(const BinaryCounts& c);

// Detection counts at a threshold (fires when score < threshold).
BinaryCounts detection_counts(std::span<const double> scores, std::span<const int> labels, double threshold);

// Largest threshold that flags exactly the smallest score-prefix reaching
// recall >= target_recall; requires at least one positive label.
double calibrate_threshold(std::span<const double> scores, std::span<const int> labels,
                           double target_recall = 0.95);
// Precision of that same minimal prefix.
double precision_at_recall(std::span<const double> scores, std::span<const int> labels,
                           double target_recall = 0.95);

// ---------------------------------------------------------------------------
// Gallery-probe matching

using EmbedFn = std::function<EcgVector(const store::EcgRecord&)>;

struct GalleryProbeResult {
  double accuracy = 0.0;
  int sample_size = 0;
  int64_t scorer_calls = 0;  // must equal sample_size^2
};

// One gallery and one probe recording per sampled patient; each probe is
// matched to the argmax gallery entry over all N candidates (ties -> lowest
// patient id).
GalleryProbeResult gallery_probe(const DatasetView& view, const EmbedFn& embed, const PairScorer& scorer,
                                 int sample_size, uint64_t seed);

// ---------------------------------------------------------------------------
// Overseer simulation

struct SimulationConfig {
  int n_initial = 10000;
  int n_probe = 1000;
  double mistake_rate = 0.02;
  idb::Strategy strategy = idb::Strategy::WeightedDiscAvg;
  double threshold = 0.5;
  uint64_t seed = 0;
  bool insert_flagged = true;       // flag-and-drop when false
  bool compute_corrections = true;  // argmax scan for each detected mistake
};

struct StepRecord {
  uint32_t true_owner = 0;
  uint32_t assigned = 0;
  bool mistake = false;
  bool flagged = false;
  bool corrected = false;  // only meaningful for detected mistakes
  double likelihood = 0.0;
};

struct SimulationReport {
  SimulationConfig config;
  std::vector<StepRecord> steps;
  int tp = 0, fp = 0, fn = 0, tn = 0;
  int injected_mistakes = 0;
  int detected_mistakes = 0;   // == tp
  int corrected_mistakes = 0;  // detected and argmax == true owner
  int corrupted_inserts = 0;   // undetected mistakes stored in the database
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  std::optional<double> p_at_r95;          // absent when no mistakes were injected
  std::optional<double> correction_rate;   // absent when nothing was detected
};

// Initializes the database with one embedded recording for each of n_initial
// patients, then streams n_probe further recordings from those patients
// through a simulated staff member with the configured mistake rate. Every
// probe is inserted under the staff-assigned patient (unless flag-and-drop
// is enabled and the overseer flagged it). final_db, when given, receives
// the database state after the last step.
SimulationReport simulate_overseer(const DatasetView& view, const SimulationConfig& cfg, const EmbedFn& embed,
                                   const PairScorer& scorer, idb::VectorDatabase* final_db = nullptr);

// Line-delimited per-step records / machine-readable summary / human text.
std::string report_jsonl(const SimulationReport& report);
std::string report_summary_json(const SimulationReport& report);
std::string report_text(const SimulationReport& report);
SimulationReport parse_report_jsonl(const std::string& text);

}  // namespace ecgid::eval
