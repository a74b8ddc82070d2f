#include "ecgid/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace ecgid::eval {

using nlohmann::json;

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "dev") return Split::Dev;
  if (name == "test") return Split::Test;
  if (name == "all") return Split::All;
  throw std::invalid_argument("unknown split: " + name);
}

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
    case Split::All: return "all";
  }
  return "?";
}

DatasetView::DatasetView(const store::DatasetContainer& container, const SplitSpec& spec, Split split)
    : container_(&container) {
  if (spec.train < 0 || spec.dev < 0 || spec.train + spec.dev > 1.0) {
    throw std::invalid_argument("split fractions must be nonnegative and sum to at most 1");
  }
  const int n = static_cast<int>(container.records.size());
  auto in_range = [&](int lo, int hi) {
    for (int i = lo; i < hi; ++i) indices_.push_back(i);
  };
  if (split == Split::All) {
    in_range(0, n);
  } else if (!spec.patient_disjoint) {
    const int train_end = static_cast<int>(std::floor(n * spec.train));
    const int dev_end = static_cast<int>(std::floor(n * (spec.train + spec.dev)));
    if (split == Split::Train) in_range(0, train_end);
    else if (split == Split::Dev) in_range(train_end, dev_end);
    else in_range(dev_end, n);
  } else {
    // Whole patients, in order of first appearance, until each split's
    // record budget is filled.
    std::vector<uint32_t> order;
    std::map<uint32_t, std::vector<int>> records;
    for (int i = 0; i < n; ++i) {
      const uint32_t id = container.records[static_cast<size_t>(i)].patient_id;
      auto [it, fresh] = records.try_emplace(id);
      if (fresh) order.push_back(id);
      it->second.push_back(i);
    }
    const double train_budget = n * spec.train;
    const double dev_budget = n * (spec.train + spec.dev);
    int assigned = 0;
    for (uint32_t id : order) {
      const auto& recs = records[id];
      Split bucket;
      if (assigned < train_budget) bucket = Split::Train;
      else if (assigned < dev_budget) bucket = Split::Dev;
      else bucket = Split::Test;
      if (bucket == split) indices_.insert(indices_.end(), recs.begin(), recs.end());
      assigned += static_cast<int>(recs.size());
    }
    std::sort(indices_.begin(), indices_.end());
  }
  for (int i : indices_) {
    by_patient_[container.records[static_cast<size_t>(i)].patient_id].push_back(i);
  }
  patients_.reserve(by_patient_.size());
  for (const auto& [id, recs] : by_patient_) patients_.push_back(id);
}

const std::vector<int>& DatasetView::records_of(uint32_t patient) const {
  auto it = by_patient_.find(patient);
  if (it == by_patient_.end()) throw std::out_of_range("patient not in split: " + std::to_string(patient));
  return it->second;
}

std::vector<uint32_t> DatasetView::patients_with_at_least(int k) const {
  std::vector<uint32_t> out;
  for (const auto& [id, recs] : by_patient_) {
    if (static_cast<int>(recs.size()) >= k) out.push_back(id);
  }
  return out;
}

namespace {

store::ModelInput input_of(const DatasetView& view, int idx) { return store::to_model_input(view.record(idx)); }

template <class V>
size_t pick_index(std::mt19937_64& rng, const V& v) {
  return std::uniform_int_distribution<size_t>(0, v.size() - 1)(rng);
}

// Two distinct indices in [0, n).
std::pair<size_t, size_t> pick_two(std::mt19937_64& rng, size_t n) {
  const size_t a = std::uniform_int_distribution<size_t>(0, n - 1)(rng);
  size_t b = std::uniform_int_distribution<size_t>(0, n - 2)(rng);
  if (b >= a) ++b;
  return {a, b};
}

}  // namespace

PairSampler::PairSampler(const DatasetView& view, uint64_t seed) : view_(&view), rng_(seed) {
  multi_record_patients_ = view.patients_with_at_least(2);
  if (multi_record_patients_.empty()) {
    throw InsufficientDataError("pair sampling needs a patient with at least two recordings");
  }
  if (view.patients().size() < 2) {
    throw InsufficientDataError("pair sampling needs at least two patients");
  }
}

PairSampler::PairIdx PairSampler::next_idx() {
  PairIdx out;
  out.positive = next_positive_;
  next_positive_ = !next_positive_;
  if (out.positive) {
    const uint32_t patient = multi_record_patients_[pick_index(rng_, multi_record_patients_)];
    const auto& recs = view_->records_of(patient);
    const auto [i, j] = pick_two(rng_, recs.size());
    out.a = recs[i];
    out.b = recs[j];
  } else {
    const auto& patients = view_->patients();
    const auto [pi, pj] = pick_two(rng_, patients.size());
    const auto& ra = view_->records_of(patients[pi]);
    const auto& rb = view_->records_of(patients[pj]);
    out.a = ra[pick_index(rng_, ra)];
    out.b = rb[pick_index(rng_, rb)];
  }
  return out;
}

disc::LabeledPair PairSampler::next() {
  const PairIdx idx = next_idx();
  return {input_of(*view_, idx.a), input_of(*view_, idx.b), idx.positive};
}

TripletSampler::TripletSampler(const DatasetView& view, uint64_t seed) : view_(&view), rng_(seed) {
  multi_record_patients_ = view.patients_with_at_least(2);
  if (multi_record_patients_.empty()) {
    throw InsufficientDataError("triplet sampling needs a patient with at least two recordings");
  }
  if (view.patients().size() < 2) {
    throw InsufficientDataError("triplet sampling needs at least two patients");
  }
}

TripletSampler::TripletIdx TripletSampler::next_idx() {
  TripletIdx out;
  const uint32_t anchor_patient = multi_record_patients_[pick_index(rng_, multi_record_patients_)];
  const auto& recs = view_->records_of(anchor_patient);
  const auto [i, j] = pick_two(rng_, recs.size());
  out.anchor = recs[i];
  out.positive = recs[j];
  const auto& patients = view_->patients();
  uint32_t other = anchor_patient;
  while (other == anchor_patient) other = patients[pick_index(rng_, patients)];
  const auto& nrecs = view_->records_of(other);
  out.negative = nrecs[pick_index(rng_, nrecs)];
  return out;
}

emb::Triplet TripletSampler::next() {
  const TripletIdx idx = next_idx();
  return {input_of(*view_, idx.anchor), input_of(*view_, idx.positive), input_of(*view_, idx.negative)};
}

std::vector<PairSampler::PairIdx> sample_pairs(PairSampler& sampler, int count) {
  std::vector<PairSampler::PairIdx> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(sampler.next_idx());
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size() || scores.empty()) throw MetricError("auroc: bad input sizes");
  const size_t n = scores.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  size_t npos = 0;
  for (int l : labels) npos += static_cast<size_t>(l != 0);
  const size_t nneg = n - npos;
  if (npos == 0 || nneg == 0) throw MetricError("auroc: needs both classes");
  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;  // 1-based
    for (size_t k = i; k < j; ++k) {
      if (labels[idx[k]] != 0) rank_sum_pos += avg_rank;
    }
    i = j;
  }
  const double u = rank_sum_pos - static_cast<double>(npos) * (static_cast<double>(npos) + 1.0) / 2.0;
  return u / (static_cast<double>(npos) * static_cast<double>(nneg));
}

double accuracy_at(std::span<const double> scores, std::span<const int> labels, double threshold) {
  if (scores.size() != labels.size() || scores.empty()) throw MetricError("accuracy_at: bad input sizes");
  size_t correct = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    const int pred = scores[i] >= threshold ? 1 : 0;
    correct += static_cast<size_t>(pred == (labels[i] != 0 ? 1 : 0));
  }
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

double precision_of(const BinaryCounts& c) {
  const int denom = c.tp + c.fp;
  return denom > 0 ? static_cast<double>(c.tp) / denom : 0.0;
}
double recall_of(const BinaryCounts& c) {
  const int denom = c.tp + c.fn;
  return denom > 0 ? static_cast<double>(c.tp) / denom : 0.0;
}
double f1_of(const BinaryCounts& c) {
  const double p = precision_of(c);
  const double r = recall_of(c);
  return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

BinaryCounts detection_counts(std::span<const double> scores, std::span<const int> labels, double threshold) {
  if (scores.size() != labels.size()) throw MetricError("detection_counts: bad input sizes");
  BinaryCounts c;
  for (size_t i = 0; i < scores.size(); ++i) {
    const bool flagged = scores[i] < threshold;
    const bool positive = labels[i] != 0;
    if (flagged && positive) ++c.tp;
    else if (flagged && !positive) ++c.fp;
    else if (!flagged && positive) ++c.fn;
    else ++c.tn;
  }
  return c;
}

namespace {

struct PrefixResult {
  double threshold = 0.0;
  double precision = 0.0;
};

// Smallest score-prefix whose recall reaches the target; threshold is the
// next distinct score above the prefix, i.e. the largest threshold flagging
// exactly that prefix.
PrefixResult minimal_prefix(std::span<const double> scores, std::span<const int> labels, double target) {
  if (scores.size() != labels.size() || scores.empty()) throw MetricError("calibration: bad input sizes");
  size_t npos = 0;
  for (int l : labels) npos += static_cast<size_t>(l != 0);
  if (npos == 0) throw MetricError("calibration: no positive examples");
  if (target > 1.0) {
    throw MetricError("calibration: recall " + std::to_string(target) + " unreachable; max achievable is 1");
  }
  const auto required = static_cast<size_t>(std::ceil(target * static_cast<double>(npos) - 1e-9));
  std::vector<size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  size_t cpos = 0, call = 0;
  size_t i = 0;
  if (required == 0) return {scores[idx[0]], 0.0};
  while (i < idx.size()) {
    size_t j = i;
    const double v = scores[idx[i]];
    while (j < idx.size() && scores[idx[j]] == v) {
      cpos += static_cast<size_t>(labels[idx[j]] != 0);
      ++call;
      ++j;
    }
    if (cpos >= required) {
      const double threshold = j < idx.size() ? scores[idx[j]] : v + 1.0;
      return {threshold, static_cast<double>(cpos) / static_cast<double>(call)};
    }
    i = j;
  }
  throw MetricError("calibration: recall target not reachable");  // unreachable for target <= 1
}

}  // namespace

double calibrate_threshold(std::span<const double> scores, std::span<const int> labels, double target_recall) {
  return minimal_prefix(scores, labels, target_recall).threshold;
}

double precision_at_recall(std::span<const double> scores, std::span<const int> labels, double target_recall) {
  return minimal_prefix(scores, labels, target_recall).precision;
}

// ---------------------------------------------------------------------------
// Gallery-probe

namespace {

// Deterministic partial Fisher-Yates; returns the first k of a shuffle.
template <class V>
std::vector<V> sample_k(std::vector<V> pool, size_t k, std::mt19937_64& rng) {
  for (size_t i = 0; i < k; ++i) {
    const size_t j = i + std::uniform_int_distribution<size_t>(0, pool.size() - 1 - i)(rng);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

class CountingScorer : public PairScorer {
 public:
  explicit CountingScorer(const PairScorer& inner) : inner_(&inner) {}
  double score(const EcgVector& p, const EcgVector& q) const override {
    ++calls_;
    return inner_->score(p, q);
  }
  int64_t calls() const { return calls_; }

 private:
  const PairScorer* inner_;
  mutable int64_t calls_ = 0;
};

}  // namespace

GalleryProbeResult gallery_probe(const DatasetView& view, const EmbedFn& embed, const PairScorer& scorer,
                                 int sample_size, uint64_t seed) {
  if (sample_size < 1) throw std::invalid_argument("gallery_probe: sample_size must be >= 1");
  std::vector<uint32_t> eligible = view.patients_with_at_least(2);
  if (static_cast<int>(eligible.size()) < sample_size) {
    throw InsufficientDataError("gallery_probe: need " + std::to_string(sample_size) +
                                " patients with two recordings, have " + std::to_string(eligible.size()));
  }
  std::mt19937_64 rng(seed);
  std::vector<uint32_t> selected = sample_k(std::move(eligible), static_cast<size_t>(sample_size), rng);
  std::sort(selected.begin(), selected.end());

  std::vector<EcgVector> gallery(selected.size()), probe(selected.size());
  for (size_t i = 0; i < selected.size(); ++i) {
    const auto& recs = view.records_of(selected[i]);
    const auto [a, b] = pick_two(rng, recs.size());
    gallery[i] = embed(view.record(recs[a]));
    probe[i] = embed(view.record(recs[b]));
  }

  CountingScorer counting(scorer);
  int correct = 0;
  for (size_t i = 0; i < probe.size(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    size_t best_j = 0;
    for (size_t j = 0; j < gallery.size(); ++j) {
      const double s = counting.score(probe[i], gallery[j]);
      if (s > best) {  // ties resolve to the lowest patient id
        best = s;
        best_j = j;
      }
    }
    correct += static_cast<int>(best_j == i);
  }
  return {static_cast<double>(correct) / static_cast<double>(probe.size()), sample_size, counting.calls()};
}

// ---------------------------------------------------------------------------
// Overseer simulation

SimulationReport simulate_overseer(const DatasetView& view, const SimulationConfig& cfg, const EmbedFn& embed,
                                   const PairScorer& scorer, idb::VectorDatabase* final_db) {
  if (cfg.n_initial < 1 || cfg.n_probe < 1) throw std::invalid_argument("simulate_overseer: bad sizes");
  if (cfg.mistake_rate < 0.0 || cfg.mistake_rate > 1.0) {
    throw std::invalid_argument("simulate_overseer: mistake_rate must be in [0,1]");
  }
  const std::vector<uint32_t>& all_patients = view.patients();
  if (static_cast<int>(all_patients.size()) < cfg.n_initial) {
    throw InsufficientDataError("simulation: need " + std::to_string(cfg.n_initial) + " patients, have " +
                                std::to_string(all_patients.size()));
  }
  std::mt19937_64 rng(cfg.seed);
  std::vector<uint32_t> selected = sample_k(all_patients, static_cast<size_t>(cfg.n_initial), rng);
  std::sort(selected.begin(), selected.end());

  // Probe pool: every recording of the selected patients except the one used
  // to initialize the database (their first).
  std::vector<std::pair<int, uint32_t>> pool;  // (container index, owner)
  for (uint32_t id : selected) {
    const auto& recs = view.records_of(id);
    for (size_t r = 1; r < recs.size(); ++r) pool.emplace_back(recs[r], id);
  }
  if (static_cast<int>(pool.size()) < cfg.n_probe) {
    throw InsufficientDataError("simulation: need " + std::to_string(cfg.n_probe) +
                                " probe recordings, have " + std::to_string(pool.size()));
  }

  // Embed one initial vector per selected patient.
  std::optional<idb::VectorDatabase> db;
  for (uint32_t id : selected) {
    EcgVector v = embed(view.record(view.records_of(id)[0]));
    if (!db) db.emplace(v.dim());
    db->insert(id, std::move(v));
  }

  pool = sample_k(std::move(pool), pool.size(), rng);  // full shuffle
  pool.resize(static_cast<size_t>(cfg.n_probe));

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SimulationReport report;
  report.config = cfg;
  report.steps.reserve(pool.size());

  for (const auto& [rec_idx, owner] : pool) {
    StepRecord step;
    step.true_owner = owner;
    step.mistake = unit(rng) < cfg.mistake_rate;
    if (step.mistake) {
      // Uniform over the other registered patients.
      const size_t owner_pos = static_cast<size_t>(
          std::lower_bound(selected.begin(), selected.end(), owner) - selected.begin());
      size_t pick = std::uniform_int_distribution<size_t>(0, selected.size() - 2)(rng);
      if (pick >= owner_pos) ++pick;
      step.assigned = selected[pick];
    } else {
      step.assigned = owner;
    }

    const EcgVector v = embed(view.record(rec_idx));
    step.likelihood = db->likelihood(v, step.assigned, cfg.strategy, scorer);
    step.flagged = step.likelihood < cfg.threshold;

    if (step.flagged && step.mistake && cfg.compute_corrections) {
      const auto scored = db->score_all(v, cfg.strategy, scorer);
      double best = -std::numeric_limits<double>::infinity();
      uint32_t best_id = 0;
      for (const auto& [id, l] : scored) {
        if (l > best) {
          best = l;
          best_id = id;
        }
      }
      step.corrected = best_id == owner;
    }

    if (step.mistake && step.flagged) ++report.tp;
    else if (!step.mistake && step.flagged) ++report.fp;
    else if (step.mistake && !step.flagged) ++report.fn;
    else ++report.tn;
    if (step.mistake) ++report.injected_mistakes;
    if (step.mistake && !step.flagged) ++report.corrupted_inserts;
    if (step.flagged && step.mistake && step.corrected) ++report.corrected_mistakes;

    if (cfg.insert_flagged || !step.flagged) db->insert(step.assigned, v);
    report.steps.push_back(step);
  }

  report.detected_mistakes = report.tp;
  const BinaryCounts counts{report.tp, report.fp, report.fn, report.tn};
  report.precision = precision_of(counts);
  report.recall = recall_of(counts);
  report.f1 = f1_of(counts);
  if (report.detected_mistakes > 0) {
    report.correction_rate =
        static_cast<double>(report.corrected_mistakes) / static_cast<double>(report.detected_mistakes);
  }
  if (report.injected_mistakes > 0) {
    std::vector<double> scores;
    std::vector<int> labels;
    scores.reserve(report.steps.size());
    for (const StepRecord& s : report.steps) {
      scores.push_back(s.likelihood);
      labels.push_back(s.mistake ? 1 : 0);
    }
    report.p_at_r95 = precision_at_recall(scores, labels, 0.95);
  }
  if (final_db) *final_db = std::move(*db);
  return report;
}

// ---------------------------------------------------------------------------
// Report serialization

namespace {

json config_json(const SimulationConfig& cfg) {
  return json{{"type", "config"},
              {"n_initial", cfg.n_initial},
              {"n_probe", cfg.n_probe},
              {"mistake_rate", cfg.mistake_rate},
              {"strategy", idb::strategy_name(cfg.strategy)},
              {"threshold", cfg.threshold},
              {"seed", cfg.seed},
              {"insert_flagged", cfg.insert_flagged},
              {"compute_corrections", cfg.compute_corrections}};
}

json summary_json(const SimulationReport& r) {
  json j{{"type", "summary"},
         {"tp", r.tp},
         {"fp", r.fp},
         {"fn", r.fn},
         {"tn", r.tn},
         {"injected_mistakes", r.injected_mistakes},
         {"detected_mistakes", r.detected_mistakes},
         {"corrected_mistakes", r.corrected_mistakes},
         {"corrupted_inserts", r.corrupted_inserts},
         {"precision", r.precision},
         {"recall", r.recall},
         {"f1", r.f1}};
  if (r.p_at_r95) j["p_at_r95"] = *r.p_at_r95;
  if (r.correction_rate) j["correction_rate"] = *r.correction_rate;
  return j;
}

}  // namespace

std::string report_jsonl(const SimulationReport& report) {
  std::ostringstream os;
  os << config_json(report.config).dump() << '\n';
  for (size_t i = 0; i < report.steps.size(); ++i) {
    const StepRecord& s = report.steps[i];
    os << json{{"type", "step"},        {"step", i},
               {"owner", s.true_owner}, {"assigned", s.assigned},
               {"mistake", s.mistake},  {"flagged", s.flagged},
               {"corrected", s.corrected}, {"likelihood", s.likelihood}}
              .dump()
       << '\n';
  }
  os << summary_json(report).dump() << '\n';
  return os.str();
}

std::string report_summary_json(const SimulationReport& report) { return summary_json(report).dump(2) + "\n"; }

std::string report_text(const SimulationReport& report) {
  std::ostringstream os;
  const SimulationConfig& c = report.config;
  os << "overseer simulation: " << c.n_probe << " probes over " << c.n_initial << " patients, mistake rate "
     << c.mistake_rate << ", strategy " << idb::strategy_name(c.strategy) << ", threshold " << c.threshold
     << "\n";
  os << "  injected mistakes: " << report.injected_mistakes << " (" << (c.n_probe - report.injected_mistakes)
     << " correct assignments)\n";
  os << "  confusion: tp=" << report.tp << " fp=" << report.fp << " fn=" << report.fn << " tn=" << report.tn
     << "\n";
  os << "  precision=" << report.precision << " recall=" << report.recall << " f1=" << report.f1 << "\n";
  if (report.p_at_r95) os << "  p@r95=" << *report.p_at_r95 << "\n";
  if (report.correction_rate) {
    os << "  correction rate=" << *report.correction_rate << " (" << report.corrected_mistakes << "/"
       << report.detected_mistakes << ")\n";
  } else {
    os << "  correction rate: n/a (no detected mistakes)\n";
  }
  os << "  corrupted inserts: " << report.corrupted_inserts << "\n";
  return os.str();
}

SimulationReport parse_report_jsonl(const std::string& text) {
  SimulationReport report;
  std::istringstream is(text);
  std::string line;
  bool have_config = false, have_summary = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    const std::string type = j.at("type").get<std::string>();
    if (type == "config") {
      SimulationConfig cfg;
      cfg.n_initial = j.at("n_initial").get<int>();
      cfg.n_probe = j.at("n_probe").get<int>();
      cfg.mistake_rate = j.at("mistake_rate").get<double>();
      cfg.strategy = idb::strategy_from_name(j.at("strategy").get<std::string>());
      cfg.threshold = j.at("threshold").get<double>();
      cfg.seed = j.at("seed").get<uint64_t>();
      cfg.insert_flagged = j.at("insert_flagged").get<bool>();
      cfg.compute_corrections = j.at("compute_corrections").get<bool>();
      report.config = cfg;
      have_config = true;
    } else if (type == "step") {
      StepRecord s;
      s.true_owner = j.at("owner").get<uint32_t>();
      s.assigned = j.at("assigned").get<uint32_t>();
      s.mistake = j.at("mistake").get<bool>();
      s.flagged = j.at("flagged").get<bool>();
      s.corrected = j.at("corrected").get<bool>();
      s.likelihood = j.at("likelihood").get<double>();
      report.steps.push_back(s);
    } else if (type == "summary") {
      report.tp = j.at("tp").get<int>();
      report.fp = j.at("fp").get<int>();
      report.fn = j.at("fn").get<int>();
      report.tn = j.at("tn").get<int>();
      report.injected_mistakes = j.at("injected_mistakes").get<int>();
      report.detected_mistakes = j.at("detected_mistakes").get<int>();
      report.corrected_mistakes = j.at("corrected_mistakes").get<int>();
      report.corrupted_inserts = j.at("corrupted_inserts").get<int>();
      report.precision = j.at("precision").get<double>();
      report.recall = j.at("recall").get<double>();
      report.f1 = j.at("f1").get<double>();
      if (j.contains("p_at_r95")) report.p_at_r95 = j.at("p_at_r95").get<double>();
      if (j.contains("correction_rate")) report.correction_rate = j.at("correction_rate").get<double>();
      have_summary = true;
    } else {
      throw std::runtime_error("report: unknown record type " + type);
    }
  }
  if (!have_config || !have_summary) throw std::runtime_error("report: missing config or summary line");
  return report;
}

}  // namespace ecgid::eval
