#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <set>

#include "ecgid/evalharness.hpp"
#include "ecgid/synthgen.hpp"

using namespace ecgid;
using eval::DatasetView;
using eval::Split;
using eval::SplitSpec;

namespace {

// Embeds a record as (patient_id, lead-I checksum, 0): enough for oracle
// scorers to recover ownership without any model in the loop.
EcgVector tag_embed(const store::EcgRecord& rec) {
  EcgVector v;
  v.values = {static_cast<double>(rec.patient_id),
              static_cast<double>(rec.leads.at(0, 0)) * 1e-4, 0.0};
  return v;
}

class TagOracleScorer : public PairScorer {
 public:
  double score(const EcgVector& p, const EcgVector& q) const override {
    return std::abs(p.values[0] - q.values[0]) < 0.5 ? 1.0 : 1e-9;
  }
};

class AntiOracleScorer : public PairScorer {
 public:
  double score(const EcgVector& p, const EcgVector& q) const override {
    return std::abs(p.values[0] - q.values[0]) < 0.5 ? 1e-9 : 1.0;
  }
};

// Deterministic pseudo-random scorer: continuous, no ties in practice.
class SeededRandomScorer : public PairScorer {
 public:
  explicit SeededRandomScorer(uint64_t salt) : salt_(salt) {}
  double score(const EcgVector& p, const EcgVector& q) const override {
    uint64_t h = salt_ * 0x9e3779b97f4a7c15ull + 0xabcdu;
    auto mix = [&h](double x) {
      uint64_t bits;
      std::memcpy(&bits, &x, 8);
      h ^= bits;
      h *= 1099511628211ull;
      h ^= h >> 29;
    };
    for (double x : p.values) mix(x);
    for (double x : q.values) mix(x);
    return static_cast<double>(h >> 11) / static_cast<double>(1ull << 53);
  }

 private:
  uint64_t salt_;
};

store::DatasetContainer small_dataset(int patients = 40, uint64_t seed = 5) {
  return synth::generate_dataset(patients, 2, 4, seed, 128);
}

// Exhaustive pairwise-comparison AUROC oracle.
double auroc_oracle(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0.0;
  int64_t pairs = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 0) continue;
    for (size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("splits: record-sequence fractions and patient-disjoint mode") {
  const store::DatasetContainer c = small_dataset();
  const SplitSpec spec{0.7, 0.1, false};
  const DatasetView train(c, spec, Split::Train);
  const DatasetView dev(c, spec, Split::Dev);
  const DatasetView test(c, spec, Split::Test);
  const DatasetView all(c, spec, Split::All);
  CHECK(train.size() + dev.size() + test.size() == c.records.size());
  CHECK(all.size() == c.records.size());
  CHECK(train.size() == static_cast<size_t>(std::floor(c.records.size() * 0.7)));
  // sequence split: indices are contiguous prefixes/suffixes
  CHECK(train.record_indices().front() == 0);
  CHECK(test.record_indices().back() == static_cast<int>(c.records.size()) - 1);

  const SplitSpec disjoint{0.7, 0.1, true};
  const DatasetView dtrain(c, disjoint, Split::Train);
  const DatasetView ddev(c, disjoint, Split::Dev);
  const DatasetView dtest(c, disjoint, Split::Test);
  CHECK(dtrain.size() + ddev.size() + dtest.size() == c.records.size());
  std::set<uint32_t> seen;
  for (const auto& view : {&dtrain, &ddev, &dtest}) {
    for (uint32_t id : (*view).patients()) {
      CHECK(seen.insert(id).second);  // no patient in two splits
    }
  }
}

TEST_CASE("sample_pairs: strict balance, alternation, ground-truth ownership, determinism") {
  const store::DatasetContainer c = small_dataset();
  const DatasetView view(c, {}, Split::All);
  eval::PairSampler sampler(view, 77);
  const auto pairs = eval::sample_pairs(sampler, 10001);
  int positives = 0;
  for (size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    CHECK(p.positive == (i % 2 == 0));  // strict alternation, positive first
    const uint32_t pa = c.records[static_cast<size_t>(p.a)].patient_id;
    const uint32_t pb = c.records[static_cast<size_t>(p.b)].patient_id;
    if (p.positive) {
      CHECK(pa == pb);
      CHECK(p.a != p.b);  // two distinct recordings
    } else {
      CHECK(pa != pb);
    }
    positives += p.positive;
  }
  CHECK(positives == 5001);  // ceil(10001/2)
  CHECK(pairs.size() - static_cast<size_t>(positives) == 5000);

  eval::PairSampler s1(view, 123), s2(view, 123);
  for (int i = 0; i < 50; ++i) {
    const auto a = s1.next_idx(), b = s2.next_idx();
    CHECK(a.a == b.a);
    CHECK(a.b == b.b);
  }

  // count=2 -> one positive + one negative
  eval::PairSampler s3(view, 9);
  const auto two = eval::sample_pairs(s3, 2);
  CHECK(two[0].positive);
  CHECK_FALSE(two[1].positive);
}

TEST_CASE("triplet sampler: anchor/positive share a patient, negative differs") {
  const store::DatasetContainer c = small_dataset();
  const DatasetView view(c, {}, Split::All);
  eval::TripletSampler sampler(view, 31);
  for (int i = 0; i < 100; ++i) {
    const auto t = sampler.next_idx();
    const uint32_t pa = c.records[static_cast<size_t>(t.anchor)].patient_id;
    const uint32_t pp = c.records[static_cast<size_t>(t.positive)].patient_id;
    const uint32_t pn = c.records[static_cast<size_t>(t.negative)].patient_id;
    CHECK(pa == pp);
    CHECK(t.anchor != t.positive);
    CHECK(pa != pn);
  }
}

TEST_CASE("samplers report insufficient data") {
  const store::DatasetContainer single = synth::generate_dataset(1, 2, 2, 1, 64);
  const DatasetView view(single, {}, Split::All);
  CHECK_THROWS_AS((eval::PairSampler{view, 1}), eval::InsufficientDataError);
  const store::DatasetContainer singles = synth::generate_dataset(3, 1, 1, 2, 64);
  const DatasetView view2(singles, {}, Split::All);
  CHECK_THROWS_AS((eval::TripletSampler{view2, 1}), eval::InsufficientDataError);
}

TEST_CASE("auroc: perfect ordering, hand-built set vs pair-count oracle, ties, degenerate error") {
  CHECK(eval::auroc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}) == 1.0);

  const std::vector<double> scores{0.1, 0.4, 0.35, 0.8, 0.7, 0.2};
  const std::vector<int> labels{0, 0, 1, 1, 1, 0};
  CHECK(eval::auroc(scores, labels) == doctest::Approx(auroc_oracle(scores, labels)).epsilon(1e-12));
  CHECK(eval::auroc(scores, labels) == doctest::Approx(8.0 / 9.0));

  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<double> s(60);
    std::vector<int> l(60);
    std::uniform_int_distribution<int> score_bucket(0, 9);  // forces ties
    for (int i = 0; i < 60; ++i) {
      s[static_cast<size_t>(i)] = score_bucket(rng) / 10.0;
      l[static_cast<size_t>(i)] = (rng() & 1) != 0;
    }
    if (std::count(l.begin(), l.end(), 1) == 0 || std::count(l.begin(), l.end(), 0) == 0) continue;
    CHECK(eval::auroc(s, l) == doctest::Approx(auroc_oracle(s, l)).epsilon(1e-12));
  }

  CHECK_THROWS_AS(eval::auroc(std::vector<double>{1, 2}, std::vector<int>{1, 1}), eval::MetricError);
}

TEST_CASE("accuracy, detection counts, f1") {
  const std::vector<double> s{0.9, 0.8, 0.3, 0.1};
  const std::vector<int> l{1, 1, 0, 0};
  CHECK(eval::accuracy_at(s, l, 0.5) == 1.0);
  CHECK(eval::accuracy_at(s, l, 0.85) == doctest::Approx(0.75));

  // detection: label 1 = mistake, fire when score < threshold
  const std::vector<double> lik{0.05, 0.2, 0.7, 0.9};
  const std::vector<int> mistakes{1, 0, 0, 0};
  const auto counts = eval::detection_counts(lik, mistakes, 0.3);
  CHECK(counts.tp == 1);
  CHECK(counts.fp == 1);
  CHECK(counts.fn == 0);
  CHECK(counts.tn == 2);
  CHECK(eval::precision_of(counts) == doctest::Approx(0.5));
  CHECK(eval::recall_of(counts) == doctest::Approx(1.0));
  CHECK(eval::f1_of(counts) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("calibrate_threshold: the spec's worked example and edge cases") {
  // 20 mistakes: 19 at likelihood 0.1, one at 0.9; correct classifications at 0.8+
  std::vector<double> scores(19, 0.1);
  std::vector<int> labels(19, 1);
  scores.push_back(0.9);
  labels.push_back(1);
  for (int i = 0; i < 100; ++i) {
    scores.push_back(0.8 + 0.001 * i);
    labels.push_back(0);
  }
  const double thr = eval::calibrate_threshold(scores, labels, 0.95);
  CHECK(thr > 0.1);
  CHECK(thr <= 0.8);
  CHECK(thr == doctest::Approx(0.8));  // largest threshold flagging exactly the 19
  const auto counts = eval::detection_counts(scores, labels, thr);
  CHECK(eval::recall_of(counts) >= 0.95);
  CHECK(counts.fp == 0);
  CHECK(eval::precision_at_recall(scores, labels, 0.95) == doctest::Approx(1.0));

  // perfectly separated scores: recall 1.0 at the returned threshold
  const std::vector<double> sep{0.1, 0.15, 0.9, 0.95};
  const std::vector<int> sep_labels{1, 1, 0, 0};
  const double t2 = eval::calibrate_threshold(sep, sep_labels, 0.95);
  CHECK(eval::recall_of(eval::detection_counts(sep, sep_labels, t2)) == 1.0);
  CHECK(t2 > 0.15);
  CHECK(t2 <= 0.9);

  CHECK_THROWS_AS(eval::calibrate_threshold(sep, std::vector<int>{0, 0, 0, 0}, 0.95), eval::MetricError);
  CHECK_THROWS_AS(eval::calibrate_threshold(sep, sep_labels, 1.5), eval::MetricError);
}

TEST_CASE("threshold sweep: recall is nondecreasing in the threshold") {
  std::mt19937_64 rng(4);
  std::vector<double> scores(200);
  std::vector<int> labels(200);
  for (int i = 0; i < 200; ++i) {
    scores[static_cast<size_t>(i)] = std::uniform_real_distribution<double>(0, 1)(rng);
    labels[static_cast<size_t>(i)] = (rng() % 10) == 0;
  }
  double prev = -1.0;
  for (double thr = 0.0; thr <= 1.001; thr += 0.05) {
    const double r = eval::recall_of(eval::detection_counts(scores, labels, thr));
    CHECK(r >= prev - 1e-12);
    prev = r;
  }
}

TEST_CASE("gallery_probe: trivial N=1, oracle head, N^2 calls, tie to lowest id") {
  const store::DatasetContainer c = small_dataset(50, 7);
  const DatasetView view(c, {}, Split::All);
  TagOracleScorer oracle;

  const auto one = eval::gallery_probe(view, tag_embed, oracle, 1, 3);
  CHECK(one.accuracy == 1.0);
  CHECK(one.scorer_calls == 1);

  const auto full = eval::gallery_probe(view, tag_embed, oracle, 40, 3);
  CHECK(full.accuracy == 1.0);
  CHECK(full.scorer_calls == 40 * 40);

  // constant scorer: every probe ties everywhere -> argmax = lowest patient id
  class Const : public PairScorer {
   public:
    double score(const EcgVector&, const EcgVector&) const override { return 0.5; }
  };
  Const constant;
  const auto tied = eval::gallery_probe(view, tag_embed, constant, 10, 3);
  CHECK(tied.accuracy == doctest::Approx(0.1));  // only the lowest-id patient matches itself

  CHECK_THROWS_AS(eval::gallery_probe(view, tag_embed, oracle, 1000, 3), eval::InsufficientDataError);
}

TEST_CASE("gallery_probe: anti-oracle head scores at or below chance") {
  const store::DatasetContainer c = small_dataset(40, 9);
  const DatasetView view(c, {}, Split::All);
  AntiOracleScorer anti;
  double acc_sum = 0.0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    acc_sum += eval::gallery_probe(view, tag_embed, anti, 30, seed).accuracy;
  }
  CHECK(acc_sum / 20.0 <= 1.0 / 30.0 + 1e-9);
}

TEST_CASE("gallery_probe: random scorer sits at chance level (small Monte Carlo)") {
  const store::DatasetContainer c = small_dataset(30, 11);
  const DatasetView view(c, {}, Split::All);
  const int n = 20, trials = 200;
  double acc_sum = 0.0;
  for (int t = 0; t < trials; ++t) {
    SeededRandomScorer scorer(static_cast<uint64_t>(t));
    acc_sum += eval::gallery_probe(view, tag_embed, scorer, n, static_cast<uint64_t>(t)).accuracy;
  }
  const double mean = acc_sum / trials;
  const double p = 1.0 / n;
  const double se = std::sqrt(p * (1 - p) / (n * trials));
  CHECK(std::abs(mean - p) <= 3.0 * se);
}

TEST_CASE("simulate_overseer: p=0 with an oracle head raises no flags and injects no mistakes") {
  const store::DatasetContainer c = small_dataset(60, 13);
  const DatasetView view(c, {}, Split::All);
  TagOracleScorer oracle;
  eval::SimulationConfig cfg;
  cfg.n_initial = 30;
  cfg.n_probe = 25;
  cfg.mistake_rate = 0.0;
  cfg.threshold = 0.5;
  cfg.seed = 17;
  const auto report = eval::simulate_overseer(view, cfg, tag_embed, oracle);
  CHECK(report.injected_mistakes == 0);
  CHECK(report.tp + report.fp == 0);
  CHECK(report.tn == 25);
  CHECK(report.corrupted_inserts == 0);
}

TEST_CASE("simulate_overseer: oracle head detects and corrects every injected mistake") {
  const store::DatasetContainer c = small_dataset(80, 15);
  const DatasetView view(c, {}, Split::All);
  TagOracleScorer oracle;
  eval::SimulationConfig cfg;
  cfg.n_initial = 50;
  cfg.n_probe = 60;
  cfg.mistake_rate = 0.05;
  cfg.threshold = 0.5;
  cfg.seed = 19;
  const auto report = eval::simulate_overseer(view, cfg, tag_embed, oracle);
  CHECK(report.injected_mistakes > 0);  // seeded draw
  CHECK(report.recall == 1.0);
  CHECK(report.precision == 1.0);
  REQUIRE(report.correction_rate.has_value());
  CHECK(*report.correction_rate == 1.0);
  CHECK(report.tp == report.injected_mistakes);
  CHECK(report.tp + report.fp + report.fn + report.tn == 60);
  CHECK(report.corrupted_inserts == 0);
}

TEST_CASE("simulate_overseer: deterministic, inserts only under the assigned patient") {
  const store::DatasetContainer c = small_dataset(60, 21);
  const DatasetView view(c, {}, Split::All);
  SeededRandomScorer scorer(99);
  eval::SimulationConfig cfg;
  cfg.n_initial = 40;
  cfg.n_probe = 50;
  cfg.mistake_rate = 0.1;
  cfg.threshold = 0.3;
  cfg.seed = 23;
  idb::VectorDatabase db1(1);
  const auto r1 = eval::simulate_overseer(view, cfg, tag_embed, scorer, &db1);
  const auto r2 = eval::simulate_overseer(view, cfg, tag_embed, scorer);
  CHECK(eval::report_jsonl(r1) == eval::report_jsonl(r2));  // bit-identical

  // the number of injected mistakes equals the seeded Bernoulli draw count
  int mistakes = 0;
  for (const auto& s : r1.steps) mistakes += s.mistake;
  CHECK(mistakes == r1.injected_mistakes);

  // database holds exactly 1 initial + assigned inserts per patient
  std::map<uint32_t, size_t> expected;
  for (uint32_t id : db1.patient_ids()) expected[id] = 1;
  for (const auto& s : r1.steps) ++expected[s.assigned];
  for (uint32_t id : db1.patient_ids()) {
    CHECK(db1.cluster(id).vectors.size() == expected[id]);
  }
  CHECK(db1.vector_count() == 40 + 50);

  // flag-and-drop keeps flagged vectors out
  eval::SimulationConfig drop = cfg;
  drop.insert_flagged = false;
  idb::VectorDatabase db2(1);
  const auto r3 = eval::simulate_overseer(view, drop, tag_embed, scorer, &db2);
  int flagged = 0;
  for (const auto& s : r3.steps) flagged += s.flagged;
  CHECK(db2.vector_count() == 40 + 50 - static_cast<size_t>(flagged));
}

TEST_CASE("simulate_overseer: insufficient data errors") {
  const store::DatasetContainer c = small_dataset(10, 25);
  const DatasetView view(c, {}, Split::All);
  TagOracleScorer oracle;
  eval::SimulationConfig cfg;
  cfg.n_initial = 50;  // only 10 patients exist
  cfg.n_probe = 5;
  CHECK_THROWS_AS(eval::simulate_overseer(view, cfg, tag_embed, oracle), eval::InsufficientDataError);
  cfg.n_initial = 10;
  cfg.n_probe = 100000;
  CHECK_THROWS_AS(eval::simulate_overseer(view, cfg, tag_embed, oracle), eval::InsufficientDataError);
}

TEST_CASE("report: jsonl round trip preserves every field") {
  const store::DatasetContainer c = small_dataset(50, 27);
  const DatasetView view(c, {}, Split::All);
  SeededRandomScorer scorer(7);
  eval::SimulationConfig cfg;
  cfg.n_initial = 30;
  cfg.n_probe = 40;
  cfg.mistake_rate = 0.1;
  cfg.threshold = 0.4;
  cfg.seed = 29;
  const auto report = eval::simulate_overseer(view, cfg, tag_embed, scorer);
  const std::string text = eval::report_jsonl(report);
  const auto back = eval::parse_report_jsonl(text);
  CHECK(eval::report_jsonl(back) == text);
  CHECK(back.tp == report.tp);
  CHECK(back.injected_mistakes == report.injected_mistakes);
  CHECK(back.f1 == report.f1);
  CHECK(back.p_at_r95.has_value() == report.p_at_r95.has_value());
  REQUIRE(back.steps.size() == report.steps.size());
  CHECK(back.steps[5].likelihood == report.steps[5].likelihood);
  CHECK_FALSE(eval::report_text(report).empty());
}
