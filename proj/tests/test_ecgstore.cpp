#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "ecgid/ecgstore.hpp"

using namespace ecgid;
using store::DatasetContainer;
using store::EcgRecord;
using store::QuantMatrix;
using store::VoltMatrix;

namespace {

VoltMatrix random_volts(int rows, int64_t cols, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  VoltMatrix m(rows, cols);
  for (double& v : m.data) v = dist(rng);
  return m;
}

QuantMatrix random_quants(int rows, int64_t cols, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dist(-32768, 32767);
  QuantMatrix m(rows, cols);
  for (int16_t& v : m.data) v = static_cast<int16_t>(dist(rng));
  return m;
}

DatasetContainer synthetic_container(uint32_t n_records, uint32_t samples, std::mt19937_64& rng) {
  DatasetContainer c;
  c.header.record_count = n_records;
  c.header.samples_per_record = samples;
  for (uint32_t i = 0; i < n_records; ++i) {
    EcgRecord rec;
    rec.patient_id = 1000 + i;
    rec.leads = random_quants(store::kStoredLeads, samples, rng);
    c.records.push_back(std::move(rec));
  }
  return c;
}

}  // namespace

TEST_CASE("expand_leads: zeros map to zeros") {
  VoltMatrix zeros(8, 16);
  const VoltMatrix out = store::expand_leads(zeros);
  REQUIRE(out.rows == 12);
  REQUIRE(out.cols == 16);
  for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("expand_leads: constant leads give the forced augmented values") {
  VoltMatrix m(8, 5);
  for (int64_t t = 0; t < 5; ++t) {
    m.at(0, t) = 1.0;  // I
    m.at(1, t) = 3.0;  // II
  }
  const VoltMatrix out = store::expand_leads(m);
  for (int64_t t = 0; t < 5; ++t) {
    CHECK(out.at(2, t) == doctest::Approx(2.0));    // III = II - I
    CHECK(out.at(3, t) == doctest::Approx(-2.0));   // aVR = -(I+II)/2
    CHECK(out.at(4, t) == doctest::Approx(-0.5));   // aVL = I - II/2
    CHECK(out.at(5, t) == doctest::Approx(2.5));    // aVF = II - I/2
  }
}

TEST_CASE("expand_leads: per-sample oracle on random int16-scale input") {
  std::mt19937_64 rng(5);
  QuantMatrix q = random_quants(8, 4096, rng);
  EcgRecord rec;
  rec.leads = q;
  const VoltMatrix volts = store::dequantize(rec);
  const VoltMatrix out = store::expand_leads(volts);
  for (int64_t t = 0; t < out.cols; ++t) {
    // independent per-sample loop
    const double i = volts.at(0, t), ii = volts.at(1, t);
    CHECK(out.at(2, t) == doctest::Approx(ii - i).epsilon(1e-12));
    CHECK(out.at(3, t) == doctest::Approx(-(i + ii) / 2).epsilon(1e-12));
    CHECK(out.at(4, t) == doctest::Approx(i - ii / 2).epsilon(1e-12));
    CHECK(out.at(5, t) == doctest::Approx(ii - i / 2).epsilon(1e-12));
    for (int v = 0; v < 6; ++v) CHECK(out.at(6 + v, t) == volts.at(2 + v, t));
  }
}

TEST_CASE("expand_leads: linearity and the Goldberger identity") {
  std::mt19937_64 rng(6);
  const VoltMatrix x = random_volts(8, 64, rng);
  const VoltMatrix y = random_volts(8, 64, rng);
  const double a = 1.7, b = -0.4;
  VoltMatrix mix(8, 64);
  for (size_t i = 0; i < mix.data.size(); ++i) mix.data[i] = a * x.data[i] + b * y.data[i];
  const VoltMatrix ex = store::expand_leads(x);
  const VoltMatrix ey = store::expand_leads(y);
  const VoltMatrix emix = store::expand_leads(mix);
  for (size_t i = 0; i < emix.data.size(); ++i) {
    CHECK(emix.data[i] == doctest::Approx(a * ex.data[i] + b * ey.data[i]).epsilon(1e-9));
  }
  for (int64_t t = 0; t < 64; ++t) {
    const double sum = ex.at(3, t) + ex.at(4, t) + ex.at(5, t);
    CHECK(std::abs(sum) <= 1e-9 * std::max(1.0, std::abs(ex.at(3, t))));
  }
  VoltMatrix wrong(7, 8);
  CHECK_THROWS_AS(store::expand_leads(wrong), std::invalid_argument);
}

TEST_CASE("dequantize: frozen values and quantize round trip") {
  EcgRecord rec;
  rec.leads = QuantMatrix(8, 2);
  rec.leads.at(0, 0) = 0;
  rec.leads.at(0, 1) = 1000;
  rec.granularity_volts = 4.88e-6f;
  const VoltMatrix v = store::dequantize(rec);
  CHECK(v.at(0, 0) == 0.0);
  CHECK(v.at(0, 1) == doctest::Approx(4.88e-3).epsilon(1e-9));

  std::mt19937_64 rng(7);
  const QuantMatrix q = random_quants(8, 512, rng);
  EcgRecord r2;
  r2.leads = q;
  const QuantMatrix round = store::quantize(store::dequantize(r2), r2.granularity_volts);
  CHECK(round.data == q.data);
}

TEST_CASE("fit_length: frozen cases") {
  VoltMatrix same(2, 4096);
  CHECK(store::fit_length(same).data == same.data);

  VoltMatrix ten(1, 10);
  for (int64_t i = 0; i < 10; ++i) ten.at(0, i) = static_cast<double>(i + 1);
  const VoltMatrix six = store::fit_length(ten, 6);
  CHECK(six.data == std::vector<double>{3, 4, 5, 6, 7, 8});

  VoltMatrix four(1, 4);
  for (int64_t i = 0; i < 4; ++i) four.at(0, i) = static_cast<double>(i + 1);
  const VoltMatrix eight = store::fit_length(four, 8);
  CHECK(eight.data == std::vector<double>{0, 0, 1, 2, 3, 4, 0, 0});

  // odd excess/deficit: the extra sample goes to the back
  VoltMatrix five(1, 5);
  for (int64_t i = 0; i < 5; ++i) five.at(0, i) = static_cast<double>(i + 1);
  CHECK(store::fit_length(five, 4).data == std::vector<double>{1, 2, 3, 4});
  VoltMatrix two(1, 2);
  two.at(0, 0) = 1;
  two.at(0, 1) = 2;
  CHECK(store::fit_length(two, 5).data == std::vector<double>{0, 1, 2, 0, 0});
}

TEST_CASE("fit_length: idempotent at target length") {
  std::mt19937_64 rng(8);
  for (int64_t len : {5, 100, 4096, 5000}) {
    const VoltMatrix x = random_volts(3, len, rng);
    const VoltMatrix once = store::fit_length(x, 128);
    const VoltMatrix twice = store::fit_length(once, 128);
    CHECK(once.data == twice.data);
  }
}

TEST_CASE("resample: identity, constants, analytic sine oracle") {
  std::mt19937_64 rng(9);
  const VoltMatrix x = random_volts(2, 100, rng);
  CHECK(store::resample(x, 500, 500).data == x.data);

  VoltMatrix c(1, 1000);
  std::fill(c.data.begin(), c.data.end(), 0.37);
  const VoltMatrix half = store::resample(c, 1000, 500);
  REQUIRE(half.cols == 500);
  for (double v : half.data) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));

  // 10 Hz unit sine, 4 s at 1000 Hz -> 500 Hz: pairwise averaging gives
  // amplitude cos(pi*f/fs) at a half-sample phase shift.
  const double f = 10.0, fs = 1000.0;
  VoltMatrix sine(1, 4000);
  for (int64_t t = 0; t < 4000; ++t) sine.at(0, t) = std::sin(2.0 * M_PI * f * t / fs);
  const VoltMatrix ds = store::resample(sine, 1000, 500);
  REQUIRE(ds.cols == 2000);
  const double gain = std::cos(M_PI * f / fs);
  double peak = 0.0;
  for (int64_t k = 0; k < 2000; ++k) {
    const double expected = gain * std::sin(2.0 * M_PI * f * (2 * k + 0.5) / fs);
    CHECK(ds.at(0, k) == doctest::Approx(expected).epsilon(1e-9));
    peak = std::max(peak, std::abs(ds.at(0, k)));
  }
  CHECK(peak > 0.99);
  CHECK(peak < 1.01);

  // non-integer ratio goes through linear interpolation; length is rounded
  const VoltMatrix up = store::resample(c, 400, 500);
  CHECK(up.cols == 1250);
  for (double v : up.data) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));
}

TEST_CASE("container: empty and synthetic round trips are bit-exact") {
  DatasetContainer empty;
  const auto bytes = store::write_container(empty);
  const DatasetContainer back = store::read_container(bytes);
  CHECK(back.records.empty());
  CHECK(store::write_container(back) == bytes);

  std::mt19937_64 rng(10);
  const DatasetContainer c = synthetic_container(3, 64, rng);
  const auto b1 = store::write_container(c);
  const DatasetContainer c2 = store::read_container(b1);
  REQUIRE(c2.records.size() == 3);
  CHECK(c2.records[1].patient_id == c.records[1].patient_id);
  CHECK(c2.records[2].leads.data == c.records[2].leads.data);
  CHECK(store::write_container(c2) == b1);
}

TEST_CASE("container: random contents round trip (property)") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 10; ++rep) {
    const auto n = static_cast<uint32_t>(rng() % 6);
    const auto samples = static_cast<uint32_t>(1 + rng() % 100);
    const DatasetContainer c = synthetic_container(n, samples, rng);
    CHECK(store::write_container(store::read_container(store::write_container(c))) ==
          store::write_container(c));
  }
}

TEST_CASE("container: distinct parse errors") {
  std::mt19937_64 rng(12);
  DatasetContainer c = synthetic_container(2, 16, rng);
  auto bytes = store::write_container(c);

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_WITH_AS(store::read_container(bad_magic), "container: bad magic", store::ParseError);

  auto bad_version = bytes;
  bad_version[4] = 9;
  try {
    store::read_container(bad_version);
    FAIL("expected ParseError");
  } catch (const store::ParseError& e) {
    CHECK(e.kind() == store::ParseError::Kind::BadVersion);
  }

  // header claims 5 records over a 2-record payload
  auto truncated = bytes;
  truncated[8] = 5;
  try {
    store::read_container(truncated);
    FAIL("expected ParseError");
  } catch (const store::ParseError& e) {
    CHECK(e.kind() == store::ParseError::Kind::Truncated);
  }
}

TEST_CASE("to_model_input: shape contract and lead expansion") {
  std::mt19937_64 rng(13);
  EcgRecord rec;
  rec.sample_rate_hz = 1000;
  rec.leads = random_quants(8, 6000, rng);
  const store::ModelInput in = store::to_model_input(rec);
  CHECK(in.values.rows == 12);
  CHECK(in.values.cols == 4096);
}

TEST_CASE("manifest: one line per record with stable checksums") {
  std::mt19937_64 rng(14);
  const DatasetContainer c = synthetic_container(4, 32, rng);
  const std::string manifest = store::write_manifest(c);
  std::istringstream is(manifest);
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) ++lines;
  CHECK(lines == 4);
  CHECK(store::write_manifest(c) == manifest);
}
