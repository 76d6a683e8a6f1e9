#include <cmath>
#include <sstream>

#include "doctest.h"
#include "smoothkv/crypto.hpp"
#include "smoothkv/leakage.hpp"

using namespace smoothkv;
using namespace smoothkv::leak;

namespace {

std::vector<Label> labelSet(std::size_t n) {
  auto keys = crypto::KeyMaterial::fromSeed(77);
  std::vector<Label> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(crypto::labelFor(keys.label, 0, i, 0));
  return out;
}

}  // namespace

TEST_CASE("three-key chain transitions out of k2") {
  auto m = MarkovModel::threeKey();
  Rng rng(1);
  const int n = 100000;
  int toK1 = 0, toK3 = 0;
  for (int i = 0; i < n; ++i) {
    auto s = m.next(1, rng);
    toK1 += s == 0;
    toK3 += s == 2;
  }
  const double sigma = std::sqrt(0.9 * 0.1 / n);
  CHECK(std::abs(toK1 / double(n) - 0.9) < 3 * sigma);
  CHECK(std::abs(toK3 / double(n) - 0.1) < 3 * sigma);
  CHECK(toK1 + toK3 == n);
}

TEST_CASE("identity chain never moves") {
  MarkovModel m({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  Rng rng(2);
  std::size_t s = 2;
  for (int i = 0; i < 1000; ++i) s = m.next(s, rng);
  CHECK(s == 2);
  CHECK_THROWS_AS(MarkovModel({{0.5, 0.4}, {0.5, 0.5}}), ConfigError);
  CHECK_THROWS_AS(MarkovModel({{1.0, 0.0}}), ConfigError);
}

TEST_CASE("stationary distribution, solved and simulated") {
  auto m = MarkovModel::threeKey();
  auto pi = m.stationary();
  CHECK(pi[0] == doctest::Approx(0.5543).epsilon(0.0005));
  CHECK(pi[1] == doctest::Approx(0.3800).epsilon(0.0005));
  CHECK(pi[2] == doctest::Approx(0.0657).epsilon(0.002));

  Rng rng(3);
  std::vector<double> visits(3, 0.0);
  std::size_t s = 0;
  for (int i = 0; i < 1000000; ++i) {
    s = m.next(s, rng);
    visits[s] += 1.0;
  }
  CHECK(std::abs(visits[0] / 1e6 - 0.5543) < 0.01);
  CHECK(std::abs(visits[1] / 1e6 - 0.3800) < 0.01);
  CHECK(std::abs(visits[2] / 1e6 - 0.0657) < 0.01);
}

TEST_CASE("rsd") {
  std::vector<double> flat(9, 0.25);
  CHECK(rsd(flat) == 0.0);
  std::vector<double> v{1.0 / 8, 1.0 / 8, 1.0 / 8, 5.0 / 8};
  CHECK(rsd(v) == doctest::Approx(std::sqrt(3.0) / 2));
  std::vector<double> scaled{1000, 1000, 1000, 5000};
  CHECK(rsd(scaled) == doctest::Approx(rsd(v)));
  std::vector<double> small{0.1, 0.2};
  CHECK(rsd(small) > 0.0);
}

TEST_CASE("transition matrix counts consecutive pairs") {
  std::vector<std::size_t> ids{0, 1, 1, 0, 2};
  auto m = transitionMatrix(ids, 3);
  CHECK(m.dim == 3);
  CHECK(m.at(0, 1) == doctest::Approx(0.25));
  CHECK(m.at(1, 1) == doctest::Approx(0.25));
  CHECK(m.at(1, 0) == doctest::Approx(0.25));
  CHECK(m.at(0, 2) == doctest::Approx(0.25));
  CHECK(m.at(2, 2) == 0.0);
}

TEST_CASE("uniformity test") {
  Rng rng(4);
  std::vector<std::size_t> ids;
  for (int i = 0; i < 200000; ++i) ids.push_back(rng.below(10));
  auto u = uniformityTest(ids, 10);
  CHECK(u.maxRelativeDeviation < 0.03);
  CHECK(u.pValue > 1e-4);
  for (int i = 0; i < 20000; ++i) ids.push_back(0);
  auto skew = uniformityTest(ids, 10);
  CHECK(skew.maxRelativeDeviation > 0.5);
  CHECK(skew.pValue < 1e-9);
}

TEST_CASE("distinguisher calibration and power") {
  auto universe = labelSet(24);
  Rng rng(5);
  auto a = idealTrace(universe, 100000, rng);
  auto b = idealTrace(universe, 100000, rng);
  auto same = rorCrdaDistinguish(a, b);
  CHECK(same.indistinguishable());

  auto whole = idealTrace(universe, 200000, rng);
  std::span<const Label> w(whole);
  CHECK(rorCrdaDistinguish(w.first(100000), w.last(100000)).indistinguishable());

  ZipfKeys zipf(24, 1.0);
  std::vector<Label> plain;
  for (int i = 0; i < 100000; ++i) plain.push_back(universe[zipf(rng) - 1]);
  auto d = rorCrdaDistinguish(plain, a);
  CHECK(d.frequencyP < 1e-6);
  CHECK(d.pairP < 1e-6);
  CHECK_FALSE(d.indistinguishable());
}

TEST_CASE("zipf and range generators") {
  ZipfKeys z(4, 1.0);
  auto pmf = z.pmf();
  const double h = 1 + 0.5 + 1.0 / 3 + 0.25;
  CHECK(pmf[0] == doctest::Approx(1 / h));
  CHECK(pmf[3] == doctest::Approx(0.25 / h));
  Rng rng(6);
  for (int i = 0; i < 1000; ++i) {
    auto [x, y] = uniformRange(50, rng);
    CHECK((1 <= x && x <= y && y <= 50));
    auto [p, q] = fixedWidthRange(50, 5, rng);
    CHECK(q - p + 1 == 5);
    CHECK((p >= 1 && q <= 50));
  }
}

TEST_CASE("latency summary") {
  std::vector<std::uint64_t> lat;
  for (std::uint64_t i = 1; i <= 100; ++i) lat.push_back(i);
  auto s = latencyInBatches(lat);
  CHECK(s.count == 100);
  CHECK(s.mean == doctest::Approx(50.5));
  CHECK(s.max == 100);
  CHECK(s.p50 >= 50);
  CHECK(s.p50 <= 51);
  CHECK(s.p99 >= 99);
  CHECK(latencyInBatches({}).count == 0);
}

TEST_CASE("csv round trips") {
  auto universe = labelSet(3);
  std::vector<AccessEvent> trace{{0, universe[0], AccessEvent::Op::Read},
                                 {1, universe[2], AccessEvent::Op::Read},
                                 {2, universe[0], AccessEvent::Op::Write}};
  std::stringstream ss;
  writeTraceCsv(ss, trace);
  CHECK(ss.str().rfind("slot,label_hex,op\n", 0) == 0);
  auto back = readTraceCsv(ss);
  REQUIRE(back.size() == 3);
  CHECK(back[1].label == universe[2]);
  CHECK(back[2].op == AccessEvent::Op::Write);
  CHECK(labelsOf(back).size() == 2);

  LabelIndex idx;
  auto ids = idx.map(labelsOf(back));
  CHECK(ids == std::vector<std::size_t>{0, 1});

  std::stringstream bad("slot,label_hex,op\n0,zz,read\n");
  CHECK_THROWS(readTraceCsv(bad));

  std::stringstream summary;
  writeSummaryCsv(summary, {{"rsd", 0.5}});
  CHECK(summary.str() == "metric,value\nrsd,0.5\n");
}

TEST_CASE("goodness of fit") {
  std::vector<double> probs{0.5, 0.3, 0.15, 0.05, 0.0};
  std::discrete_distribution<int> d(probs.begin(), probs.end());
  Rng rng(8);
  std::vector<double> counts(5, 0.0);
  for (int i = 0; i < 50000; ++i) counts[d(rng)] += 1;
  CHECK(goodnessOfFit(counts, probs) > 1e-4);
  std::vector<double> wrong{0.45, 0.35, 0.15, 0.05, 0.0};
  CHECK(goodnessOfFit(counts, wrong) < 1e-9);
  CHECK_THROWS_AS(goodnessOfFit(counts, std::vector<double>{1.0}), ConfigError);
}
