#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "smoothkv/pool.hpp"

using namespace smoothkv;

namespace {

ReplicaDistribution uniformOver(std::size_t n) {
  std::vector<ReplicaId> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back(ReplicaId{0, i, 0});
  return ReplicaDistribution(ids, std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

bool within3Sigma(double count, double trials, double p) {
  const double sigma = std::sqrt(trials * p * (1 - p));
  return std::abs(count - trials * p) <= 3 * sigma;
}

}  // namespace

TEST_CASE("distribution validation") {
  CHECK_THROWS_AS(ReplicaDistribution({ReplicaId{0, 0, 0}}, {0.5}), ConfigError);
  CHECK_THROWS_AS(ReplicaDistribution({ReplicaId{0, 0, 0}, ReplicaId{0, 1, 0}}, {1.5, -0.5}), ConfigError);
  CHECK_THROWS_AS(ReplicaDistribution({ReplicaId{0, 0, 0}}, {0.5, 0.5}), ConfigError);
  CHECK(ReplicaDistribution({ReplicaId{0, 0, 0}, ReplicaId{0, 1, 0}}, {1.0, 0.0}).support() == 1);
}

TEST_CASE("setup pads to theta with distinct synthetic items") {
  Rng rng(1);
  CHECK(Pool::setup(0, uniformOver(12), WeightPolicy::constant(), rng).empty());
  Pool p = Pool::setup(5, uniformOver(12), WeightPolicy::constant(), rng);
  CHECK(p.size() == 5);
  std::set<ReplicaId> seen;
  for (const auto& item : p.items()) {
    CHECK(item.synthetic);
    seen.insert(item.replica);
  }
  CHECK(seen.size() == 5);
  CHECK_THROWS_AS(Pool::setup(13, uniformOver(12), WeightPolicy::constant(), rng), ConfigError);
}

TEST_CASE("padding presence frequency is theta over support") {
  Rng rng(2);
  const int trials = 10000;
  std::map<std::uint64_t, int> presence;
  for (int t = 0; t < trials; ++t) {
    Pool p = Pool::setup(5, uniformOver(12), WeightPolicy::constant(), rng);
    for (const auto& item : p.items()) presence[item.replica.bucket]++;
  }
  for (std::uint64_t b = 0; b < 12; ++b) CHECK(within3Sigma(presence[b], trials, 5.0 / 12.0));
}

TEST_CASE("put deduplicates and promotes synthetic items") {
  Rng rng(3);
  Pool p = Pool::setup(0, uniformOver(12), WeightPolicy::constant(), rng);
  CHECK(p.put(ReplicaId{0, 1, 0}));
  CHECK(p.size() == 1);
  CHECK_FALSE(p.put(ReplicaId{0, 1, 0}));
  CHECK(p.size() == 1);

  Pool q = Pool::setup(12, uniformOver(12), WeightPolicy::constant(), rng);
  CHECK_FALSE(q.put(ReplicaId{0, 4, 0}));
  for (const auto& item : q.items()) CHECK(item.synthetic == (item.replica.bucket != 4));
}

TEST_CASE("get releases, removes and refills") {
  Rng rng(4);
  Pool single = Pool::setup(0, uniformOver(3), WeightPolicy::constant(), rng);
  single.put(ReplicaId{0, 2, 0});
  CHECK(single.get(rng).replica == ReplicaId{0, 2, 0});
  CHECK(single.empty());

  Pool p = Pool::setup(2, uniformOver(6), WeightPolicy::constant(), rng);
  for (int i = 0; i < 50; ++i) {
    p.get(rng);
    CHECK(p.size() >= 2);
    std::set<ReplicaId> ids;
    for (const auto& item : p.items()) ids.insert(item.replica);
    CHECK(ids.size() == p.size());
    for (const auto& item : p.items()) CHECK(p.contains(item.replica));
  }
}

TEST_CASE("constant weights release uniformly") {
  Rng rng(5);
  const int trials = 100000;
  std::map<std::uint64_t, int> first;
  std::map<std::vector<std::uint64_t>, int> orders;
  for (int t = 0; t < trials; ++t) {
    Pool p = Pool::setup(0, uniformOver(3), WeightPolicy::constant(), rng);
    for (std::uint64_t b = 0; b < 3; ++b) p.put(ReplicaId{0, b, 0});
    std::vector<std::uint64_t> order;
    while (!p.empty()) order.push_back(p.get(rng).replica.bucket);
    first[order[0]]++;
    orders[order]++;
  }
  for (std::uint64_t b = 0; b < 3; ++b) CHECK(within3Sigma(first[b], trials, 1.0 / 3.0));
  CHECK(orders.size() == 6);
  for (const auto& [order, count] : orders) CHECK(within3Sigma(count, trials, 1.0 / 6.0));
}

TEST_CASE("weight policies favour older items") {
  Rng rng(6);
  for (auto policy : {WeightPolicy::linear(1.0), WeightPolicy::exponential(2.0)}) {
    Pool p = Pool::setup(0, uniformOver(4), policy, rng);
    p.put(ReplicaId{0, 0, 0});
    p.put(ReplicaId{0, 1, 0});
    p.get(rng);
    p.put(ReplicaId{0, 2, 0});
    auto w = p.weights();
    REQUIRE(w.size() == 2);
    const auto& items = p.items();
    const std::size_t older = items[0].replica.bucket == 2 ? 1 : 0;
    CHECK(w[older] == doctest::Approx(2.0 * w[1 - older]));
  }
  Pool c = Pool::setup(0, uniformOver(4), WeightPolicy::constant(), rng);
  c.put(ReplicaId{0, 0, 0});
  c.put(ReplicaId{0, 1, 0});
  c.get(rng);
  c.put(ReplicaId{0, 2, 0});
  auto w = c.weights();
  CHECK(w[0] == doctest::Approx(w[1]));
}

TEST_CASE("weight policy parsing") {
  CHECK(WeightPolicy::parse("constant").kind == WeightPolicy::Kind::Constant);
  auto lin = WeightPolicy::parse("linear:0.5");
  CHECK(lin.kind == WeightPolicy::Kind::Linear);
  CHECK(lin.rate == 0.5);
  CHECK(WeightPolicy::parse("exponential").rate == 2.0);
  CHECK_THROWS_AS(WeightPolicy::parse("quadratic"), ConfigError);
  CHECK_THROWS_AS(WeightPolicy::parse("linear:-1"), ConfigError);
  CHECK(WeightPolicy::parse(WeightPolicy::linear(3).toString()).rate == 3.0);
}

TEST_CASE("release on an empty pool draws from the distribution") {
  Rng rng(7);
  Pool p = Pool::setup(0, uniformOver(3), WeightPolicy::constant(), rng);
  auto item = p.release(rng);
  CHECK(item.synthetic);
  CHECK(item.replica.bucket < 3);
  Pool none = Pool::deferred(2, WeightPolicy::constant());
  CHECK_THROWS_AS(none.release(rng), ConfigError);
}

TEST_CASE("reset distribution drops uncovered synthetic items only") {
  Rng rng(8);
  Pool p = Pool::setup(3, uniformOver(3), WeightPolicy::constant(), rng);
  p.put(ReplicaId{0, 1, 0});
  p.resetDistribution(ReplicaDistribution({ReplicaId{1, 0, 0}, ReplicaId{1, 1, 0}}, {0.5, 0.5}), rng);
  CHECK(p.contains(ReplicaId{0, 1, 0}));
  CHECK_FALSE(p.contains(ReplicaId{0, 0, 0}));
  CHECK_FALSE(p.contains(ReplicaId{0, 2, 0}));
  CHECK(p.size() == 2);
}

TEST_CASE("a duplicate real request is released twice") {
  Rng rng(9);
  Pool p = Pool::setup(0, uniformOver(3), WeightPolicy::constant(), rng);
  CHECK(p.put(ReplicaId{0, 1, 0}));
  CHECK_FALSE(p.put(ReplicaId{0, 1, 0}));
  CHECK(p.size() == 1);
  CHECK(p.get(rng).replica == ReplicaId{0, 1, 0});
  CHECK(p.size() == 1);
  CHECK(p.get(rng).replica == ReplicaId{0, 1, 0});
  CHECK(p.empty());
}

TEST_CASE("released padding follows the distribution even when theta equals the support") {
  Rng rng(10);
  std::vector<ReplicaId> ids{{0, 0, 0}, {0, 1, 0}, {0, 2, 0}};
  ReplicaDistribution d(ids, {0.7, 0.2, 0.1});
  Pool p = Pool::setup(3, d, WeightPolicy::constant(), rng);
  const int trials = 60000;
  std::map<std::uint64_t, int> counts;
  for (int t = 0; t < trials; ++t) counts[p.get(rng).replica.bucket]++;
  CHECK(within3Sigma(counts[0], trials, 0.7));
  CHECK(within3Sigma(counts[1], trials, 0.2));
  CHECK(within3Sigma(counts[2], trials, 0.1));
}
