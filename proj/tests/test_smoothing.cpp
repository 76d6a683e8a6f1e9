#include <cmath>
#include <map>
#include <numeric>

#include "doctest.h"
#include "smoothkv/smoothing.hpp"

using namespace smoothkv;

namespace {

const std::vector<double> kThreeKey{0.5543, 0.3800, 0.0657};

Bytes val(std::uint8_t b) { return Bytes(8, b); }

std::vector<Bytes> values(std::size_t n) {
  std::vector<Bytes> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(val(static_cast<std::uint8_t>(i)));
  return out;
}

}  // namespace

TEST_CASE("three-key allocation matches the hand derivation") {
  auto s = initSmoothing(kThreeKey, 2.0);
  CHECK(s.slots == 6);
  CHECK(s.replicas == std::vector<std::uint32_t>{2, 2, 1});
  CHECK(s.dummySlots == 1);
  const std::vector<double> expected{0.0562, 0.0562, 0.1433, 0.1433, 0.2676, 1.0 / 3.0};
  for (std::size_t i = 0; i < 6; ++i) CHECK(s.fakeDist[i] == doctest::Approx(expected[i]).epsilon(0.002));
  CHECK(std::accumulate(s.fakeDist.begin(), s.fakeDist.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("uniform and single-bucket allocations") {
  auto u = initSmoothing(std::vector<double>(5, 0.2), 2.0);
  CHECK(u.slots == 10);
  for (auto r : u.replicas) CHECK(r == 1);
  for (std::size_t k = 0; k < 5; ++k) CHECK(u.fakeDist[k] == doctest::Approx(2.0 / 10 - 0.2));

  auto one = initSmoothing(std::vector<double>{1.0}, 2.0);
  CHECK(one.slots == 2);
  CHECK(one.replicas[0] == 1);
  CHECK(one.fakeDist[0] == doctest::Approx(0.0));
  CHECK(one.fakeDist[1] == doctest::Approx(1.0));
}

TEST_CASE("per-slot touch probability is exactly 1/n'") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> w(1 + rng.below(40));
    for (double& x : w) x = std::pow(rng.uniform01(), 3.0);
    auto p = normalizeDistribution(w);
    const double alpha = 2.0 + rng.uniform01() * 2.0;
    auto s = initSmoothing(p, alpha);
    std::size_t allocated = s.dummySlots;
    for (std::size_t k = 0; k < p.size(); ++k) {
      allocated += s.replicas[k];
      for (std::uint32_t j = 0; j < s.replicas[k]; ++j) {
        const double touch = 0.5 * p[k] / s.replicas[k] + 0.5 * s.fakeDist[s.slotOf(k, j)];
        CHECK(touch == doctest::Approx(1.0 / static_cast<double>(s.slots)).epsilon(1e-9));
        CHECK(s.fakeDist[s.slotOf(k, j)] >= -1e-12);
      }
    }
    CHECK(allocated == s.slots);
  }
}

TEST_CASE("invalid smoothing inputs") {
  CHECK_THROWS_AS(initSmoothing(std::vector<double>{0.5, 0.4}, 2.0), ConfigError);
  CHECK_THROWS_AS(initSmoothing(std::vector<double>{0.5, 0.5}, 0.5), ConfigError);
  CHECK_THROWS_AS(initSmoothing(std::vector<double>{}, 2.0), ConfigError);
  CHECK(normalizeDistribution(std::vector<double>{0, 0}) == std::vector<double>{0.5, 0.5});
}

TEST_CASE("slot and replica indexing are inverse") {
  auto s = initSmoothing(kThreeKey, 2.0);
  for (std::size_t slot = 0; slot < s.slots; ++slot) {
    auto [b, r] = s.replicaOfSlot(slot);
    if (s.isDummyBucket(b)) {
      CHECK(slot >= s.realSlots());
    } else {
      CHECK(s.slotOf(b, r) == slot);
    }
  }
}

TEST_CASE("pending operations resolve in arrival order") {
  MemoryBackend backend;
  SmoothedKv::Options opt;
  opt.theta = 0;
  opt.batchSize = 1;
  SmoothedKv kv(crypto::KeyMaterial::generate(), kThreeKey, values(3), opt, backend, Rng(1));
  kv.registerOp(KvOp{KvOp::Kind::Read, 0, {}, 1});
  kv.registerOp(KvOp{KvOp::Kind::Read, 0, {}, 2});
  kv.registerOp(KvOp{KvOp::Kind::Write, 0, val(0xA1), 3});
  kv.registerOp(KvOp{KvOp::Kind::Read, 0, {}, 4});
  kv.registerOp(KvOp{KvOp::Kind::Write, 0, val(0xA2), 5});
  kv.forceCoins({false});
  auto responses = kv.runBatch();
  REQUIRE(responses.size() == 5);
  CHECK(responses[0].value == val(0));
  CHECK(responses[1].value == val(0));
  CHECK(responses[3].value == val(0xA1));
  CHECK(kv.pendingKeys() == 0);
  CHECK(kv.cachedKeys() == 1);

  // Later reads see the newest write whichever replica they land on.
  for (int i = 0; i < 20; ++i) {
    kv.registerOp(KvOp{KvOp::Kind::Read, 0, {}, 100u + i});
    std::vector<KvResponse> got;
    while (got.empty()) got = kv.runBatch();
    CHECK(got[0].value == val(0xA2));
  }
}

TEST_CASE("fake slots leave pending operations alone") {
  MemoryBackend backend;
  SmoothedKv::Options opt;
  opt.theta = 0;
  opt.batchSize = 1;
  SmoothedKv kv(crypto::KeyMaterial::generate(), kThreeKey, values(3), opt, backend, Rng(2));
  kv.registerOp(KvOp{KvOp::Kind::Read, 2, {}, 1});
  kv.forceCoins({true, true, true});
  for (int i = 0; i < 3; ++i) CHECK(kv.runBatch().empty());
  CHECK(kv.pendingKeys() == 1);
}

TEST_CASE("forced fake slot on a degenerate fake distribution hits the dummy") {
  MemoryBackend backend;
  SmoothedKv::Options opt;
  opt.theta = 0;
  opt.batchSize = 1;
  SmoothedKv kv(crypto::KeyMaterial::generate(), std::vector<double>{1.0}, values(1), opt, backend, Rng(3));
  kv.forceCoins({true});
  auto plan = kv.buildBatch();
  REQUIRE(plan.slots.size() == 1);
  CHECK(plan.slots[0].fake);
  CHECK(plan.slots[0].label == kv.labelOf(ReplicaId{0, 1, 0}));
}

TEST_CASE("every batch is full even with no client load") {
  TraceSink trace;
  MemoryBackend backend(&trace);
  SmoothedKv::Options opt;
  opt.theta = 0;
  opt.batchSize = 4;
  SmoothedKv kv(crypto::KeyMaterial::generate(), kThreeKey, values(3), opt, backend, Rng(4));
  trace.clear();
  for (int i = 0; i < 10; ++i) kv.runBatch();
  auto events = trace.snapshot();
  CHECK(events.size() == 80);
  for (std::size_t b = 0; b < 10; ++b) {
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(events[b * 8 + i].op == AccessEvent::Op::Read);
      CHECK(events[b * 8 + 4 + i].op == AccessEvent::Op::Write);
      CHECK(events[b * 8 + i].label == events[b * 8 + 4 + i].label);
    }
  }
}

TEST_CASE("replica touch frequencies are uniform under the three-key workload") {
  TraceSink trace;
  MemoryBackend backend(&trace);
  SmoothedKv::Options opt;
  opt.theta = 2;
  opt.batchSize = 3;
  SmoothedKv kv(crypto::KeyMaterial::fromSeed(1), kThreeKey, values(3), opt, backend, Rng(5));
  trace.clear();
  Rng work(6);
  std::discrete_distribution<std::size_t> keys(kThreeKey.begin(), kThreeKey.end());
  for (int b = 0; b < 34000; ++b) {
    kv.registerOp(KvOp{KvOp::Kind::Read, keys(work), {}, static_cast<std::uint64_t>(b)});
    kv.runBatch();
  }
  std::map<Label, double> counts;
  double total = 0;
  for (const auto& e : trace.snapshot()) {
    if (e.op != AccessEvent::Op::Read) continue;
    counts[e.label] += 1;
    total += 1;
  }
  CHECK(counts.size() == 6);
  for (const auto& [label, c] : counts) {
    const double p = 1.0 / 6.0;
    CHECK(std::abs(c - total * p) <= 3.5 * std::sqrt(total * p * (1 - p)));
  }
}

TEST_CASE("padding draws do not answer client operations") {
  MemoryBackend backend;
  SmoothedKv::Options opt;
  opt.theta = 0;
  opt.batchSize = 1;
  SmoothedKv kv(crypto::KeyMaterial::generate(), kThreeKey, values(3), opt, backend, Rng(7));
  kv.registerOp(KvOp{KvOp::Kind::Read, 1, {}, 1});
  ReplicaId r{0, 1, 0};
  BatchPlan plan{{BatchSlot{kv.labelOf(r), false, r, true}}};
  std::vector<Bytes> payload{val(1)};
  CHECK(kv.applyBatchResults(plan, payload).responses.empty());
  CHECK(kv.pendingKeys() == 1);
  plan.slots[0].synthetic = false;
  auto out = kv.applyBatchResults(plan, payload);
  REQUIRE(out.responses.size() == 1);
  CHECK(out.responses[0].value == val(1));
}
