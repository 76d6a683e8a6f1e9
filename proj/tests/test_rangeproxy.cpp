#include <map>

#include "doctest.h"
#include "smoothkv/rangeproxy.hpp"

using namespace smoothkv;

namespace {

constexpr Key kN = 256;

RangeStoreConfig smallConfig(std::size_t k) {
  RangeStoreConfig c;
  c.z = 8;
  c.valueLen = 4;
  c.k = k;
  c.theta = 3;
  c.batchSize = 3;
  c.binCapacity = 16;
  c.epsilon = 4.0;
  return c;
}

Bytes valueFor(Key key, std::uint64_t version) {
  return Bytes{static_cast<std::uint8_t>(key), static_cast<std::uint8_t>(key >> 8), static_cast<std::uint8_t>(version),
               static_cast<std::uint8_t>(version >> 8)};
}

struct Harness {
  MemoryBackend backend;
  RangeProxy proxy;
  std::map<Key, Bytes> oracle;
  std::map<std::uint64_t, std::pair<Key, Key>> open;
  std::size_t checked = 0;

  Harness(std::size_t k, std::uint64_t seed)
      : proxy(smallConfig(k), crypto::KeyMaterial::fromSeed(seed), backend,
              std::make_shared<range::UniformRanges>(kN), Rng(seed)) {}

  void check(const std::vector<RangeResult>& results) {
    for (const auto& res : results) {
      auto it = open.find(res.handle);
      REQUIRE(it != open.end());
      CHECK(res.l == it->second.first);
      CHECK(res.r == it->second.second);
      std::vector<std::pair<Key, Bytes>> want(oracle.lower_bound(res.l), oracle.upper_bound(res.r));
      std::vector<std::pair<Key, Bytes>> got;
      for (const auto& rec : res.records) got.emplace_back(rec.key, rec.value);
      CAPTURE(res.handle);
      CHECK(got == want);
      CHECK(res.answeredBatch >= res.registeredBatch);
      open.erase(it);
      ++checked;
    }
  }
  void drain() { check(proxy.drainCompleted()); }
  void batch() {
    check(proxy.runBatch());
    drain();
  }
};

}  // namespace

TEST_CASE("static store answers ranges like a sorted map") {
  Harness h(8, 11);
  std::vector<std::pair<Key, Bytes>> load;
  for (Key key = 1; key <= kN; key += 2) {
    load.emplace_back(key, valueFor(key, 0));
    h.oracle[key] = valueFor(key, 0);
  }
  h.proxy.bulkLoad(load);
  CHECK(h.proxy.counter().totalUnits() == (load.size() + 7) / 8);

  Rng rng(5);
  std::uint64_t handle = 0;
  for (int q = 0; q < 60; ++q) {
    Key a = 1 + rng.below(kN), b = 1 + rng.below(kN);
    if (a > b) std::swap(a, b);
    h.open[++handle] = {a, b};
    h.proxy.query(a, b, handle);
    h.drain();
    h.batch();
  }
  for (int i = 0; i < 5000 && !h.open.empty(); ++i) h.batch();
  CHECK(h.open.empty());
  CHECK(h.checked == 60);
}

TEST_CASE("dynamic inserts, updates and deletes across rebuilds") {
  for (std::size_t k : {1u, 2u, 3u, 8u}) {
    CAPTURE(k);
    Harness h(k, 100 + k);
    std::vector<std::pair<Key, Bytes>> load;
    for (Key key = 1; key <= 40; ++key) {
      load.emplace_back(key * 3, valueFor(key * 3, 0));
      h.oracle[key * 3] = valueFor(key * 3, 0);
    }
    h.proxy.bulkLoad(load);

    Rng rng(k);
    std::uint64_t handle = 0, version = 1;
    for (int step = 0; step < 1500; ++step) {
      const auto choice = rng.below(10);
      const Key key = 1 + rng.below(kN);
      if (choice < 5) {
        h.proxy.insert(key, valueFor(key, version));
        h.oracle[key] = valueFor(key, version++);
      } else if (choice < 6) {
        h.proxy.erase(key);
        h.oracle.erase(key);
      } else {
        Key b = std::min<Key>(kN, key + rng.below(40));
        h.open[++handle] = {key, b};
        h.proxy.query(key, b, handle);
      }
      h.drain();
      h.batch();
    }
    for (int i = 0; i < 20000 && !h.open.empty(); ++i) h.batch();
    CHECK(h.open.empty());
    CHECK(h.checked == handle);
    CHECK(h.proxy.rebuilds().size() > 10);
    CHECK(h.proxy.levels().size() <= k);
    CHECK(h.proxy.bufferedRecords() < 8);
    CHECK(h.proxy.epsilonSpent() == doctest::Approx(4.0 * h.proxy.rebuilds().size()));
  }
}

TEST_CASE("server holds exactly the slots of the live levels") {
  Harness h(3, 7);
  std::vector<std::pair<Key, Bytes>> load;
  for (Key key = 1; key <= 100; ++key) load.emplace_back(key, valueFor(key, 0));
  h.proxy.bulkLoad(load);
  for (Key key = 101; key <= 200; ++key) {
    h.proxy.insert(key, valueFor(key, 1));
    h.proxy.runBatch();
    CHECK(h.backend.entryCount() == h.proxy.serverSlots());
  }
  std::size_t slots = 0;
  for (const auto& level : h.proxy.levels()) {
    if (!level.empty()) slots += level.smoothing.slots;
  }
  CHECK(slots == h.proxy.serverSlots());
  CHECK(h.proxy.residentBytes() > 0);
}

TEST_CASE("snapshot restores an equivalent proxy") {
  Harness h(4, 9);
  std::vector<std::pair<Key, Bytes>> load;
  for (Key key = 1; key <= 60; ++key) {
    load.emplace_back(key, valueFor(key, 0));
    h.oracle[key] = valueFor(key, 0);
  }
  h.proxy.bulkLoad(load);
  for (Key key = 70; key < 75; ++key) {
    h.proxy.insert(key, valueFor(key, 1));
    h.oracle[key] = valueFor(key, 1);
  }
  auto snap = h.proxy.snapshot();

  RangeProxy reopened(smallConfig(4), crypto::KeyMaterial::fromSeed(9), h.backend,
                      std::make_shared<range::UniformRanges>(kN), Rng(99));
  reopened.restore(snap);
  CHECK(reopened.bufferedRecords() == h.proxy.bufferedRecords());
  reopened.query(50, 80, 1);
  std::vector<RangeResult> done = reopened.drainCompleted();
  for (int i = 0; i < 5000 && done.empty(); ++i) done = reopened.runBatch();
  REQUIRE(done.size() == 1);
  std::vector<Key> keys;
  for (const auto& r : done[0].records) keys.push_back(r.key);
  std::vector<Key> want;
  for (auto it = h.oracle.lower_bound(50); it != h.oracle.upper_bound(80); ++it) want.push_back(it->first);
  CHECK(keys == want);
}

TEST_CASE("invalid operations") {
  Harness h(2, 1);
  h.proxy.bulkLoad({{1, valueFor(1, 0)}});
  CHECK_THROWS_AS(h.proxy.query(5, 2, 1), ConfigError);
  CHECK_THROWS_AS(h.proxy.insert(0, valueFor(0, 0)), ConfigError);
  CHECK_THROWS_AS(h.proxy.insert(kN + 1, valueFor(0, 0)), ConfigError);
  CHECK_THROWS_AS(h.proxy.insert(3, Bytes(2)), ConfigError);
}
