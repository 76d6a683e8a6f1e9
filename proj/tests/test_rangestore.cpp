#include <algorithm>
#include <map>

#include "doctest.h"
#include "smoothkv/rangestore.hpp"
#include "smoothkv/rng.hpp"

using namespace smoothkv;
using namespace smoothkv::range;

namespace {

std::vector<Record> recordsOf(std::initializer_list<Key> keys, std::size_t len = 4) {
  std::vector<Record> out;
  std::uint64_t seq = 1;
  for (Key k : keys) out.push_back(Record{k, seq++, false, Bytes(len, static_cast<std::uint8_t>(k))});
  return out;
}

// Probability that a range drawn from pmf overlaps [l, r], by enumeration.
double bruteInclusion(Key n, const std::function<double(Key, Key)>& pmf, Key l, Key r) {
  double p = 0.0;
  for (Key x = 1; x <= n; ++x) {
    for (Key y = x; y <= n; ++y) {
      if (x <= r && y >= l) p += pmf(x, y);
    }
  }
  return p;
}

}  // namespace

TEST_CASE("bucketize pads and tags") {
  auto buckets = bucketize(recordsOf({1, 3, 5, 7, 9}), 2, 4);
  REQUIRE(buckets.size() == 3);
  CHECK(tagsOf(buckets) == std::vector<Tag>{{1, 3}, {5, 7}, {9, 9}});
  CHECK(buckets[2].slots.size() == 2);
  CHECK(buckets[2].slots[1].isDummy());

  auto one = bucketize(recordsOf({4, 8}), 2, 4);
  REQUIRE(one.size() == 1);
  CHECK(one[0].tag == Tag{4, 8});

  CHECK_THROWS_AS(bucketize(recordsOf({1, 2}), 0, 4), ConfigError);
  CHECK_THROWS_AS(bucketize(recordsOf({2, 1}), 2, 4), ConfigError);
}

TEST_CASE("bucketize preserves the record multiset") {
  Rng rng(1);
  std::vector<Record> recs;
  for (std::uint64_t i = 0; i < 10000; ++i) recs.push_back(Record{1 + rng.below(1000000), i, false, Bytes(4, 1)});
  std::sort(recs.begin(), recs.end(), RecordLess{});
  auto buckets = bucketize(recs, 512, 4);
  CHECK(buckets.size() == 20);
  std::vector<Record> back;
  for (const auto& b : buckets) {
    CHECK(b.slots.size() == 512);
    CHECK(tagOfRecords(b.slots) == b.tag);
    for (const auto& r : b.slots) {
      if (!r.isDummy()) back.push_back(r);
    }
  }
  CHECK(back == recs);
}

TEST_CASE("bucket serialization round trip") {
  auto buckets = bucketize(recordsOf({2, 4, 6}, 3), 4, 3);
  auto data = serializeBucket(buckets[0].slots, 4, 3);
  CHECK(data.size() == serializedBucketSize(4, 3));
  CHECK(deserializeBucket(data, 4, 3) == buckets[0].slots);
  CHECK_THROWS(deserializeBucket(Bytes(5, 0), 4, 3));
}

TEST_CASE("uniform inclusion probabilities") {
  CHECK(uniformBucketProbability(4, 2, 3) == doctest::Approx(0.8));
  CHECK(uniformBucketProbability(4, 1, 4) == doctest::Approx(1.0));
  UniformRanges u(4);
  CHECK(u.inclusion(2, 3) == doctest::Approx(0.8));
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    Key l = 1 + rng.below(1000);
    Key r = l + rng.below(1001 - l);
    auto cum = CumulativeRangeDist::fromPmf(50, [](Key, Key) { return 1.0 / (50.0 * 51.0 / 2.0); });
    Key ls = 1 + l % 50, rs = std::max(ls, 1 + r % 50);
    CHECK(std::abs(cum.inclusion(ls, rs) - uniformBucketProbability(50, ls, rs)) < 1e-12);
    CHECK(std::abs(UniformRanges(1000).inclusion(l, r) - uniformBucketProbability(1000, l, r)) < 1e-12);
  }
}

TEST_CASE("cumulative inclusion equals brute-force enumeration") {
  Rng rng(3);
  for (Key n : {4u, 16u, 64u}) {
    for (int trial = 0; trial < 20; ++trial) {
      std::map<std::pair<Key, Key>, double> w;
      double total = 0;
      for (Key x = 1; x <= n; ++x) {
        for (Key y = x; y <= n; ++y) {
          double v = rng.uniform01() < 0.3 ? 0.0 : rng.uniform01();
          w[{x, y}] = v;
          total += v;
        }
      }
      auto pmf = [&](Key x, Key y) { return y < x ? 0.0 : w[{x, y}] / total; };
      auto cum = CumulativeRangeDist::fromPmf(n, pmf);
      CHECK(cum.at(n, n) == doctest::Approx(1.0).epsilon(1e-12));
      std::vector<Tag> tags;
      Key at = 1;
      while (at <= n) {
        Key r = std::min<Key>(n, at + rng.below(4));
        tags.push_back(Tag{at, r});
        at = r + 1 + rng.below(2);
      }
      tags.push_back(Tag{});
      auto probs = deriveBucketDistribution(cum, tags);
      CHECK(probs.back() == 0.0);
      for (std::size_t i = 0; i + 1 < tags.size(); ++i) {
        CHECK(std::abs(probs[i] - bruteInclusion(n, pmf, tags[i].l, tags[i].r)) < 1e-12);
      }
    }
  }
}

TEST_CASE("fixed-width inclusion") {
  FixedWidthRanges f(100, 10);
  auto pmf = [](Key x, Key y) { return (y == x + 9 && x <= 91) ? 1.0 / 91.0 : 0.0; };
  for (auto [l, r] : std::vector<std::pair<Key, Key>>{{1, 1}, {5, 20}, {50, 50}, {95, 100}, {1, 100}}) {
    CHECK(f.inclusion(l, r) == doctest::Approx(bruteInclusion(100, pmf, l, r)).epsilon(1e-12));
  }
}

TEST_CASE("covering spans") {
  std::vector<Tag> tags{{1, 3}, {5, 7}, {9, 9}, {}};
  CHECK(coveringSpan(tags, 4, 4).empty);
  auto s = coveringSpan(tags, 2, 6);
  CHECK(!s.empty);
  CHECK(s.first == 0);
  CHECK(s.last == 1);
  CHECK(coveringSpan(tags, 1, 9).size() == 3);
  CHECK(coveringSpan(tags, 10, 20).empty);

  std::vector<Tag> many;
  for (Key i = 0; i < 1024; ++i) many.push_back(Tag{10 * i + 1, 10 * i + 10});
  std::size_t probes = 0;
  auto span = coveringSpan(many, 505, 777, &probes);
  CHECK(span.first == 50);
  CHECK(span.last == 77);
  CHECK(probes <= 2 * 11 + 2);
}

TEST_CASE("result filtering") {
  auto recs = recordsOf({1, 3, 5});
  CHECK(filterResult(recs, 2, 4).size() == 1);
  CHECK(filterResult(recs, 2, 4)[0].key == 3);

  std::vector<Record> dup{Record{7, 5, false, Bytes(4, 'A')}, Record{7, 9, true, Bytes(4, 0)}, Record::dummy(4)};
  CHECK(filterResult(dup, 1, 10).empty());
  std::vector<Record> upd{Record{7, 9, false, Bytes(4, 'B')}, Record{7, 5, false, Bytes(4, 'A')}};
  auto got = filterResult(upd, 1, 10);
  REQUIRE(got.size() == 1);
  CHECK(got[0].value == Bytes(4, 'B'));
}

TEST_CASE("registry completion gate and partition") {
  std::vector<Tag> tags{{1, 3}, {5, 7}, {9, 9}};
  PendingRegistry reg;
  std::vector<std::uint64_t> enq;
  auto id = reg.open(2, 6, 42, 0);
  partition(tags, 2, 6, id, 1, reg, [&](std::uint64_t b) { enq.push_back(b); });
  CHECK(enq == std::vector<std::uint64_t>{0, 1});
  CHECK(!reg.finishRegistration(id));
  CHECK(reg.find(id)->cnt == 2);

  auto recs0 = recordsOf({1, 3});
  CHECK(reg.reply(BucketRef{1, 0}, recs0).empty());
  auto recs1 = recordsOf({5, 7});
  auto done = reg.reply(BucketRef{1, 1}, recs1);
  REQUIRE(done.size() == 1);
  CHECK(done[0].handle == 42);
  auto result = filterResult(done[0].data, 2, 6);
  REQUIRE(result.size() == 2);
  CHECK(result[0].key == 3);
  CHECK(result[1].key == 5);
  CHECK(reg.openQueries() == 0);

  auto gap = reg.open(4, 4, 7, 0);
  partition(tags, 4, 4, gap, 1, reg, [&](std::uint64_t) { FAIL("nothing to enqueue"); });
  auto immediate = reg.finishRegistration(gap);
  REQUIRE(immediate);
  CHECK(immediate->data.empty());
}
