#pragma once

#include <functional>
#include <map>
#include <optional>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "smoothkv/types.hpp"

namespace smoothkv::range {

/// Key interval [l, r] covered by a bucket's real records. A bucket holding
/// only dummies has l = r = kDummyKey and is never selected by a query.
struct Tag {
  Key l = kDummyKey;
  Key r = kDummyKey;
  bool allDummy() const { return l == kDummyKey; }
  friend bool operator==(const Tag&, const Tag&) = default;
};

struct Bucket {
  Tag tag;
  std::vector<Record> slots;  // exactly Z, real records sorted, then dummies
};

/// Splits sorted records into ceil(n / Z) dummy-padded buckets, in logical order.
/// Throws ConfigError for Z = 0 or unsorted input.
std::vector<Bucket> bucketize(std::vector<Record> sorted, std::size_t z, std::size_t valueLen);
std::vector<Tag> tagsOf(std::span<const Bucket> buckets);

/// Serialized bucket: Z x (key u64 | seq u64 | tombstone u8 | value L), little-endian.
std::size_t serializedBucketSize(std::size_t z, std::size_t valueLen);
Bytes serializeBucket(std::span<const Record> slots, std::size_t z, std::size_t valueLen);
std::vector<Record> deserializeBucket(std::span<const std::uint8_t> data, std::size_t z, std::size_t valueLen);
/// Tag recomputed from a bucket's contents.
Tag tagOfRecords(std::span<const Record> slots);

/// Prior over client range queries on the integer domain [1, N].
class RangeDistribution {
 public:
  virtual ~RangeDistribution() = default;
  virtual Key domain() const = 0;
  /// Probability that a query range intersects [l, r].
  virtual double inclusion(Key l, Key r) const = 0;
};

/// Every range [x, y], 1 <= x <= y <= N, equally likely.
class UniformRanges : public RangeDistribution {
 public:
  explicit UniformRanges(Key n) : n_(n) {}
  Key domain() const override { return n_; }
  double inclusion(Key l, Key r) const override;

 private:
  Key n_;
};

/// Ranges of a fixed width w with a uniformly random start in [1, N - w + 1].
class FixedWidthRanges : public RangeDistribution {
 public:
  FixedWidthRanges(Key n, Key width);
  Key domain() const override { return n_; }
  double inclusion(Key l, Key r) const override;
  Key width() const { return width_; }

 private:
  Key n_;
  Key width_;
};

/// Arbitrary distribution given by its two-dimensional cumulative table
/// cum[x][y] = sum_{i <= x, j <= y} p[i, j], 0 <= x, y <= N.
class CumulativeRangeDist : public RangeDistribution {
 public:
  /// `pmf(i, j)` is the probability of range [i, j] (zero for j < i).
  static CumulativeRangeDist fromPmf(Key n, const std::function<double(Key, Key)>& pmf);
  Key domain() const override { return n_; }
  double inclusion(Key l, Key r) const override;
  double at(Key x, Key y) const { return cum_[x * (n_ + 1) + y]; }

 private:
  Key n_ = 0;
  std::vector<double> cum_;
};

/// [r(2N - r + 1) - l(l - 1)] / [N(N + 1)].
double uniformBucketProbability(Key n, Key l, Key r);

/// Per-bucket inclusion probabilities (all-dummy buckets get 0). Not a
/// probability mass; normalize before using it to smooth accesses.
std::vector<double> deriveBucketDistribution(const RangeDistribution& dist, std::span<const Tag> tags);

/// Logical bucket span [first, last] whose tags intersect [l, r]; `empty`
/// when no bucket can hold a key of the range.
struct Span {
  std::size_t first = 0;
  std::size_t last = 0;
  bool empty = true;
  std::size_t size() const { return empty ? 0 : last - first + 1; }
};

/// Two binary searches over tags sorted by l. `comparisons` counts tag probes.
Span coveringSpan(std::span<const Tag> tags, Key l, Key r, std::size_t* comparisons = nullptr);

/// Keeps keys in [l, r], drops dummies, resolves duplicate keys to the
/// highest sequence number and then drops tombstones. Sorted by key.
std::vector<Record> filterResult(std::vector<Record> records, Key l, Key r);

/// A client range query waiting for buckets.
struct PendingQuery {
  std::uint64_t id = 0;
  Key l = 0;
  Key r = 0;
  std::uint64_t handle = 0;
  std::size_t cnt = 0;
  std::vector<Record> data;
  std::uint64_t registeredBatch = 0;
  bool registering = true;
};

/// Identifies a logical bucket of a specific level build.
struct BucketRef {
  std::uint64_t epoch = 0;
  std::uint64_t bucket = 0;
  friend auto operator<=>(const BucketRef&, const BucketRef&) = default;
};

/// Pending-query bookkeeping: which queries wait on which buckets.
class PendingRegistry {
 public:
  std::uint64_t open(Key l, Key r, std::uint64_t handle, std::uint64_t batch);
  /// Adds the query to a bucket's waiting list (no-op if already there).
  bool attach(std::uint64_t id, BucketRef bucket);
  /// Marks registration complete; returns the query if nothing is outstanding.
  std::optional<PendingQuery> finishRegistration(std::uint64_t id);
  /// Delivers a bucket's records to every waiting query; returns the queries
  /// whose last bucket this was. Clears the bucket's waiting list.
  std::vector<PendingQuery> reply(BucketRef bucket, std::span<const Record> records);
  /// Removes a bucket's waiting list, decrementing each query's count.
  std::vector<std::uint64_t> detach(BucketRef bucket);
  bool hasWaiters(BucketRef bucket) const;
  std::size_t waiterCount(BucketRef bucket) const;
  PendingQuery* find(std::uint64_t id);
  void forEachOpen(const std::function<void(PendingQuery&)>& fn);
  /// Pops a query whose count reached zero outside of reply().
  std::optional<PendingQuery> takeIfDone(std::uint64_t id);
  std::size_t openQueries() const { return queries_.size(); }
  std::size_t residentBytes() const;

 private:
  std::uint64_t nextId_ = 1;
  std::map<std::uint64_t, PendingQuery> queries_;
  std::map<BucketRef, std::vector<std::uint64_t>> waiting_;
};

/// Finds the covering span, attaches the query to each
/// bucket and calls `enqueue` once per bucket. Returns the span.
Span partition(std::span<const Tag> tags, Key l, Key r, std::uint64_t queryId, std::uint64_t epoch,
               PendingRegistry& registry, const std::function<void(std::uint64_t bucket)>& enqueue);

}  // namespace smoothkv::range
