#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "smoothkv/rangestore.hpp"

namespace smoothkv::dyn {

/// Binomial coefficient, saturating at UINT64_MAX.
std::uint64_t binom(std::uint64_t n, std::uint64_t r);

/// Greedy combinatorial-number-system decomposition of t into
/// sum_i C(D[i], i + 1) with 0 <= D[0] < D[1] < ... < D[k-1].
std::vector<std::uint64_t> decomposeOracle(std::uint64_t t, std::size_t k);

/// Incremental k-binomial bookkeeping over bucket-sized insertion units.
class BinomialCounter {
 public:
  explicit BinomialCounter(std::size_t k);
  /// Starts from the decomposition of t units (bulk load).
  static BinomialCounter fromTotal(std::uint64_t t, std::size_t k);
  /// Throws ConfigError unless the digits are strictly increasing.
  static BinomialCounter fromDigits(std::vector<std::uint64_t> digits);

  /// Adds one unit: levels [0, result] are destroyed and rebuilt as level `result`.
  std::size_t advance();

  std::size_t k() const { return d_.size(); }
  const std::vector<std::uint64_t>& digits() const { return d_; }
  std::uint64_t levelUnits(std::size_t level) const { return binom(d_[level], level + 1); }
  std::uint64_t totalUnits() const;

 private:
  std::vector<std::uint64_t> d_;  // the trailing +infinity sentinel is implicit
};

struct RebuildEvent {
  std::size_t newLevel = 0;               // levels [0, newLevel] were destroyed
  std::uint64_t destroyedBuckets = 0;
  std::uint64_t touchedRecords = 0;       // Z * (destroyed buckets + 1)
  std::size_t mergeRounds = 0;
};

/// Proxy-side staging of fresh records; emits one sorted bucket-unit per Z records.
class InsertBuffer {
 public:
  explicit InsertBuffer(std::size_t z) : z_(z) {}
  std::optional<std::vector<Record>> add(Record record);
  const std::vector<Record>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  std::size_t capacity() const { return z_; }

 private:
  std::size_t z_;
  std::vector<Record> records_;
};

/// Tags of one level build.
struct LevelView {
  std::uint64_t epoch = 0;
  std::span<const range::Tag> tags;
};

/// Re-partitions every query waiting on a destroyed bucket over the new
/// level, restricted to the intersection of the query and the old tag.
/// Returns queries left with nothing outstanding.
std::vector<range::PendingQuery> transformPending(range::PendingRegistry& registry,
                                                  std::span<const LevelView> destroyed, const LevelView& fresh,
                                                  const std::function<void(std::uint64_t bucket)>& enqueue);

}  // namespace smoothkv::dyn
