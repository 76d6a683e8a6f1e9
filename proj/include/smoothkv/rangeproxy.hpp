#pragma once

#include <deque>
#include <memory>
#include <optional>

#include "smoothkv/enclave.hpp"

namespace smoothkv {

struct RangeStoreConfig {
  std::size_t z = 512;
  std::size_t valueLen = 16;
  double alpha = 2.0;
  std::size_t theta = 5;
  WeightPolicy policy = WeightPolicy::constant();
  std::size_t k = 8;
  double epsilon = 1.0;
  double lambda = 512.0;
  std::size_t batchSize = 3;
  bool parallelMerge = false;
  /// 0 means computeBinCapacity(z, epsilon, lambda).
  std::uint64_t binCapacity = 0;
};

struct RangeResult {
  std::uint64_t handle = 0;
  Key l = 0;
  Key r = 0;
  std::vector<Record> records;  // live records in [l, r], sorted by key
  std::uint64_t registeredBatch = 0;
  std::uint64_t answeredBatch = 0;
  std::uint64_t latencyBatches() const { return answeredBatch - registeredBatch; }
};

/// Trusted proxy of the dynamic range store: k levels of smoothed buckets,
/// one global sampling pool, and an insert buffer of fewer than Z records.
class RangeProxy {
 public:
  RangeProxy(RangeStoreConfig config, crypto::KeyMaterial keys, Backend& backend,
             std::shared_ptr<const range::RangeDistribution> queries, Rng rng);

  /// Initial load: keys must be distinct-or-later-wins in [1, N]. Records are
  /// laid out as the binomial decomposition of ceil(n / Z) bucket units.
  void bulkLoad(std::vector<std::pair<Key, Bytes>> records);

  void insert(Key key, Bytes value);
  void erase(Key key);

  /// Registers a range query. Queries whose buckets are all already known
  /// to be empty complete immediately and appear in the next drain.
  void query(Key l, Key r, std::uint64_t handle);
  /// One fixed-size batch: real slots from the pool, fake slots from the
  /// level-weighted fake distributions. Returns queries completed by it.
  std::vector<RangeResult> runBatch();
  /// Results completed outside runBatch (registration or rebuild).
  std::vector<RangeResult> drainCompleted();

  const RangeStoreConfig& config() const { return config_; }
  const std::vector<LevelImage>& levels() const { return levels_; }
  const dyn::BinomialCounter& counter() const { return counter_; }
  const std::vector<dyn::RebuildEvent>& rebuilds() const { return rebuilds_; }
  std::size_t bufferedRecords() const { return buffer_.size(); }
  std::size_t openQueries() const { return registry_.openQueries(); }
  std::uint64_t batchesRun() const { return batches_; }
  std::uint64_t binCapacity() const { return enclave_.config().capacity; }
  /// Sequential composition of the per-rebuild merge budgets.
  double epsilonSpent() const { return epsilonSpent_; }
  std::size_t liveBuckets() const;
  std::size_t serverSlots() const;
  /// Tags + smoothing + pool + pending registry + buffer.
  std::size_t residentBytes() const;

  /// Levels, counter and buffer, for reopening a persisted store.
  struct Snapshot {
    std::vector<LevelImage> levels;
    std::vector<std::uint64_t> digits;
    std::vector<Record> buffer;
    std::uint64_t nextSeq = 1;
    std::uint64_t nextEpoch = 1;
    double epsilonSpent = 0.0;
  };
  Snapshot snapshot() const;
  void restore(Snapshot snap);

 private:
  void flush(std::vector<Record> unit);
  void refreshDistributions();
  void enqueueBucket(std::size_t level, std::uint64_t logical);
  RangeResult finish(range::PendingQuery q);
  std::optional<std::size_t> levelOfEpoch(std::uint64_t epoch) const;
  Label labelOf(const ReplicaId& r) const { return crypto::labelFor(keys_.label, r.epoch, r.bucket, r.replica); }

  RangeStoreConfig config_;
  crypto::KeyMaterial keys_;
  Backend& backend_;
  std::shared_ptr<const range::RangeDistribution> queries_;
  Rng rng_;
  Enclave enclave_;
  std::vector<LevelImage> levels_;
  dyn::BinomialCounter counter_;
  dyn::InsertBuffer buffer_;
  Pool pool_;
  std::vector<double> levelWeights_;
  std::vector<ReplicaDistribution> fakeDists_;
  range::PendingRegistry registry_;
  std::vector<RangeResult> completed_;
  std::vector<dyn::RebuildEvent> rebuilds_;
  std::uint64_t nextSeq_ = 1;
  std::uint64_t nextEpoch_ = 1;
  std::uint64_t batches_ = 0;
  double epsilonSpent_ = 0.0;
};

}  // namespace smoothkv
