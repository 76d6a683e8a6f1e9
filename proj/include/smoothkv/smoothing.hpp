#pragma once

#include <deque>
#include <map>
#include <optional>
#include <span>
#include <unordered_set>
#include <variant>

#include "smoothkv/backend.hpp"
#include "smoothkv/crypto.hpp"
#include "smoothkv/pool.hpp"

namespace smoothkv {

/// Replica allocation and fake-access distribution for one set of logical
/// buckets. Slots enumerate replicas bucket-major, then dummy slots.
///
/// With a fair real/fake coin, every slot is touched with probability
/// 1/slots per batch slot: (1/2) * pi(k)/R(k) + (1/2) * fake(k, j) = 1/slots.
struct SmoothingState {
  std::size_t slots = 0;                    // n' = ceil(alpha * B)
  std::vector<std::uint32_t> replicas;      // R(k)
  std::vector<std::size_t> firstSlot;       // slot of (k, 0)
  std::size_t dummySlots = 0;
  std::vector<double> bucketProb;           // normalized access distribution
  std::vector<double> fakeDist;             // per slot

  std::size_t logicalBuckets() const { return replicas.size(); }
  std::size_t realSlots() const { return slots - dummySlots; }
  std::size_t slotOf(std::uint64_t bucket, std::uint32_t replica) const;
  /// (bucket, replica) of a slot; dummy slot d maps to (B + d, 0).
  std::pair<std::uint64_t, std::uint32_t> replicaOfSlot(std::size_t slot) const;
  bool isDummyBucket(std::uint64_t bucket) const { return bucket >= logicalBuckets(); }

  /// Replica-level client distribution pi(k)/R(k) (dummies excluded).
  ReplicaDistribution clientDistribution(std::uint64_t epoch) const;
  /// Fake distribution over all slots, dummies included.
  ReplicaDistribution fakeDistribution(std::uint64_t epoch) const;
  std::size_t residentBytes() const;
};

/// Throws ConfigError on a malformed distribution, alpha < 1, or when the
/// replica counts do not fit in ceil(alpha * B) slots.
SmoothingState initSmoothing(std::span<const double> bucketDistribution, double alpha);

/// Normalizes non-negative weights to a probability mass (uniform if all zero).
std::vector<double> normalizeDistribution(std::span<const double> weights);

/// Pancake-style release of pending requests in arrival order; the control
/// against which the sampling pool is compared.
class FifoQueue {
 public:
  FifoQueue() = default;
  explicit FifoQueue(ReplicaDistribution distribution) : distribution_(std::move(distribution)) {}
  void put(const ReplicaId& replica);
  /// Front of the queue, or a synthetic client-distribution draw when empty.
  PoolItem get(Rng& rng);
  std::size_t size() const { return queue_.size(); }

 private:
  ReplicaDistribution distribution_;
  std::deque<ReplicaId> queue_;
};

struct KvOp {
  enum class Kind { Read, Write };
  Kind kind = Kind::Read;
  std::uint64_t key = 0;
  Bytes value;  // writes only
  std::uint64_t handle = 0;
};

struct KvResponse {
  std::uint64_t handle = 0;
  KvOp::Kind kind = KvOp::Kind::Read;
  std::uint64_t key = 0;
  Bytes value;  // value read, or value written
  std::uint64_t registeredBatch = 0;
  std::uint64_t answeredBatch = 0;
  std::uint64_t latencyBatches() const { return answeredBatch - registeredBatch; }
};

struct BatchSlot {
  Label label{};
  bool fake = false;
  ReplicaId replica;
  /// Real slot filled by a padding draw rather than a client request.
  bool synthetic = false;
};

struct BatchPlan {
  std::vector<BatchSlot> slots;
};

struct BatchOutcome {
  std::vector<KvResponse> responses;
  std::vector<StoreEntry> writebacks;
};

/// A frequency-smoothed encrypted key-value store: the proxy side of a
/// single-level store holding one fixed-length value per key.
class SmoothedKv {
 public:
  enum class Release { Pool, Fifo };

  struct Options {
    double alpha = 2.0;
    std::size_t theta = 5;
    WeightPolicy policy = WeightPolicy::constant();
    Release release = Release::Pool;
    std::size_t batchSize = 3;
    std::uint64_t epoch = 0;
  };

  /// Seals ceil(alpha * B) replicas/dummies of `values` and uploads them.
  SmoothedKv(crypto::KeyMaterial keys, std::span<const double> keyDistribution, std::span<const Bytes> values,
             Options options, Backend& backend, Rng rng);

  /// Appends `op` to its key's pending list and enqueues a random replica
  /// of the key.
  void registerOp(KvOp op);
  BatchPlan buildBatch();
  /// Resolves pending operations and produces write-backs for every slot.
  /// `payloads` are the decrypted slot contents in plan order.
  BatchOutcome applyBatchResults(const BatchPlan& plan, std::span<const Bytes> payloads);
  /// buildBatch + fetch + decrypt + apply + write back.
  std::vector<KvResponse> runBatch();
  /// Plan of the most recent runBatch, for instrumentation.
  const BatchPlan& lastPlan() const { return lastPlan_; }

  const SmoothingState& state() const { return state_; }
  const Pool& pool() const { return pool_; }
  std::size_t pendingKeys() const { return pending_.size(); }
  std::size_t cachedKeys() const { return cache_.size(); }
  std::uint64_t batchesRun() const { return batches_; }
  std::size_t valueLength() const { return valueLen_; }
  Label labelOf(const ReplicaId& r) const;

  /// For tests: force the next slots' real/fake coins (true = fake).
  void forceCoins(std::vector<bool> coins) { forcedCoins_ = std::deque<bool>(coins.begin(), coins.end()); }

 private:
  struct Pending {
    KvOp op;
    std::uint64_t registeredBatch;
  };
  struct CacheEntry {
    Bytes value;
    std::vector<bool> fresh;  // per replica
  };

  PoolItem releaseReal();

  crypto::KeyMaterial keys_;
  Options options_;
  Backend& backend_;
  Rng rng_;
  SmoothingState state_;
  ReplicaDistribution fakeDist_;
  Pool pool_;
  FifoQueue fifo_;
  std::size_t valueLen_ = 0;
  std::map<std::uint64_t, std::vector<Pending>> pending_;
  std::map<std::uint64_t, CacheEntry> cache_;
  std::uint64_t batches_ = 0;
  std::deque<bool> forcedCoins_;
  BatchPlan lastPlan_;
};

}  // namespace smoothkv
