#pragma once

#include <memory>
#include <span>
#include <vector>

#include "smoothkv/backend.hpp"
#include "smoothkv/crypto.hpp"
#include "smoothkv/dynamize.hpp"
#include "smoothkv/rangestore.hpp"
#include "smoothkv/smoothing.hpp"

namespace smoothkv {

/// Proxy-side description of one stored level. Buckets are addressed by
/// logical index (tag order) in queries and by physical index in labels.
struct LevelImage {
  std::uint64_t epoch = 0;
  std::uint64_t units = 0;
  std::vector<range::Tag> tags;            // logical order
  std::vector<std::uint64_t> physicalOf;   // logical -> physical
  std::vector<std::uint64_t> logicalOf;    // physical -> logical
  SmoothingState smoothing;                // over physical buckets
  double requestWeight = 0.0;              // sum of bucket inclusion probabilities

  bool empty() const { return tags.empty(); }
  std::size_t buckets() const { return tags.size(); }
  std::size_t residentBytes() const;
};

struct EnclaveConfig {
  std::size_t z = 512;
  std::size_t valueLen = 16;
  double alpha = 2.0;
  double epsilon = 1.0;
  std::uint64_t capacity = 0;  // DO-merge bin capacity
  bool parallelMerge = false;
};

/// Simulated trusted rebuild component running next to the server. It sees
/// every ciphertext of the levels it rebuilds but holds keys only because
/// the proxy handed them over at construction (the attestation step).
class Enclave {
 public:
  Enclave(crypto::KeyMaterial keys, Backend& backend, EnclaveConfig config, Rng rng);

  /// Pads to `units` buckets, shuffles bucket placement, replicates and uploads.
  LevelImage buildLevel(std::vector<Record> sorted, std::uint64_t units, std::uint64_t epoch,
                        const range::RangeDistribution& queries);

  /// Records of replica 0 of every bucket of the level, in logical order.
  std::vector<Record> fetchLevel(const LevelImage& level);

  struct RebuildOutput {
    LevelImage level;
    std::size_t mergeRounds = 0;
    /// Tombstones purged because no older level remains. Queries in flight
    /// may hold values they hide, read earlier from a destroyed level.
    std::vector<Record> droppedTombstones;
  };
  /// Merges `fresh` with the destroyed levels, purges superseded records
  /// (and tombstones when `dropTombstones`), and builds the result as one
  /// level. Destroyed levels stay on the server until eraseLevel.
  RebuildOutput rebuild(std::span<const LevelImage* const> destroyed, std::vector<Record> fresh,
                        std::uint64_t units, std::uint64_t epoch, const range::RangeDistribution& queries,
                        bool dropTombstones);

  void eraseLevel(const LevelImage& level);
  std::vector<Label> labelsOf(const LevelImage& level) const;

  const EnclaveConfig& config() const { return config_; }

 private:
  crypto::KeyMaterial keys_;
  Backend& backend_;
  EnclaveConfig config_;
  Rng rng_;
};

/// Keeps the highest-seq record per key, drops dummies and, optionally,
/// tombstones. Input sorted by (key, seq).
std::vector<Record> purgeSuperseded(std::vector<Record> sorted, bool dropTombstones,
                                    std::vector<Record>* dropped = nullptr);

}  // namespace smoothkv
