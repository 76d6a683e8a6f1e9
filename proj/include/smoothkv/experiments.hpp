#pragma once

#include <optional>

#include "smoothkv/config.hpp"
#include "smoothkv/leakage.hpp"
#include "smoothkv/smoothing.hpp"

namespace smoothkv::experiments {

enum class KeyWorkload { Markov, Independent, Zipf, Uniform };
KeyWorkload parseKeyWorkload(const std::string& name);
std::string toString(KeyWorkload w);

/// Point-query stream through a single-level smoothed KV store.
struct KvExperiment {
  KeyWorkload workload = KeyWorkload::Markov;
  std::size_t keys = 3;  // Zipf / Uniform only; the chain fixes 3
  double zipfS = 1.1;
  std::size_t queries = 100000;
  double writeFraction = 0.0;
  double alpha = 2.0;
  std::size_t theta = 4;
  WeightPolicy policy = WeightPolicy::constant();
  SmoothedKv::Release release = SmoothedKv::Release::Pool;
  std::size_t batchSize = 3;
  /// Arrival rate; must stay below batchSize / 2 for a stable backlog.
  double queriesPerBatch = 1.0;
  std::size_t valueLen = 16;
  std::uint64_t seed = 1;
};

struct KvExperimentResult {
  std::size_t slots = 0;                // n'
  std::uint64_t batches = 0;
  std::vector<AccessEvent> trace;       // every server access after setup
  std::vector<std::size_t> readSlots;   // slot index of each read, in order
  leak::Matrix transitions;             // over consecutive reads
  double rsd = 0.0;
  std::vector<std::size_t> releaseSlots;  // slot index of each real (pool) slot
  leak::Matrix releaseTransitions;      // over consecutive pool releases
  double releaseRsd = 0.0;
  leak::Uniformity uniformity;
  std::vector<std::uint64_t> latencies;
  leak::LatencySummary latency;
};

KvExperimentResult runKv(const KvExperiment& e);

/// Range queries against a bulk-loaded range store.
struct RangeExperiment {
  std::uint64_t n = 8192;       // records, keys 1..n
  RangeStoreConfig store;
  std::uint64_t width = 0;      // fixed query width; 0 draws uniform ranges
  std::size_t queries = 1000;
  double queriesPerBatch = 1.0;
  std::uint64_t seed = 1;
};

struct RangeExperimentResult {
  std::vector<AccessEvent> trace;       // accesses after the bulk load
  std::vector<Label> reads;
  std::vector<Label> universe;          // every live server label
  std::vector<RangeResult> results;     // by completion
  std::vector<std::uint64_t> latencies;
  std::uint64_t batches = 0;
};

/// Runs `e` on `backend`; the backend must record into `trace`.
RangeExperimentResult runRange(const RangeExperiment& e, Backend& backend, TraceSink& trace);

/// Same query stream, no smoothing: each bucket stored once and every
/// covering bucket read directly. Returns the read labels and the label set.
/// A nonzero `reads` keeps drawing queries until that many reads exist.
std::pair<std::vector<Label>, std::vector<Label>> directAccessReads(const RangeExperiment& e, std::size_t reads = 0);

/// Rebuild cost of `units` sequential unit inserts under k levels, in records
/// touched (Z per destroyed unit plus the new one).
std::uint64_t writeCost(std::uint64_t units, std::size_t k, std::size_t z);

struct StorageReport {
  std::size_t liveBuckets = 0;
  std::size_t serverEntries = 0;
  std::size_t serverPayloadBytes = 0;
  std::size_t proxyResidentBytes = 0;
};
StorageReport storageAccounting(std::uint64_t n, const RangeStoreConfig& config, std::uint64_t seed);

/// Labels of every replica and dummy slot of the proxy's live levels.
std::vector<Label> liveLabels(const RangeProxy& proxy, const crypto::KeyMaterial& keys);

}  // namespace smoothkv::experiments
