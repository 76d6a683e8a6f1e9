#include "smoothkv/enclave.hpp"

#include <numeric>

#include "smoothkv/domerge.hpp"
#include "smoothkv/osort.hpp"

namespace smoothkv {

std::size_t LevelImage::residentBytes() const {
  return sizeof(*this) + tags.capacity() * sizeof(range::Tag) +
         (physicalOf.capacity() + logicalOf.capacity()) * sizeof(std::uint64_t) + smoothing.residentBytes();
}

Enclave::Enclave(crypto::KeyMaterial keys, Backend& backend, EnclaveConfig config, Rng rng)
    : keys_(keys), backend_(backend), config_(config), rng_(std::move(rng)) {
  if (config_.z == 0) throw ConfigError("bucket size must be positive");
}

LevelImage Enclave::buildLevel(std::vector<Record> sorted, std::uint64_t units, std::uint64_t epoch,
                               const range::RangeDistribution& queries) {
  const std::size_t z = config_.z;
  const std::size_t len = config_.valueLen;
  if (sorted.size() > units * z) throw ConfigError("level overflow: records exceed its bucket units");
  std::vector<range::Bucket> logical = range::bucketize(std::move(sorted), z, len);
  while (logical.size() < units) {
    range::Bucket b;
    b.slots.assign(z, Record::dummy(len));
    logical.push_back(std::move(b));
  }

  LevelImage level;
  level.epoch = epoch;
  level.units = units;
  level.tags = range::tagsOf(logical);

  // Physical placement is a uniformly random permutation of logical buckets.
  std::vector<std::uint64_t> order(logical.size());
  std::iota(order.begin(), order.end(), 0);
  osort::obliviousShuffle(order, rng_);
  level.logicalOf = order;
  level.physicalOf.resize(order.size());
  for (std::size_t p = 0; p < order.size(); ++p) level.physicalOf[order[p]] = p;

  std::vector<double> inclusion = range::deriveBucketDistribution(queries, level.tags);
  level.requestWeight = std::accumulate(inclusion.begin(), inclusion.end(), 0.0);
  std::vector<double> physical(order.size());
  for (std::size_t p = 0; p < order.size(); ++p) physical[p] = inclusion[order[p]];
  level.smoothing = initSmoothing(normalizeDistribution(physical), config_.alpha);

  const std::size_t plainSize = range::serializedBucketSize(z, len);
  std::vector<StoreEntry> entries;
  entries.reserve(level.smoothing.slots);
  for (std::size_t s = 0; s < level.smoothing.slots; ++s) {
    auto [p, j] = level.smoothing.replicaOfSlot(s);
    Label label = crypto::labelFor(keys_.label, epoch, p, j);
    Bytes plain;
    if (level.smoothing.isDummyBucket(p)) {
      plain.resize(plainSize);
      crypto::secureRandom(plain);
    } else {
      plain = range::serializeBucket(logical[order[p]].slots, z, len);
    }
    entries.push_back(StoreEntry{label, crypto::sealBucket(keys_.seal, plain, label)});
  }
  backend_.putBatch(entries);
  return level;
}

std::vector<Label> Enclave::labelsOf(const LevelImage& level) const {
  std::vector<Label> labels;
  labels.reserve(level.smoothing.slots);
  for (std::size_t s = 0; s < level.smoothing.slots; ++s) {
    auto [p, j] = level.smoothing.replicaOfSlot(s);
    labels.push_back(crypto::labelFor(keys_.label, level.epoch, p, j));
  }
  return labels;
}

std::vector<Record> Enclave::fetchLevel(const LevelImage& level) {
  std::vector<Label> labels;
  labels.reserve(level.buckets());
  for (std::size_t b = 0; b < level.buckets(); ++b) {
    labels.push_back(crypto::labelFor(keys_.label, level.epoch, level.physicalOf[b], 0));
  }
  std::vector<Bytes> cts = backend_.getBatch(labels);
  std::vector<Record> out;
  out.reserve(level.buckets() * config_.z);
  for (std::size_t b = 0; b < labels.size(); ++b) {
    Bytes plain = crypto::openBucket(keys_.seal, cts[b], labels[b]);
    auto records = range::deserializeBucket(plain, config_.z, config_.valueLen);
    for (auto& r : records) out.push_back(std::move(r));
  }
  return out;
}

std::vector<Record> purgeSuperseded(std::vector<Record> sorted, bool dropTombstones, std::vector<Record>* dropped) {
  std::vector<Record> out;
  out.reserve(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    Record& r = sorted[i];
    if (r.isDummy()) continue;
    if (i + 1 < sorted.size() && sorted[i + 1].key == r.key) continue;
    if (dropTombstones && r.tombstone) {
      if (dropped) dropped->push_back(std::move(r));
      continue;
    }
    out.push_back(std::move(r));
  }
  return out;
}

Enclave::RebuildOutput Enclave::rebuild(std::span<const LevelImage* const> destroyed, std::vector<Record> fresh,
                                        std::uint64_t units, std::uint64_t epoch,
                                        const range::RangeDistribution& queries, bool dropTombstones) {
  // Fetch everything first so an integrity failure leaves no partial state.
  std::vector<std::vector<Record>> arrays;
  arrays.reserve(destroyed.size() + 1);
  arrays.push_back(std::move(fresh));
  for (const LevelImage* level : destroyed) arrays.push_back(fetchLevel(*level));

  RebuildOutput out;
  std::vector<Record> merged = domerge::kWayDOMerge(std::move(arrays), config_.capacity, config_.epsilon, rng_,
                                                    RecordLess{}, config_.parallelMerge, &out.mergeRounds);
  out.level = buildLevel(purgeSuperseded(std::move(merged), dropTombstones, &out.droppedTombstones), units, epoch, queries);
  return out;
}

void Enclave::eraseLevel(const LevelImage& level) {
  std::vector<Label> labels = labelsOf(level);
  backend_.eraseBatch(labels);
}

}  // namespace smoothkv
