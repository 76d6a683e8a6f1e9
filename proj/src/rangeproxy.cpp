#include "smoothkv/rangeproxy.hpp"

#include <algorithm>
#include <set>

#include "smoothkv/domerge.hpp"

namespace smoothkv {

namespace {

std::uint64_t resolveCapacity(const RangeStoreConfig& c) {
  if (c.binCapacity != 0) return c.binCapacity;
  return domerge::computeBinCapacity(c.z, c.epsilon, c.lambda).capacity;
}

}  // namespace

RangeProxy::RangeProxy(RangeStoreConfig config, crypto::KeyMaterial keys, Backend& backend,
                       std::shared_ptr<const range::RangeDistribution> queries, Rng rng)
    : config_(config),
      keys_(keys),
      backend_(backend),
      queries_(std::move(queries)),
      rng_(rng.fork(0)),
      enclave_(keys, backend,
               EnclaveConfig{config.z, config.valueLen, config.alpha, config.epsilon, resolveCapacity(config),
                             config.parallelMerge},
               rng.fork(1)),
      counter_(config.k),
      buffer_(config.z),
      pool_(Pool::deferred(config.theta, config.policy)) {
  if (!queries_) throw ConfigError("a query distribution is required");
  if (config_.batchSize == 0) throw ConfigError("batch size must be positive");
  levels_.resize(config_.k);
}

void RangeProxy::bulkLoad(std::vector<std::pair<Key, Bytes>> records) {
  for (const auto& level : levels_) {
    if (!level.empty()) throw ConfigError("bulk load requires an empty store");
  }
  const Key n = queries_->domain();
  std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Record> sorted;
  sorted.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& [key, value] = records[i];
    if (key < 1 || key > n) throw ConfigError("key " + std::to_string(key) + " outside the domain [1, N]");
    if (value.size() != config_.valueLen) throw ConfigError("value length must be " + std::to_string(config_.valueLen));
    if (i + 1 < records.size() && records[i + 1].first == key) continue;
    sorted.push_back(Record{key, nextSeq_++, false, std::move(value)});
  }
  const std::uint64_t units = (sorted.size() + config_.z - 1) / config_.z;
  counter_ = dyn::BinomialCounter::fromTotal(units, config_.k);
  std::size_t next = 0;
  for (std::size_t i = config_.k; i-- > 0;) {
    const std::uint64_t levelUnits = counter_.levelUnits(i);
    if (levelUnits == 0) continue;
    const std::size_t take = std::min<std::size_t>(levelUnits * config_.z, sorted.size() - next);
    std::vector<Record> chunk(std::make_move_iterator(sorted.begin() + next),
                              std::make_move_iterator(sorted.begin() + next + take));
    next += take;
    levels_[i] = enclave_.buildLevel(std::move(chunk), levelUnits, nextEpoch_++, *queries_);
  }
  refreshDistributions();
}

void RangeProxy::insert(Key key, Bytes value) {
  if (key < 1 || key > queries_->domain()) throw ConfigError("key outside the domain [1, N]");
  if (value.size() != config_.valueLen) throw ConfigError("value length must be " + std::to_string(config_.valueLen));
  if (auto unit = buffer_.add(Record{key, nextSeq_++, false, std::move(value)})) flush(std::move(*unit));
}

void RangeProxy::erase(Key key) {
  if (key < 1 || key > queries_->domain()) throw ConfigError("key outside the domain [1, N]");
  if (auto unit = buffer_.add(Record{key, nextSeq_++, true, Bytes(config_.valueLen, 0)})) flush(std::move(*unit));
}

void RangeProxy::flush(std::vector<Record> unit) {
  // Records leaving the buffer are visible to every query still in flight.
  registry_.forEachOpen([&](range::PendingQuery& q) {
    for (const auto& rec : unit) {
      if (rec.key >= q.l && rec.key <= q.r) q.data.push_back(rec);
    }
  });

  dyn::BinomialCounter next = counter_;
  const std::size_t target = next.advance();
  std::vector<const LevelImage*> destroyed;
  for (std::size_t i = 0; i <= target; ++i) {
    if (!levels_[i].empty()) destroyed.push_back(&levels_[i]);
  }
  bool olderLive = false;
  for (std::size_t i = target + 1; i < levels_.size(); ++i) olderLive = olderLive || !levels_[i].empty();

  const std::uint64_t epoch = nextEpoch_++;
  auto out = enclave_.rebuild(destroyed, std::move(unit), next.levelUnits(target), epoch, *queries_, !olderLive);

  registry_.forEachOpen([&](range::PendingQuery& q) {
    for (const auto& rec : out.droppedTombstones) {
      if (rec.key >= q.l && rec.key <= q.r) q.data.push_back(rec);
    }
  });

  dyn::RebuildEvent event;
  event.newLevel = target;
  for (const auto* level : destroyed) event.destroyedBuckets += level->units;
  event.touchedRecords = config_.z * (event.destroyedBuckets + 1);
  event.mergeRounds = out.mergeRounds;
  rebuilds_.push_back(event);
  epsilonSpent_ += config_.epsilon;
  counter_ = next;

  std::vector<LevelImage> old;
  std::set<std::uint64_t> deadEpochs;
  for (std::size_t i = 0; i <= target; ++i) {
    if (levels_[i].empty()) continue;
    deadEpochs.insert(levels_[i].epoch);
    old.push_back(std::move(levels_[i]));
    levels_[i] = LevelImage{};
  }
  levels_[target] = std::move(out.level);

  refreshDistributions();
  pool_.removeIf([&](const PoolItem& item) { return deadEpochs.contains(item.replica.epoch); }, rng_);

  std::vector<dyn::LevelView> views;
  for (const auto& level : old) views.push_back(dyn::LevelView{level.epoch, level.tags});
  const LevelImage& fresh = levels_[target];
  auto done = dyn::transformPending(registry_, views, dyn::LevelView{fresh.epoch, fresh.tags},
                                    [&](std::uint64_t b) { enqueueBucket(target, b); });
  for (auto& q : done) completed_.push_back(finish(std::move(q)));

  for (const auto& level : old) enclave_.eraseLevel(level);
}

void RangeProxy::refreshDistributions() {
  levelWeights_.assign(levels_.size(), 0.0);
  fakeDists_.assign(levels_.size(), ReplicaDistribution{});
  double total = 0.0;
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    if (levels_[i].empty()) continue;
    // A level no query can reach still receives fake traffic by size.
    levelWeights_[i] = levels_[i].requestWeight > 0.0 ? levels_[i].requestWeight : 1e-12 * levels_[i].buckets();
    total += levelWeights_[i];
  }
  std::vector<ReplicaId> ids;
  std::vector<double> probs;
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    if (levels_[i].empty()) continue;
    levelWeights_[i] /= total;
    const auto& s = levels_[i].smoothing;
    fakeDists_[i] = s.fakeDistribution(levels_[i].epoch);
    for (std::size_t p = 0; p < s.logicalBuckets(); ++p) {
      for (std::uint32_t j = 0; j < s.replicas[p]; ++j) {
        ids.push_back(ReplicaId{levels_[i].epoch, p, j});
        probs.push_back(levelWeights_[i] * s.bucketProb[p] / s.replicas[p]);
      }
    }
  }
  if (total > 0.0) {
    double sum = 0.0;
    for (double p : probs) sum += p;
    for (double& p : probs) p /= sum;
    pool_.resetDistribution(ReplicaDistribution(std::move(ids), std::move(probs)), rng_);
  } else {
    pool_.resetDistribution(ReplicaDistribution{}, rng_);
  }
}

void RangeProxy::enqueueBucket(std::size_t level, std::uint64_t logical) {
  const LevelImage& img = levels_[level];
  const std::uint64_t p = img.physicalOf[logical];
  const auto j = static_cast<std::uint32_t>(rng_.below(img.smoothing.replicas[p]));
  pool_.put(ReplicaId{img.epoch, p, j});
}

void RangeProxy::query(Key l, Key r, std::uint64_t handle) {
  if (l > r) throw ConfigError("empty range");
  const std::uint64_t id = registry_.open(l, r, handle, batches_);
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    if (levels_[i].empty()) continue;
    range::partition(levels_[i].tags, l, r, id, levels_[i].epoch, registry_,
                     [&](std::uint64_t b) { enqueueBucket(i, b); });
  }
  if (auto q = registry_.finishRegistration(id)) completed_.push_back(finish(std::move(*q)));
}

RangeResult RangeProxy::finish(range::PendingQuery q) {
  for (const auto& rec : buffer_.records()) {
    if (rec.key >= q.l && rec.key <= q.r) q.data.push_back(rec);
  }
  RangeResult out;
  out.handle = q.handle;
  out.l = q.l;
  out.r = q.r;
  out.records = range::filterResult(std::move(q.data), q.l, q.r);
  out.registeredBatch = q.registeredBatch;
  out.answeredBatch = batches_;
  return out;
}

std::optional<std::size_t> RangeProxy::levelOfEpoch(std::uint64_t epoch) const {
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    if (!levels_[i].empty() && levels_[i].epoch == epoch) return i;
  }
  return std::nullopt;
}

std::vector<RangeResult> RangeProxy::runBatch() {
  std::vector<RangeResult> results = drainCompleted();
  bool anyLevel = std::any_of(levels_.begin(), levels_.end(), [](const auto& l) { return !l.empty(); });
  if (!anyLevel) return results;

  std::discrete_distribution<std::size_t> pickLevel(levelWeights_.begin(), levelWeights_.end());
  std::vector<ReplicaId> replicas;
  std::vector<bool> fake;
  std::vector<Label> labels;
  for (std::size_t s = 0; s < config_.batchSize; ++s) {
    const bool isFake = rng_.coin();
    ReplicaId r = isFake ? fakeDists_[pickLevel(rng_)].sample(rng_) : pool_.release(rng_).replica;
    replicas.push_back(r);
    fake.push_back(isFake);
    labels.push_back(labelOf(r));
  }
  std::vector<Bytes> cts = backend_.getBatch(labels);
  ++batches_;

  std::vector<StoreEntry> writebacks;
  writebacks.reserve(labels.size());
  for (std::size_t s = 0; s < labels.size(); ++s) {
    Bytes plain = crypto::openBucket(keys_.seal, cts[s], labels[s]);
    if (!fake[s]) {
      const std::size_t li = *levelOfEpoch(replicas[s].epoch);
      const LevelImage& level = levels_[li];
      if (!level.smoothing.isDummyBucket(replicas[s].bucket)) {
        const std::uint64_t logical = level.logicalOf[replicas[s].bucket];
        auto records = range::deserializeBucket(plain, config_.z, config_.valueLen);
        for (auto& q : registry_.reply(range::BucketRef{level.epoch, logical}, records)) {
          results.push_back(finish(std::move(q)));
        }
      }
    }
    writebacks.push_back(StoreEntry{labels[s], crypto::sealBucket(keys_.seal, plain, labels[s])});
  }
  backend_.putBatch(writebacks);
  return results;
}

std::vector<RangeResult> RangeProxy::drainCompleted() {
  std::vector<RangeResult> out = std::move(completed_);
  completed_.clear();
  return out;
}

std::size_t RangeProxy::liveBuckets() const {
  std::size_t total = 0;
  for (const auto& level : levels_) total += level.buckets();
  return total;
}

std::size_t RangeProxy::serverSlots() const {
  std::size_t total = 0;
  for (const auto& level : levels_) total += level.empty() ? 0 : level.smoothing.slots;
  return total;
}

std::size_t RangeProxy::residentBytes() const {
  std::size_t total = sizeof(*this) + pool_.residentBytes() + registry_.residentBytes();
  for (const auto& level : levels_) total += level.residentBytes();
  for (const auto& d : fakeDists_) total += d.replicas().capacity() * (sizeof(ReplicaId) + sizeof(double));
  for (const auto& rec : buffer_.records()) total += sizeof(Record) + rec.value.capacity();
  return total;
}

RangeProxy::Snapshot RangeProxy::snapshot() const {
  Snapshot s;
  s.levels = levels_;
  s.digits = counter_.digits();
  s.buffer = buffer_.records();
  s.nextSeq = nextSeq_;
  s.nextEpoch = nextEpoch_;
  s.epsilonSpent = epsilonSpent_;
  return s;
}

void RangeProxy::restore(Snapshot snap) {
  if (snap.levels.size() != config_.k || snap.digits.size() != config_.k) {
    throw ConfigError("snapshot was taken with a different k");
  }
  if (snap.buffer.size() >= config_.z) throw ConfigError("snapshot buffer exceeds the bucket size");
  levels_ = std::move(snap.levels);
  counter_ = dyn::BinomialCounter::fromDigits(std::move(snap.digits));
  buffer_ = dyn::InsertBuffer(config_.z);
  for (auto& rec : snap.buffer) buffer_.add(std::move(rec));
  nextSeq_ = snap.nextSeq;
  nextEpoch_ = snap.nextEpoch;
  epsilonSpent_ = snap.epsilonSpent;
  refreshDistributions();
}

}  // namespace smoothkv
