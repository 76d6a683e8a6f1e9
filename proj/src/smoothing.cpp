#include "smoothkv/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace smoothkv {

std::size_t SmoothingState::slotOf(std::uint64_t bucket, std::uint32_t replica) const {
  if (bucket >= logicalBuckets()) return realSlots() + static_cast<std::size_t>(bucket - logicalBuckets());
  return firstSlot[bucket] + replica;
}

std::pair<std::uint64_t, std::uint32_t> SmoothingState::replicaOfSlot(std::size_t slot) const {
  if (slot >= realSlots()) return {logicalBuckets() + (slot - realSlots()), 0};
  auto it = std::upper_bound(firstSlot.begin(), firstSlot.end(), slot);
  auto bucket = static_cast<std::uint64_t>(std::distance(firstSlot.begin(), it) - 1);
  return {bucket, static_cast<std::uint32_t>(slot - firstSlot[bucket])};
}

ReplicaDistribution SmoothingState::clientDistribution(std::uint64_t epoch) const {
  std::vector<ReplicaId> ids;
  std::vector<double> probs;
  ids.reserve(realSlots());
  probs.reserve(realSlots());
  for (std::size_t k = 0; k < logicalBuckets(); ++k) {
    for (std::uint32_t j = 0; j < replicas[k]; ++j) {
      ids.push_back(ReplicaId{epoch, k, j});
      probs.push_back(bucketProb[k] / replicas[k]);
    }
  }
  return ReplicaDistribution(std::move(ids), std::move(probs));
}

ReplicaDistribution SmoothingState::fakeDistribution(std::uint64_t epoch) const {
  std::vector<ReplicaId> ids;
  ids.reserve(slots);
  for (std::size_t s = 0; s < slots; ++s) {
    auto [b, r] = replicaOfSlot(s);
    ids.push_back(ReplicaId{epoch, b, r});
  }
  return ReplicaDistribution(std::move(ids), fakeDist);
}

std::size_t SmoothingState::residentBytes() const {
  return sizeof(*this) + replicas.capacity() * sizeof(std::uint32_t) + firstSlot.capacity() * sizeof(std::size_t) +
         (bucketProb.capacity() + fakeDist.capacity()) * sizeof(double);
}

std::vector<double> normalizeDistribution(std::span<const double> weights) {
  std::vector<double> out(weights.begin(), weights.end());
  double sum = 0.0;
  for (double w : out) {
    if (!(w >= 0.0)) throw ConfigError("negative access weight");
    sum += w;
  }
  if (out.empty()) return out;
  if (sum <= 0.0) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(out.size()));
  } else {
    for (double& w : out) w /= sum;
  }
  return out;
}

SmoothingState initSmoothing(std::span<const double> bucketDistribution, double alpha) {
  if (!(alpha >= 1.0)) throw ConfigError("storage overhead alpha must be >= 1");
  const std::size_t buckets = bucketDistribution.size();
  if (buckets == 0) throw ConfigError("cannot smooth an empty bucket set");
  double sum = 0.0;
  for (double p : bucketDistribution) {
    if (!(p >= 0.0)) throw ConfigError("bucket distribution has a negative entry");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("bucket distribution sums to " + std::to_string(sum));

  SmoothingState s;
  s.slots = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(buckets) - 1e-9));
  s.bucketProb.assign(bucketDistribution.begin(), bucketDistribution.end());
  s.replicas.resize(buckets);
  s.firstSlot.resize(buckets);
  const double half = static_cast<double>(s.slots) / 2.0;
  std::size_t used = 0;
  for (std::size_t k = 0; k < buckets; ++k) {
    // The epsilon keeps exact multiples from rounding up one replica too many.
    double want = std::ceil(s.bucketProb[k] * half - 1e-9);
    s.replicas[k] = static_cast<std::uint32_t>(std::max(1.0, want));
    s.firstSlot[k] = used;
    used += s.replicas[k];
  }
  if (used > s.slots) {
    throw ConfigError("replica allocation needs " + std::to_string(used) + " slots but only " +
                      std::to_string(s.slots) + " are available");
  }
  s.dummySlots = s.slots - used;

  const double uniform = 2.0 / static_cast<double>(s.slots);
  s.fakeDist.resize(s.slots);
  for (std::size_t k = 0; k < buckets; ++k) {
    double f = std::max(0.0, uniform - s.bucketProb[k] / s.replicas[k]);
    for (std::uint32_t j = 0; j < s.replicas[k]; ++j) s.fakeDist[s.firstSlot[k] + j] = f;
  }
  for (std::size_t d = 0; d < s.dummySlots; ++d) s.fakeDist[used + d] = uniform;
  // Renormalize away rounding so the mass is exact to machine precision.
  double total = std::accumulate(s.fakeDist.begin(), s.fakeDist.end(), 0.0);
  for (double& f : s.fakeDist) f /= total;
  return s;
}

void FifoQueue::put(const ReplicaId& replica) { queue_.push_back(replica); }

PoolItem FifoQueue::get(Rng& rng) {
  if (queue_.empty()) return PoolItem{distribution_.sample(rng), true};
  ReplicaId r = queue_.front();
  queue_.pop_front();
  return PoolItem{r, false};
}

SmoothedKv::SmoothedKv(crypto::KeyMaterial keys, std::span<const double> keyDistribution, std::span<const Bytes> values,
                       Options options, Backend& backend, Rng rng)
    : keys_(keys), options_(options), backend_(backend), rng_(std::move(rng)) {
  if (values.size() != keyDistribution.size()) throw ConfigError("one value per key is required");
  if (options_.batchSize == 0) throw ConfigError("batch size must be positive");
  valueLen_ = values.empty() ? 0 : values.front().size();
  for (const auto& v : values) {
    if (v.size() != valueLen_) throw ConfigError("all values must have the same length");
  }
  state_ = initSmoothing(keyDistribution, options_.alpha);
  fakeDist_ = state_.fakeDistribution(options_.epoch);
  auto client = state_.clientDistribution(options_.epoch);
  if (options_.release == Release::Pool) {
    pool_ = Pool::setup(options_.theta, client, options_.policy, rng_);
  } else {
    fifo_ = FifoQueue(client);
  }

  std::vector<StoreEntry> entries;
  entries.reserve(state_.slots);
  for (std::size_t s = 0; s < state_.slots; ++s) {
    auto [b, r] = state_.replicaOfSlot(s);
    Label label = labelOf(ReplicaId{options_.epoch, b, r});
    Bytes payload;
    if (state_.isDummyBucket(b)) {
      payload.resize(valueLen_);
      crypto::secureRandom(payload);
    } else {
      payload = values[b];
    }
    entries.push_back(StoreEntry{label, crypto::sealBucket(keys_.seal, payload, label)});
  }
  backend_.putBatch(entries);
}

Label SmoothedKv::labelOf(const ReplicaId& r) const {
  return crypto::labelFor(keys_.label, r.epoch, r.bucket, r.replica);
}

void SmoothedKv::registerOp(KvOp op) {
  if (op.key >= state_.logicalBuckets()) throw ConfigError("key " + std::to_string(op.key) + " out of range");
  if (op.kind == KvOp::Kind::Write && op.value.size() != valueLen_) {
    throw ConfigError("written value must be " + std::to_string(valueLen_) + " bytes");
  }
  const std::uint64_t key = op.key;
  pending_[key].push_back(Pending{std::move(op), batches_});
  // Every operation issues one access; any replica of the key answers all
  // operations pending on it.
  ReplicaId id{options_.epoch, key, static_cast<std::uint32_t>(rng_.below(state_.replicas[key]))};
  if (options_.release == Release::Pool) {
    pool_.put(id);
  } else {
    fifo_.put(id);
  }
}

PoolItem SmoothedKv::releaseReal() {
  return options_.release == Release::Pool ? pool_.release(rng_) : fifo_.get(rng_);
}

BatchPlan SmoothedKv::buildBatch() {
  BatchPlan plan;
  plan.slots.reserve(options_.batchSize);
  for (std::size_t i = 0; i < options_.batchSize; ++i) {
    bool fake;
    if (!forcedCoins_.empty()) {
      fake = forcedCoins_.front();
      forcedCoins_.pop_front();
    } else {
      fake = rng_.coin();
    }
    PoolItem item = fake ? PoolItem{fakeDist_.sample(rng_), false} : releaseReal();
    plan.slots.push_back(BatchSlot{labelOf(item.replica), fake, item.replica, item.synthetic});
  }
  return plan;
}

BatchOutcome SmoothedKv::applyBatchResults(const BatchPlan& plan, std::span<const Bytes> payloads) {
  if (payloads.size() != plan.slots.size()) throw ConfigError("payload count does not match the batch");
  const std::uint64_t batchNo = batches_ + 1;
  BatchOutcome out;
  // Values already written back in this batch, so a label sampled twice
  // sees its own earlier write rather than the stale fetched copy.
  std::unordered_map<Label, Bytes, LabelHash> written;

  for (std::size_t i = 0; i < plan.slots.size(); ++i) {
    const BatchSlot& slot = plan.slots[i];
    auto prior = written.find(slot.label);
    Bytes received = prior != written.end() ? prior->second : payloads[i];
    Bytes value = received;

    if (!state_.isDummyBucket(slot.replica.bucket)) {
      const std::uint64_t key = slot.replica.bucket;
      auto cached = cache_.find(key);
      if (cached != cache_.end()) value = cached->second.value;
      bool changed = false;

      auto pend = pending_.find(key);
      if (!slot.fake && !slot.synthetic && pend != pending_.end()) {
        for (auto& p : pend->second) {
          if (p.op.kind == KvOp::Kind::Write) {
            value = p.op.value;
            changed = true;
          }
          out.responses.push_back(KvResponse{p.op.handle, p.op.kind, key, value, p.registeredBatch, batchNo});
        }
        pending_.erase(pend);
      }

      if (changed || cached != cache_.end() || value != received) {
        auto& entry = cache_[key];
        if (changed || entry.fresh.empty()) entry.fresh.assign(state_.replicas[key], false);
        entry.value = value;
        entry.fresh[slot.replica.replica] = true;
        if (std::all_of(entry.fresh.begin(), entry.fresh.end(), [](bool f) { return f; })) cache_.erase(key);
      }
    }

    written[slot.label] = value;
    out.writebacks.push_back(StoreEntry{slot.label, crypto::sealBucket(keys_.seal, value, slot.label)});
  }
  batches_ = batchNo;
  return out;
}

std::vector<KvResponse> SmoothedKv::runBatch() {
  BatchPlan plan = buildBatch();
  std::vector<Label> labels;
  labels.reserve(plan.slots.size());
  for (const auto& s : plan.slots) labels.push_back(s.label);
  auto ciphertexts = backend_.getBatch(labels);
  std::vector<Bytes> payloads;
  payloads.reserve(ciphertexts.size());
  for (std::size_t i = 0; i < ciphertexts.size(); ++i) {
    payloads.push_back(crypto::openBucket(keys_.seal, ciphertexts[i], labels[i]));
  }
  BatchOutcome outcome = applyBatchResults(plan, payloads);
  backend_.putBatch(outcome.writebacks);
  lastPlan_ = std::move(plan);
  return std::move(outcome.responses);
}

}  // namespace smoothkv
