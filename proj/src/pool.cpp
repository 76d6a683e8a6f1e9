#include "smoothkv/pool.hpp"

#include <algorithm>
#include <cmath>

namespace smoothkv {

WeightPolicy WeightPolicy::parse(const std::string& text) {
  auto colon = text.find(':');
  std::string name = text.substr(0, colon);
  WeightPolicy p;
  if (name == "constant") {
    p = constant();
  } else if (name == "linear") {
    p = linear();
  } else if (name == "exponential") {
    p = exponential();
  } else {
    throw ConfigError("unknown weight policy '" + text + "'");
  }
  if (colon != std::string::npos) {
    try {
      p.rate = std::stod(text.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("bad weight policy rate in '" + text + "'");
    }
  }
  if (!(p.rate > 0.0) || !std::isfinite(p.rate)) throw ConfigError("weight policy rate must be positive");
  if (p.kind == Kind::Exponential && p.rate < 1.0) throw ConfigError("exponential base must be >= 1");
  return p;
}

std::string WeightPolicy::toString() const {
  switch (kind) {
    case Kind::Constant:
      return "constant";
    case Kind::Linear:
      return "linear:" + std::to_string(rate);
    case Kind::Exponential:
      return "exponential:" + std::to_string(rate);
  }
  return "?";
}

ReplicaDistribution::ReplicaDistribution(std::vector<ReplicaId> replicas, std::vector<double> probabilities)
    : replicas_(std::move(replicas)), probs_(std::move(probabilities)) {
  if (replicas_.size() != probs_.size()) throw ConfigError("replica distribution size mismatch");
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ConfigError("replica probabilities must be non-negative");
    sum += p;
    if (p > 0.0) ++support_;
  }
  if (!replicas_.empty() && std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("replica distribution sums to " + std::to_string(sum));
  }
  if (!replicas_.empty()) sampler_ = std::discrete_distribution<std::size_t>(probs_.begin(), probs_.end());
}

ReplicaId ReplicaDistribution::sample(Rng& rng) const { return replicas_[sampler_(rng)]; }

Pool Pool::setup(std::size_t theta, ReplicaDistribution distribution, WeightPolicy policy, Rng& rng) {
  if (theta > distribution.support()) {
    throw ConfigError("theta=" + std::to_string(theta) + " exceeds the " + std::to_string(distribution.support()) +
                      " distinct replicas available for padding");
  }
  Pool pool;
  pool.theta_ = theta;
  pool.padTarget_ = theta;
  pool.policy_ = policy;
  pool.distribution_ = std::move(distribution);
  pool.pad(rng);
  return pool;
}

Pool Pool::deferred(std::size_t theta, WeightPolicy policy) {
  Pool pool;
  pool.theta_ = theta;
  pool.policy_ = policy;
  return pool;
}

PoolItem Pool::release(Rng& rng) {
  if (!items_.empty()) return get(rng);
  if (distribution_.empty()) throw ConfigError("pool has nothing to release");
  return PoolItem{distribution_.sample(rng), true};
}

bool Pool::put(const ReplicaId& replica) {
  auto it = index_.find(replica);
  if (it != index_.end()) {
    PoolItem& item = items_[it->second];
    if (item.synthetic) {
      item.synthetic = false;
    } else {
      ++owed_[replica];
    }
    return false;
  }
  index_.emplace(replica, items_.size());
  items_.push_back(PoolItem{replica, false});
  enteredAt_.push_back(releases_);
  return true;
}

std::vector<double> Pool::weights() const {
  std::vector<double> w(items_.size(), 1.0);
  switch (policy_.kind) {
    case WeightPolicy::Kind::Constant:
      break;
    case WeightPolicy::Kind::Linear:
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = 1.0 + policy_.rate * static_cast<double>(releases_ - enteredAt_[i]);
      break;
    case WeightPolicy::Kind::Exponential: {
      // Normalized by the oldest item so that the largest weight is 1.
      const double logBase = std::log(policy_.rate);
      std::uint64_t oldest = releases_;
      for (auto e : enteredAt_) oldest = std::min(oldest, e);
      for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = std::exp(-logBase * static_cast<double>(enteredAt_[i] - oldest));
        if (w[i] == 0.0) w[i] = std::numeric_limits<double>::min();
      }
      break;
    }
  }
  return w;
}

std::size_t Pool::sampleIndex(Rng& rng) const {
  if (policy_.kind == WeightPolicy::Kind::Constant) return static_cast<std::size_t>(rng.below(items_.size()));
  const auto w = weights();
  double total = 0.0;
  for (double x : w) total += x;
  double target = rng.uniform01() * total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    target -= w[i];
    if (target < 0.0) return i;
  }
  return w.size() - 1;
}

void Pool::eraseAt(std::size_t i) {
  index_.erase(items_[i].replica);
  const std::size_t last = items_.size() - 1;
  if (i != last) {
    items_[i] = items_[last];
    enteredAt_[i] = enteredAt_[last];
    index_[items_[i].replica] = i;
  }
  items_.pop_back();
  enteredAt_.pop_back();
}

PoolItem Pool::get(Rng& rng) {
  const std::size_t i = sampleIndex(rng);
  PoolItem out = items_[i];
  eraseAt(i);
  ++releases_;
  if (out.synthetic) {
    out.replica = distribution_.sample(rng);
  } else if (auto it = owed_.find(out.replica); it != owed_.end()) {
    if (--it->second == 0) owed_.erase(it);
    put(out.replica);
  }
  pad(rng);
  return out;
}

void Pool::pad(Rng& rng) {
  while (items_.size() < padTarget_) {
    ReplicaId r = distribution_.sample(rng);
    if (index_.contains(r)) continue;
    index_.emplace(r, items_.size());
    items_.push_back(PoolItem{r, true});
    enteredAt_.push_back(releases_);
  }
}

void Pool::resetDistribution(ReplicaDistribution distribution, Rng& rng) {
  distribution_ = std::move(distribution);
  padTarget_ = std::min(theta_, distribution_.support());
  std::unordered_map<ReplicaId, bool, ReplicaIdHash> covered;
  for (std::size_t i = 0; i < distribution_.replicas().size(); ++i) {
    covered[distribution_.replicas()[i]] = distribution_.probabilities()[i] > 0.0;
  }
  // Synthetic items outside the new support are dropped; real ones stay so
  // that no client request is lost.
  removeIf(
      [&](const PoolItem& item) {
        auto it = covered.find(item.replica);
        return item.synthetic && (it == covered.end() || !it->second);
      },
      rng);
}

std::size_t Pool::removeIf(const std::function<bool(const PoolItem&)>& pred, Rng& rng) {
  std::size_t removed = 0;
  for (std::size_t i = 0; i < items_.size();) {
    if (pred(items_[i])) {
      owed_.erase(items_[i].replica);
      eraseAt(i);
      ++removed;
    } else {
      ++i;
    }
  }
  pad(rng);
  return removed;
}

std::size_t Pool::residentBytes() const {
  return items_.capacity() * sizeof(PoolItem) + enteredAt_.capacity() * sizeof(std::uint64_t) +
         index_.size() * (sizeof(ReplicaId) + sizeof(std::size_t) + 2 * sizeof(void*)) +
         owed_.size() * (sizeof(ReplicaId) + sizeof(std::uint32_t) + 2 * sizeof(void*));
}

}  // namespace smoothkv
