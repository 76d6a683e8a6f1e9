#pragma once

#include <functional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "smoothkv/rng.hpp"
#include "smoothkv/types.hpp"

namespace smoothkv {

/// How pending-item weights evolve each time an item is released.
struct WeightPolicy {
  enum class Kind { Constant, Linear, Exponential };
  Kind kind = Kind::Constant;
  /// Linear increment or exponential base.
  double rate = 1.0;

  static WeightPolicy constant() { return {Kind::Constant, 1.0}; }
  static WeightPolicy linear(double rate = 1.0) { return {Kind::Linear, rate}; }
  static WeightPolicy exponential(double base = 2.0) { return {Kind::Exponential, base}; }
  /// "constant", "linear[:rate]" or "exponential[:base]".
  static WeightPolicy parse(const std::string& text);
  std::string toString() const;
};

/// Probability mass over replicas, used to simulate client requests.
class ReplicaDistribution {
 public:
  ReplicaDistribution() = default;
  /// Throws ConfigError unless probabilities are non-negative and sum to 1 +- 1e-9.
  ReplicaDistribution(std::vector<ReplicaId> replicas, std::vector<double> probabilities);

  ReplicaId sample(Rng& rng) const;
  /// Number of replicas with positive probability.
  std::size_t support() const { return support_; }
  bool empty() const { return replicas_.empty(); }
  const std::vector<ReplicaId>& replicas() const { return replicas_; }
  const std::vector<double>& probabilities() const { return probs_; }

 private:
  std::vector<ReplicaId> replicas_;
  std::vector<double> probs_;
  std::size_t support_ = 0;
  mutable std::discrete_distribution<std::size_t> sampler_;
};

struct PoolItem {
  ReplicaId replica;
  /// True if the item was drawn to pad the pool rather than requested by a client.
  bool synthetic = false;
};

/// Sampling pool with a minimum occupancy theta. Pending replica requests are
/// released in random order (weighted by the policy) instead of FIFO order.
class Pool {
 public:
  Pool() = default;

  /// Pads the pool with theta distinct synthetic draws. Throws ConfigError if
  /// the distribution has fewer than theta replicas with positive mass.
  static Pool setup(std::size_t theta, ReplicaDistribution distribution, WeightPolicy policy, Rng& rng);
  /// Empty pool whose distribution arrives later through resetDistribution.
  static Pool deferred(std::size_t theta, WeightPolicy policy);

  /// False (and no insertion) if the replica is already pending. A synthetic
  /// duplicate is promoted to a real request; a real duplicate is owed one
  /// more release, so every request yields exactly one access.
  bool put(const ReplicaId& replica);

  /// Releases one item with probability proportional to its weight, ages the
  /// rest, and pads back up to theta. A released padding item stands for a
  /// simulated client request and carries a fresh draw from the distribution.
  /// Precondition: !empty().
  PoolItem get(Rng& rng);
  /// get(), or a synthetic client-distribution draw if the pool is empty.
  PoolItem release(Rng& rng);

  /// Swaps in a new padding distribution and drops items it no longer covers.
  /// Padding then targets min(theta, support) so an undersized store cannot stall.
  void resetDistribution(ReplicaDistribution distribution, Rng& rng);

  /// Removes every item matching `pred`, then pads.
  std::size_t removeIf(const std::function<bool(const PoolItem&)>& pred, Rng& rng);

  bool contains(const ReplicaId& replica) const { return index_.contains(replica); }
  bool empty() const { return items_.empty(); }
  std::size_t size() const { return items_.size(); }
  std::size_t theta() const { return theta_; }
  const std::vector<PoolItem>& items() const { return items_; }
  const WeightPolicy& policy() const { return policy_; }
  /// Current sampling weights, parallel to items().
  std::vector<double> weights() const;
  /// Approximate resident bytes (items + index).
  std::size_t residentBytes() const;

 private:
  void pad(Rng& rng);
  void eraseAt(std::size_t i);
  std::size_t sampleIndex(Rng& rng) const;

  std::size_t theta_ = 0;
  std::size_t padTarget_ = 0;
  WeightPolicy policy_;
  ReplicaDistribution distribution_;
  std::vector<PoolItem> items_;
  // Release counter value when each item entered; its age sets its weight.
  std::vector<std::uint64_t> enteredAt_;
  std::unordered_map<ReplicaId, std::size_t, ReplicaIdHash> index_;
  std::uint64_t releases_ = 0;
  std::unordered_map<ReplicaId, std::uint32_t, ReplicaIdHash> owed_;
};

}  // namespace smoothkv
