#pragma once

#include <algorithm>
#include <cmath>
#include <future>
#include <optional>
#include <string>
#include <vector>

#include "smoothkv/osort.hpp"
#include "smoothkv/rng.hpp"
#include "smoothkv/types.hpp"

namespace smoothkv::domerge {

/// Discrete Laplace noise truncated to [-truncation, truncation]:
/// pmf(x) proportional to exp(-|x| / scale).
struct TruncLaplace {
  double scale = 1.0;  // 1 / epsilon
  std::int64_t truncation = 0;

  static TruncLaplace forBin(double epsilon, std::uint64_t capacity) {
    return TruncLaplace{1.0 / epsilon, static_cast<std::int64_t>(capacity / 4)};
  }
  /// pmf over [-t, t], index i holds x = i - t.
  std::vector<double> pmf() const;
};

std::int64_t sampleTruncLaplace(const TruncLaplace& params, Rng& rng);

/// Bin capacities are searched on multiples of this step so that the mean
/// load capacity/2 and the truncation capacity/4 are integers.
inline constexpr std::uint64_t kCapacityStep = 4;

/// delta = exp(-log2(lambda)^2).
double failureBound(double lambda);
/// ceil(log2(lambda)^5 / epsilon).
std::uint64_t theoreticalBinCapacity(double epsilon, double lambda);
/// ceil(2Z / (capacity * (1 - log2(lambda)^-2))).
std::uint64_t binCountFor(std::uint64_t z, std::uint64_t capacity, double lambda);
/// Exact Pr[sum of binCount loads (capacity/2 + noise) < z] by convolution.
double loadShortfallProbability(std::uint64_t z, std::uint64_t capacity, double epsilon, double lambda);

struct CapacityResult {
  std::uint64_t capacity = 0;     // minimal bin capacity on the search lattice
  std::uint64_t binCount = 0;
  double failureProb = 0.0;       // exact, at `capacity`
  double delta = 0.0;
  std::uint64_t theoretical = 0;  // closed-form bound, for comparison
};

/// Binary search over multiples of kCapacityStep in (0, 4 * theoretical] for
/// the boundary where the shortfall probability first drops to <= delta.
/// Throws SearchBoundError if the upper bracket itself is infeasible.
CapacityResult computeBinCapacity(std::uint64_t z, double epsilon, double lambda);

/// Fixed-capacity bins of sorted input; each holds a noisy number of real
/// elements followed by dummy padding.
template <typename T>
struct BinList {
  std::uint64_t capacity = 0;
  std::vector<std::vector<std::optional<T>>> bins;  // each exactly `capacity` slots
  std::vector<std::uint64_t> loads;
  /// First real element of each bin; unset for an empty bin (acts as +infinity).
  std::vector<std::optional<T>> pivots;
};

/// Sequentially fills bins with clamp(capacity/2 + noise, 0, capacity) real elements.
template <typename T>
BinList<T> binPack(const std::vector<T>& sorted, std::uint64_t capacity, double epsilon, Rng& rng) {
  if (capacity == 0) throw ConfigError("bin capacity must be positive");
  BinList<T> out;
  out.capacity = capacity;
  const auto noise = TruncLaplace::forBin(epsilon, capacity);
  const auto mean = static_cast<std::int64_t>(capacity / 2);
  std::size_t pos = 0;
  while (pos < sorted.size()) {
    std::int64_t want = std::clamp<std::int64_t>(mean + sampleTruncLaplace(noise, rng), 0,
                                                 static_cast<std::int64_t>(capacity));
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(want), sorted.size() - pos);
    std::vector<std::optional<T>> bin(capacity);
    for (std::size_t i = 0; i < take; ++i) bin[i] = sorted[pos + i];
    out.pivots.push_back(take > 0 ? std::optional<T>(sorted[pos]) : std::nullopt);
    out.loads.push_back(take);
    out.bins.push_back(std::move(bin));
    pos += take;
  }
  return out;
}

struct MergeStats {
  std::size_t iterations = 0;
  std::size_t maxBufferLoad = 0;
};

/// Buffer capacity in units of the bin capacity.
inline constexpr std::uint64_t kBufferBins = 6;

/// Differentially oblivious merge of two sorted sequences. Both inputs are
/// bin-packed; each iteration ingests the bin with the smaller pivot into a
/// fixed-size buffer, obliviously sorts it, and evicts every real element not
/// exceeding either list's next pivot (nothing unseen can precede them).
template <typename T, typename Less = std::less<T>>
std::vector<T> doMerge2(const std::vector<T>& a, const std::vector<T>& b, std::uint64_t capacity, double epsilon,
                        Rng& rng, Less less = Less{}, MergeStats* stats = nullptr) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  BinList<T> la = binPack(a, capacity, epsilon, rng);
  BinList<T> lb = binPack(b, capacity, epsilon, rng);

  const std::size_t limit = kBufferBins * capacity;
  // Resident region plus one incoming bin; after each sort the tail bin's
  // worth of slots is guaranteed to be dummies.
  std::vector<std::optional<T>> buffer(limit + capacity);
  auto slotLess = [&less](const std::optional<T>& x, const std::optional<T>& y) {
    if (!x) return false;
    if (!y) return true;
    return less(*x, *y);
  };
  auto pivotLess = [&less](const std::optional<T>* x, const std::optional<T>* y) {
    if (!x || !*x) return false;
    if (!y || !*y) return true;
    return less(**x, **y);
  };

  std::vector<T> out;
  out.reserve(a.size() + b.size());
  std::size_t ia = 0, ib = 0, resident = 0;
  while (ia < la.bins.size() || ib < lb.bins.size()) {
    const std::optional<T>* pa = ia < la.bins.size() ? &la.pivots[ia] : nullptr;
    const std::optional<T>* pb = ib < lb.bins.size() ? &lb.pivots[ib] : nullptr;
    const bool takeA = pb == nullptr || (pa != nullptr && !pivotLess(pb, pa));
    auto& bin = takeA ? la.bins[ia] : lb.bins[ib];
    const std::uint64_t load = takeA ? la.loads[ia] : lb.loads[ib];
    takeA ? ++ia : ++ib;

    if (resident + load > limit) {
      throw BufferOverflowError("DO merge buffer overflow: " + std::to_string(resident + load) + " > " +
                                std::to_string(limit));
    }
    std::move(bin.begin(), bin.end(), buffer.begin() + static_cast<std::ptrdiff_t>(limit));
    resident += load;
    if (stats) {
      ++stats->iterations;
      stats->maxBufferLoad = std::max<std::size_t>(stats->maxBufferLoad, resident);
    }
    osort::obliviousSort(buffer, slotLess);

    const std::optional<T>* na = ia < la.bins.size() ? &la.pivots[ia] : nullptr;
    const std::optional<T>* nb = ib < lb.bins.size() ? &lb.pivots[ib] : nullptr;
    const std::optional<T>* bound = pivotLess(na, nb) ? na : nb;
    // Full scan so the access pattern does not depend on how many are evicted.
    for (auto& slot : buffer) {
      const bool safe = slot.has_value() && (bound == nullptr || !*bound || !less(**bound, *slot));
      if (safe) {
        out.push_back(std::move(*slot));
        slot.reset();
        --resident;
      }
    }
  }
  return out;
}

/// Iterative k-way merge: pairwise doMerge2 rounds until one sequence is
/// left, so every element takes part in at most ceil(log2 k) merges. Pairs
/// within a round run concurrently when `parallel` is set.
template <typename T, typename Less = std::less<T>>
std::vector<T> kWayDOMerge(std::vector<std::vector<T>> arrays, std::uint64_t capacity, double epsilon, Rng& rng,
                           Less less = Less{}, bool parallel = false, std::size_t* rounds = nullptr) {
  if (arrays.empty()) return {};
  std::size_t round = 0;
  while (arrays.size() > 1) {
    std::vector<std::vector<T>> next((arrays.size() + 1) / 2);
    std::vector<Rng> rngs;
    for (std::size_t i = 0; i < arrays.size() / 2; ++i) rngs.push_back(rng.fork(rng()));
    if (parallel) {
      std::vector<std::future<std::vector<T>>> jobs;
      for (std::size_t i = 0; i + 1 < arrays.size(); i += 2) {
        jobs.push_back(std::async(std::launch::async, [&, i] {
          return doMerge2(arrays[i], arrays[i + 1], capacity, epsilon, rngs[i / 2], less);
        }));
      }
      for (std::size_t j = 0; j < jobs.size(); ++j) next[j] = jobs[j].get();
    } else {
      for (std::size_t i = 0; i + 1 < arrays.size(); i += 2) {
        next[i / 2] = doMerge2(arrays[i], arrays[i + 1], capacity, epsilon, rngs[i / 2], less);
      }
    }
    if (arrays.size() % 2 == 1) next.back() = std::move(arrays.back());
    arrays = std::move(next);
    ++round;
  }
  if (rounds) *rounds = round;
  return std::move(arrays.front());
}

}  // namespace smoothkv::domerge
