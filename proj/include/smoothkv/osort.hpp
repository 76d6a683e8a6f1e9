#pragma once

#include <bit>
#include <cstdint>
#include <thread>
#include <utility>
#include <vector>

#include "smoothkv/rng.hpp"

namespace smoothkv::osort {

/// Compare-exchange index pairs in network order. Identical for every input
/// of the same length.
struct SortTrace {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  friend bool operator==(const SortTrace&, const SortTrace&) = default;
};

inline std::size_t paddedLength(std::size_t n) { return n <= 1 ? n : std::bit_ceil(n); }

/// Size of the bitonic network on a power-of-two length: (n/2) * lg n * (lg n + 1) / 2.
inline std::size_t comparatorCount(std::size_t padded) {
  if (padded <= 1) return 0;
  const std::size_t lg = static_cast<std::size_t>(std::countr_zero(padded));
  return padded / 2 * lg * (lg + 1) / 2;
}

struct SortOptions {
  SortTrace* trace = nullptr;
  /// Worker threads per network stage; pairs within a stage are disjoint.
  unsigned threads = 1;
};

namespace detail {

template <typename T>
struct Slot {
  T value;
  bool sentinel;
};

template <typename T, typename Less>
void runStage(std::vector<Slot<T>>& a, std::size_t k, std::size_t j, std::size_t begin, std::size_t end, Less& less) {
  for (std::size_t i = begin; i < end; ++i) {
    const std::size_t l = i ^ j;
    if (l <= i) continue;
    const bool ascending = (i & k) == 0;
    // Sentinels compare greater than every element.
    const bool lGreater = a[l].sentinel ? !a[i].sentinel : (!a[i].sentinel && less(a[i].value, a[l].value));
    const bool iGreater = a[i].sentinel ? !a[l].sentinel : (!a[l].sentinel && less(a[l].value, a[i].value));
    if (ascending ? iGreater : lGreater) std::swap(a[i], a[l]);
  }
}

}  // namespace detail

/// Bitonic sort. Non-power-of-two inputs are padded with +infinity sentinels
/// that are stripped before returning, so the network (and trace) depends
/// only on the padded length.
template <typename T, typename Less = std::less<T>>
void obliviousSort(std::vector<T>& elements, Less less = Less{}, SortOptions options = {}) {
  const std::size_t n = elements.size();
  const std::size_t padded = paddedLength(n);
  if (options.trace) {
    options.trace->pairs.clear();
    options.trace->pairs.reserve(comparatorCount(padded));
  }
  if (padded <= 1) return;

  std::vector<detail::Slot<T>> a;
  a.reserve(padded);
  for (auto& e : elements) a.push_back(detail::Slot<T>{std::move(e), false});
  while (a.size() < padded) a.push_back(detail::Slot<T>{T{}, true});

  const unsigned threads = std::max(1u, options.threads);
  for (std::size_t k = 2; k <= padded; k <<= 1) {
    for (std::size_t j = k >> 1; j > 0; j >>= 1) {
      if (options.trace) {
        for (std::size_t i = 0; i < padded; ++i) {
          const std::size_t l = i ^ j;
          if (l > i) options.trace->pairs.emplace_back(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(l));
        }
      }
      if (threads == 1 || padded < (1u << 14)) {
        detail::runStage(a, k, j, 0, padded, less);
      } else {
        std::vector<std::jthread> workers;
        const std::size_t chunk = (padded + threads - 1) / threads;
        for (unsigned t = 0; t < threads; ++t) {
          const std::size_t b = t * chunk;
          const std::size_t e = std::min(padded, b + chunk);
          if (b >= e) break;
          workers.emplace_back([&a, k, j, b, e, &less] { detail::runStage(a, k, j, b, e, less); });
        }
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) elements[i] = std::move(a[i].value);
}

/// Uniformly random permutation via sorting on independent 64-bit weights.
template <typename T>
void obliviousShuffle(std::vector<T>& elements, Rng& rng, SortOptions options = {}) {
  std::vector<std::pair<std::uint64_t, T>> tagged;
  tagged.reserve(elements.size());
  for (auto& e : elements) tagged.emplace_back(rng(), std::move(e));
  obliviousSort(
      tagged, [](const auto& x, const auto& y) { return x.first < y.first; }, options);
  for (std::size_t i = 0; i < elements.size(); ++i) elements[i] = std::move(tagged[i].second);
}

}  // namespace smoothkv::osort
