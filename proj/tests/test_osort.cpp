#include <algorithm>
#include <cmath>
#include <map>

#include "doctest.h"
#include "smoothkv/osort.hpp"

using namespace smoothkv;

TEST_CASE("sorted and reversed inputs") {
  std::vector<int> sorted(100);
  for (int i = 0; i < 100; ++i) sorted[i] = i;
  auto copy = sorted;
  osort::obliviousSort(copy);
  CHECK(copy == sorted);
  std::vector<int> rev(1000);
  for (int i = 0; i < 1000; ++i) rev[i] = 1000 - i;
  osort::obliviousSort(rev);
  for (int i = 0; i < 1000; ++i) CHECK(rev[i] == i + 1);
}

TEST_CASE("oracle equality and input-independent traces") {
  Rng rng(1);
  for (std::size_t n : {std::size_t{7}, std::size_t{64}, std::size_t{1000}}) {
    osort::SortTrace reference;
    for (int trial = 0; trial < 500; ++trial) {
      std::vector<std::uint32_t> v(n);
      for (auto& x : v) x = static_cast<std::uint32_t>(rng.below(n / 2 + 1));
      auto oracle = v;
      std::sort(oracle.begin(), oracle.end());
      osort::SortTrace trace;
      osort::obliviousSort(v, std::less<>{}, osort::SortOptions{&trace});
      CHECK(v == oracle);
      if (trial == 0) {
        reference = trace;
        CHECK(trace.pairs.size() == osort::comparatorCount(osort::paddedLength(n)));
      } else {
        CHECK(trace == reference);
      }
    }
  }
}

TEST_CASE("comparator counts") {
  CHECK(osort::comparatorCount(1) == 0);
  CHECK(osort::comparatorCount(2) == 1);
  CHECK(osort::comparatorCount(8) == 24);
  CHECK(osort::comparatorCount(1024) == 512 * 10 * 11 / 2);
  CHECK(osort::paddedLength(1000) == 1024);
}

TEST_CASE("parallel stages match the sequential result") {
  Rng rng(2);
  std::vector<std::uint64_t> v(1 << 15);
  for (auto& x : v) x = rng();
  auto seq = v;
  osort::obliviousSort(seq);
  osort::obliviousSort(v, std::less<>{}, osort::SortOptions{nullptr, 4});
  CHECK(v == seq);
  CHECK(std::is_sorted(v.begin(), v.end()));
}

TEST_CASE("shuffle is a uniform permutation") {
  Rng rng(3);
  std::vector<int> one{5};
  osort::obliviousShuffle(one, rng);
  CHECK(one == std::vector<int>{5});

  const int runs = 60000;
  std::map<std::vector<int>, int> counts;
  for (int i = 0; i < runs; ++i) {
    std::vector<int> v{0, 1, 2};
    osort::obliviousShuffle(v, rng);
    counts[v]++;
  }
  CHECK(counts.size() == 6);
  const double p = 1.0 / 6.0, sigma = std::sqrt(runs * p * (1 - p));
  for (const auto& [perm, c] : counts) CHECK(std::abs(c - runs * p) <= 3 * sigma);

  std::vector<int> big(1000);
  for (int i = 0; i < 1000; ++i) big[i] = i;
  osort::obliviousShuffle(big, rng);
  auto check = big;
  std::sort(check.begin(), check.end());
  for (int i = 0; i < 1000; ++i) CHECK(check[i] == i);
}
