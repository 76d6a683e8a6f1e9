#pragma once

#include <cstdint>
#include <random>

namespace smoothkv {

/// SplitMix64 finalizer; used to derive independent per-module seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t deriveSeed(std::uint64_t base, std::uint64_t stream) {
  return mix64(base ^ mix64(stream + 0x5851F42D4C957F2DULL));
}

/// Seeded generator. Not cryptographic: drives sampling decisions so that
/// experiments are reproducible. Keys and nonces never come from here.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : engine_(seed), seed_(seed) {}

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  /// Child generator for stream `id`, independent of this one's state.
  Rng fork(std::uint64_t id) const { return Rng(deriveSeed(seed_, id)); }

  double uniform01() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  std::uint64_t below(std::uint64_t n) { return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_); }
  bool coin() { return (engine_() >> 63) != 0; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

}  // namespace smoothkv
