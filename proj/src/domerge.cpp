#include "smoothkv/domerge.hpp"

#include <cmath>
#include <numeric>

namespace smoothkv::domerge {

std::vector<double> TruncLaplace::pmf() const {
  const std::int64_t t = truncation;
  std::vector<double> p(static_cast<std::size_t>(2 * t + 1));
  if (t == 0 || scale <= 0.0) {
    std::fill(p.begin(), p.end(), 0.0);
    p[static_cast<std::size_t>(t)] = 1.0;
    return p;
  }
  for (std::int64_t x = -t; x <= t; ++x) p[static_cast<std::size_t>(x + t)] = std::exp(-std::abs(static_cast<double>(x)) / scale);
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& v : p) v /= total;
  return p;
}

std::int64_t sampleTruncLaplace(const TruncLaplace& params, Rng& rng) {
  const std::int64_t t = params.truncation;
  if (t <= 0 || params.scale <= 0.0) return 0;
  // Inverse CDF over the symmetric geometric shape: |x| has mass
  // proportional to q^|x| (doubled off zero), q = exp(-1/scale).
  const double q = std::exp(-1.0 / params.scale);
  if (q == 0.0) return 0;
  const double zeroMass = 1.0;
  // Sum of 2 * q^m for m = 1..t.
  const double tailMass = 2.0 * q * (1.0 - std::pow(q, static_cast<double>(t))) / (1.0 - q);
  double u = rng.uniform01() * (zeroMass + tailMass);
  if (u < zeroMass) return 0;
  u -= zeroMass;
  // Find the smallest m with 2 q (1 - q^m) / (1 - q) > u.
  const double frac = 1.0 - u * (1.0 - q) / (2.0 * q);
  auto m = static_cast<std::int64_t>(std::floor(std::log(frac) / std::log(q))) + 1;
  m = std::clamp<std::int64_t>(m, 1, t);
  return rng.coin() ? m : -m;
}

double failureBound(double lambda) {
  const double l = std::log2(lambda);
  return std::exp(-l * l);
}

std::uint64_t theoreticalBinCapacity(double epsilon, double lambda) {
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(lambda > 1.0)) throw ConfigError("lambda must exceed 1");
  return static_cast<std::uint64_t>(std::ceil(std::pow(std::log2(lambda), 5) / epsilon - 1e-9));
}

std::uint64_t binCountFor(std::uint64_t z, std::uint64_t capacity, double lambda) {
  const double l = std::log2(lambda);
  const double shrink = 1.0 - 1.0 / (l * l);
  return static_cast<std::uint64_t>(std::ceil(2.0 * static_cast<double>(z) / (static_cast<double>(capacity) * shrink) - 1e-12));
}

double loadShortfallProbability(std::uint64_t z, std::uint64_t capacity, double epsilon, double lambda) {
  const std::uint64_t bins = binCountFor(z, capacity, lambda);
  const auto noise = TruncLaplace::forBin(epsilon, capacity);
  const std::int64_t t = noise.truncation;
  // Shortfall iff sum of noise < z - bins * capacity / 2 =: threshold.
  const std::int64_t threshold = static_cast<std::int64_t>(z) - static_cast<std::int64_t>(bins * (capacity / 2));
  const std::int64_t lowest = -static_cast<std::int64_t>(bins) * t;
  if (threshold <= lowest) return 0.0;
  if (threshold > static_cast<std::int64_t>(bins) * t) return 1.0;

  const std::vector<double> step = noise.pmf();
  std::vector<double> dist = step;  // sum of one variable, offset -t
  for (std::uint64_t b = 1; b < bins; ++b) {
    std::vector<double> next(dist.size() + step.size() - 1, 0.0);
    for (std::size_t i = 0; i < dist.size(); ++i) {
      if (dist[i] == 0.0) continue;
      for (std::size_t j = 0; j < step.size(); ++j) next[i + j] += dist[i] * step[j];
    }
    const double total = std::accumulate(next.begin(), next.end(), 0.0);
    for (double& v : next) v /= total;
    dist = std::move(next);
  }
  // dist[i] holds Pr[sum = i + lowest]; add up sums strictly below threshold,
  // smallest terms first.
  double p = 0.0;
  const auto upto = static_cast<std::size_t>(threshold - lowest);
  for (std::size_t i = 0; i < upto && i < dist.size(); ++i) p += dist[i];
  return p;
}

CapacityResult computeBinCapacity(std::uint64_t z, double epsilon, double lambda) {
  if (z == 0) throw ConfigError("Z must be positive");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(lambda >= 4.0)) throw ConfigError("lambda must be >= 4");
  CapacityResult r;
  r.delta = failureBound(lambda);
  r.theoretical = theoreticalBinCapacity(epsilon, lambda);

  // Lattice points are capacity = step * i.
  std::uint64_t hi = (4 * r.theoretical + kCapacityStep - 1) / kCapacityStep;
  if (loadShortfallProbability(z, hi * kCapacityStep, epsilon, lambda) > r.delta) {
    throw SearchBoundError("no feasible bin capacity up to " + std::to_string(hi * kCapacityStep));
  }
  std::uint64_t lo = 0;  // capacity 0 is never feasible
  while (hi - lo > 1) {
    const std::uint64_t mid = lo + (hi - lo) / 2;
    if (loadShortfallProbability(z, mid * kCapacityStep, epsilon, lambda) <= r.delta) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  r.capacity = hi * kCapacityStep;
  r.binCount = binCountFor(z, r.capacity, lambda);
  r.failureProb = loadShortfallProbability(z, r.capacity, epsilon, lambda);
  return r;
}

}  // namespace smoothkv::domerge
