#include "smoothkv/dynamize.hpp"

#include <algorithm>
#include <limits>
#include <set>

namespace smoothkv::dyn {

std::uint64_t binom(std::uint64_t n, std::uint64_t r) {
  if (r > n) return 0;
  r = std::min(r, n - r);
  unsigned __int128 acc = 1;
  for (std::uint64_t i = 1; i <= r; ++i) {
    acc = acc * (n - r + i) / i;
    if (acc > std::numeric_limits<std::uint64_t>::max()) return std::numeric_limits<std::uint64_t>::max();
  }
  return static_cast<std::uint64_t>(acc);
}

std::vector<std::uint64_t> decomposeOracle(std::uint64_t t, std::size_t k) {
  if (k == 0) throw ConfigError("k must be positive");
  std::vector<std::uint64_t> d(k);
  for (std::size_t level = k; level >= 1; --level) {
    // Largest x with C(x, level) <= t; C(level - 1, level) = 0 always qualifies.
    std::uint64_t lo = level - 1;
    std::uint64_t hi = level - 1 + t + 1;  // C(hi, level) > t for level >= 1
    while (hi - lo > 1) {
      std::uint64_t mid = lo + (hi - lo) / 2;
      if (binom(mid, level) <= t) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    d[level - 1] = lo;
    t -= binom(lo, level);
  }
  return d;
}

BinomialCounter::BinomialCounter(std::size_t k) : d_(k) {
  if (k == 0) throw ConfigError("k must be positive");
  for (std::size_t i = 0; i < k; ++i) d_[i] = i;
}

BinomialCounter BinomialCounter::fromTotal(std::uint64_t t, std::size_t k) {
  BinomialCounter c(k);
  c.d_ = decomposeOracle(t, k);
  return c;
}

BinomialCounter BinomialCounter::fromDigits(std::vector<std::uint64_t> digits) {
  if (digits.empty()) throw ConfigError("k must be positive");
  for (std::size_t i = 1; i < digits.size(); ++i) {
    if (digits[i] <= digits[i - 1]) throw ConfigError("level digits must be strictly increasing");
  }
  BinomialCounter c(digits.size());
  c.d_ = std::move(digits);
  return c;
}

std::size_t BinomialCounter::advance() {
  const std::size_t k = d_.size();
  auto next = [&](std::size_t i) { return i + 1 < k ? d_[i + 1] : std::numeric_limits<std::uint64_t>::max(); };
  std::size_t i = 0;
  d_[0] += 1;
  while (d_[i] == next(i)) {
    d_[i + 1] += 1;
    d_[i] = i;
    ++i;
  }
  return i;
}

std::uint64_t BinomialCounter::totalUnits() const {
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < d_.size(); ++i) total += levelUnits(i);
  return total;
}

std::optional<std::vector<Record>> InsertBuffer::add(Record record) {
  records_.push_back(std::move(record));
  if (records_.size() < z_) return std::nullopt;
  std::vector<Record> out = std::move(records_);
  records_.clear();
  std::sort(out.begin(), out.end(), RecordLess{});
  return out;
}

std::vector<range::PendingQuery> transformPending(range::PendingRegistry& registry,
                                                  std::span<const LevelView> destroyed, const LevelView& fresh,
                                                  const std::function<void(std::uint64_t bucket)>& enqueue) {
  std::set<std::uint64_t> touched;
  for (const auto& level : destroyed) {
    for (std::size_t b = 0; b < level.tags.size(); ++b) {
      const range::BucketRef ref{level.epoch, b};
      if (!registry.hasWaiters(ref)) continue;
      const range::Tag& old = level.tags[b];
      for (auto id : registry.detach(ref)) {
        touched.insert(id);
        const range::PendingQuery* q = registry.find(id);
        const Key l = std::max(q->l, old.l);
        const Key r = std::min(q->r, old.r);
        if (l > r) continue;
        range::partition(fresh.tags, l, r, id, fresh.epoch, registry, enqueue);
      }
    }
  }
  std::vector<range::PendingQuery> done;
  for (auto id : touched) {
    if (auto q = registry.takeIfDone(id)) done.push_back(std::move(*q));
  }
  return done;
}

}  // namespace smoothkv::dyn
