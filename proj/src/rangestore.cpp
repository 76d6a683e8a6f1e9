#include "smoothkv/rangestore.hpp"

#include <algorithm>
#include <cstring>

namespace smoothkv::range {

namespace {

constexpr std::size_t kRecordHeader = 8 + 8 + 1;

void putLe64(std::uint8_t* out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint64_t getLe64(const std::uint8_t* in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[i]) << (8 * i);
  return v;
}

}  // namespace

Tag tagOfRecords(std::span<const Record> slots) {
  Tag t;
  for (const auto& rec : slots) {
    if (rec.isDummy()) continue;
    if (t.allDummy()) t.l = rec.key;
    t.r = rec.key;
  }
  return t;
}

std::vector<Bucket> bucketize(std::vector<Record> sorted, std::size_t z, std::size_t valueLen) {
  if (z == 0) throw ConfigError("bucket capacity Z must be positive");
  if (!std::is_sorted(sorted.begin(), sorted.end(), RecordLess{})) throw ConfigError("bucketize needs sorted input");
  const std::size_t n = sorted.size();
  const std::size_t count = (n + z - 1) / z;
  sorted.resize(count * z, Record::dummy(valueLen));
  std::vector<Bucket> out(count);
  for (std::size_t b = 0; b < count; ++b) {
    auto first = sorted.begin() + static_cast<std::ptrdiff_t>(b * z);
    out[b].slots.assign(std::make_move_iterator(first), std::make_move_iterator(first + static_cast<std::ptrdiff_t>(z)));
    out[b].tag = tagOfRecords(out[b].slots);
  }
  return out;
}

std::vector<Tag> tagsOf(std::span<const Bucket> buckets) {
  std::vector<Tag> tags;
  tags.reserve(buckets.size());
  for (const auto& b : buckets) tags.push_back(b.tag);
  return tags;
}

std::size_t serializedBucketSize(std::size_t z, std::size_t valueLen) { return z * (kRecordHeader + valueLen); }

Bytes serializeBucket(std::span<const Record> slots, std::size_t z, std::size_t valueLen) {
  if (slots.size() != z) throw ConfigError("bucket must hold exactly Z records");
  Bytes out(serializedBucketSize(z, valueLen));
  std::uint8_t* p = out.data();
  for (const auto& rec : slots) {
    if (rec.value.size() != valueLen) throw ConfigError("record value length mismatch");
    putLe64(p, rec.key);
    putLe64(p + 8, rec.seq);
    p[16] = rec.tombstone ? 1 : 0;
    std::memcpy(p + kRecordHeader, rec.value.data(), valueLen);
    p += kRecordHeader + valueLen;
  }
  return out;
}

std::vector<Record> deserializeBucket(std::span<const std::uint8_t> data, std::size_t z, std::size_t valueLen) {
  if (data.size() != serializedBucketSize(z, valueLen)) throw IntegrityError("bucket payload has the wrong size");
  std::vector<Record> out(z);
  const std::uint8_t* p = data.data();
  for (auto& rec : out) {
    rec.key = getLe64(p);
    rec.seq = getLe64(p + 8);
    rec.tombstone = p[16] != 0;
    rec.value.assign(p + kRecordHeader, p + kRecordHeader + valueLen);
    p += kRecordHeader + valueLen;
  }
  return out;
}

double uniformBucketProbability(Key n, Key l, Key r) {
  const double N = static_cast<double>(n);
  const double L = static_cast<double>(l);
  const double R = static_cast<double>(r);
  return (R * (2.0 * N - R + 1.0) - L * (L - 1.0)) / (N * (N + 1.0));
}

double UniformRanges::inclusion(Key l, Key r) const { return uniformBucketProbability(n_, l, r); }

FixedWidthRanges::FixedWidthRanges(Key n, Key width) : n_(n), width_(width) {
  if (width == 0 || width > n) throw ConfigError("range width must be in [1, N]");
}

double FixedWidthRanges::inclusion(Key l, Key r) const {
  const Key starts = n_ - width_ + 1;
  const Key lo = l > width_ ? l - width_ + 1 : 1;
  const Key hi = std::min(r, starts);
  if (hi < lo) return 0.0;
  return static_cast<double>(hi - lo + 1) / static_cast<double>(starts);
}

CumulativeRangeDist CumulativeRangeDist::fromPmf(Key n, const std::function<double(Key, Key)>& pmf) {
  CumulativeRangeDist d;
  d.n_ = n;
  const std::size_t w = n + 1;
  d.cum_.assign(w * w, 0.0);
  for (Key x = 1; x <= n; ++x) {
    double row = 0.0;
    for (Key y = 1; y <= n; ++y) {
      row += y >= x ? pmf(x, y) : 0.0;
      d.cum_[x * w + y] = d.cum_[(x - 1) * w + y] + row;
    }
  }
  return d;
}

double CumulativeRangeDist::inclusion(Key l, Key r) const {
  return at(r, n_) + at(n_, r) - at(r, r) - at(l - 1, l - 1);
}

std::vector<double> deriveBucketDistribution(const RangeDistribution& dist, std::span<const Tag> tags) {
  const Key n = dist.domain();
  std::vector<double> out;
  out.reserve(tags.size());
  for (const auto& t : tags) {
    if (t.allDummy() || t.l > n || t.r < 1) {
      out.push_back(0.0);
      continue;
    }
    const Key l = std::max<Key>(t.l, 1);
    const Key r = std::min<Key>(t.r, n);
    out.push_back(std::clamp(dist.inclusion(l, r), 0.0, 1.0));
  }
  return out;
}

Span coveringSpan(std::span<const Tag> tags, Key l, Key r, std::size_t* comparisons) {
  std::size_t probes = 0;
  // First bucket whose right end reaches l.
  auto first = std::partition_point(tags.begin(), tags.end(), [&](const Tag& t) {
    ++probes;
    return t.r < l;
  });
  // First bucket starting after r.
  auto past = std::partition_point(tags.begin(), tags.end(), [&](const Tag& t) {
    ++probes;
    return t.l <= r;
  });
  if (comparisons) *comparisons = probes;
  Span s;
  if (first >= past) return s;
  s.first = static_cast<std::size_t>(first - tags.begin());
  s.last = static_cast<std::size_t>(past - tags.begin()) - 1;
  s.empty = false;
  return s;
}

std::vector<Record> filterResult(std::vector<Record> records, Key l, Key r) {
  std::erase_if(records, [&](const Record& rec) { return rec.isDummy() || rec.key < l || rec.key > r; });
  std::sort(records.begin(), records.end(), RecordLess{});
  std::vector<Record> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const bool latest = i + 1 == records.size() || records[i + 1].key != records[i].key;
    if (latest && !records[i].tombstone) out.push_back(std::move(records[i]));
  }
  return out;
}

std::uint64_t PendingRegistry::open(Key l, Key r, std::uint64_t handle, std::uint64_t batch) {
  const std::uint64_t id = nextId_++;
  PendingQuery q;
  q.id = id;
  q.l = l;
  q.r = r;
  q.handle = handle;
  q.registeredBatch = batch;
  queries_.emplace(id, std::move(q));
  return id;
}

bool PendingRegistry::attach(std::uint64_t id, BucketRef bucket) {
  auto& list = waiting_[bucket];
  if (std::find(list.begin(), list.end(), id) != list.end()) return false;
  list.push_back(id);
  ++queries_.at(id).cnt;
  return true;
}

std::optional<PendingQuery> PendingRegistry::finishRegistration(std::uint64_t id) {
  auto it = queries_.find(id);
  if (it == queries_.end()) return std::nullopt;
  it->second.registering = false;
  return takeIfDone(id);
}

std::optional<PendingQuery> PendingRegistry::takeIfDone(std::uint64_t id) {
  auto it = queries_.find(id);
  if (it == queries_.end() || it->second.registering || it->second.cnt != 0) return std::nullopt;
  PendingQuery q = std::move(it->second);
  queries_.erase(it);
  return q;
}

std::vector<PendingQuery> PendingRegistry::reply(BucketRef bucket, std::span<const Record> records) {
  std::vector<PendingQuery> done;
  auto it = waiting_.find(bucket);
  if (it == waiting_.end()) return done;
  std::vector<std::uint64_t> ids = std::move(it->second);
  waiting_.erase(it);
  for (auto id : ids) {
    auto& q = queries_.at(id);
    for (const auto& rec : records) {
      if (!rec.isDummy() && rec.key >= q.l && rec.key <= q.r) q.data.push_back(rec);
    }
    --q.cnt;
    if (auto finished = takeIfDone(id)) done.push_back(std::move(*finished));
  }
  return done;
}

std::vector<std::uint64_t> PendingRegistry::detach(BucketRef bucket) {
  auto it = waiting_.find(bucket);
  if (it == waiting_.end()) return {};
  std::vector<std::uint64_t> ids = std::move(it->second);
  waiting_.erase(it);
  for (auto id : ids) --queries_.at(id).cnt;
  return ids;
}

bool PendingRegistry::hasWaiters(BucketRef bucket) const { return waiting_.contains(bucket); }

std::size_t PendingRegistry::waiterCount(BucketRef bucket) const {
  auto it = waiting_.find(bucket);
  return it == waiting_.end() ? 0 : it->second.size();
}

PendingQuery* PendingRegistry::find(std::uint64_t id) {
  auto it = queries_.find(id);
  return it == queries_.end() ? nullptr : &it->second;
}

void PendingRegistry::forEachOpen(const std::function<void(PendingQuery&)>& fn) {
  for (auto& [id, q] : queries_) fn(q);
}

std::size_t PendingRegistry::residentBytes() const {
  std::size_t total = 0;
  for (const auto& [id, q] : queries_) total += sizeof(q) + q.data.capacity() * sizeof(Record);
  for (const auto& [b, ids] : waiting_) total += sizeof(b) + ids.capacity() * sizeof(std::uint64_t);
  return total;
}

Span partition(std::span<const Tag> tags, Key l, Key r, std::uint64_t queryId, std::uint64_t epoch,
               PendingRegistry& registry, const std::function<void(std::uint64_t bucket)>& enqueue) {
  Span s = coveringSpan(tags, l, r);
  if (s.empty) return s;
  for (std::size_t b = s.first; b <= s.last; ++b) {
    if (registry.attach(queryId, BucketRef{epoch, b})) enqueue(b);
  }
  return s;
}

}  // namespace smoothkv::range
