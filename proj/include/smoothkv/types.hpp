#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace smoothkv {

using Bytes = std::vector<std::uint8_t>;

/// 128-bit server-visible identifier of a stored bucket replica.
using Label = std::array<std::uint8_t, 16>;

std::string toHex(const std::uint8_t* data, std::size_t len);
inline std::string toHex(const Label& label) { return toHex(label.data(), label.size()); }
inline std::string toHex(const Bytes& bytes) { return toHex(bytes.data(), bytes.size()); }
Bytes fromHex(const std::string& hex);

// Error taxonomy. Every failure the library reports is one of these.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IntegrityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingLabelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BufferOverflowError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SearchBoundError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Key = std::uint64_t;
inline constexpr Key kDummyKey = std::numeric_limits<Key>::max();

/// A stored record. Dummies carry kDummyKey and sort after every real key.
struct Record {
  Key key = kDummyKey;
  std::uint64_t seq = 0;
  bool tombstone = false;
  Bytes value;

  bool isDummy() const { return key == kDummyKey; }
  static Record dummy(std::size_t valueLen) { return Record{kDummyKey, 0, false, Bytes(valueLen, 0)}; }

  friend bool operator==(const Record&, const Record&) = default;
};

/// Total order used everywhere records are sorted: key, then sequence number.
struct RecordLess {
  bool operator()(const Record& a, const Record& b) const {
    if (a.key != b.key) return a.key < b.key;
    return a.seq < b.seq;
  }
};

/// One server-side copy of a logical bucket. Dummy slots of a level use
/// bucket indices >= the level's logical bucket count, replica 0.
struct ReplicaId {
  std::uint64_t epoch = 0;
  std::uint64_t bucket = 0;
  std::uint32_t replica = 0;

  friend bool operator==(const ReplicaId&, const ReplicaId&) = default;
  friend auto operator<=>(const ReplicaId&, const ReplicaId&) = default;
};

struct ReplicaIdHash {
  std::size_t operator()(const ReplicaId& r) const noexcept {
    std::uint64_t h = r.epoch * 0x9E3779B97F4A7C15ULL;
    h ^= r.bucket + 0x632BE59BD9B4E019ULL + (h << 6) + (h >> 2);
    h ^= r.replica + 0x85EBCA77C2B2AE63ULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

struct LabelHash {
  std::size_t operator()(const Label& l) const noexcept {
    std::uint64_t h = 0;
    for (int i = 0; i < 8; ++i) h = (h << 8) | l[i];
    return static_cast<std::size_t>(h);
  }
};

}  // namespace smoothkv
