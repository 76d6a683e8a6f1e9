#pragma once

#include <cstdint>
#include <span>

#include "smoothkv/types.hpp"

namespace smoothkv::crypto {

inline constexpr std::size_t kKeyBytes = 32;
inline constexpr std::size_t kNonceBytes = 12;
inline constexpr std::size_t kTagBytes = 16;
/// Ciphertext = nonce || body || tag.
inline constexpr std::size_t kSealOverhead = kNonceBytes + kTagBytes;

/// Key for the label PRF (HMAC-SHA256 truncated to 128 bits).
struct LabelKey {
  std::array<std::uint8_t, kKeyBytes> bytes{};
};

/// Key for bucket sealing (AES-256-GCM).
struct SealKey {
  std::array<std::uint8_t, kKeyBytes> bytes{};
};

struct KeyMaterial {
  LabelKey label;
  SealKey seal;

  /// Fresh keys from the OpenSSL CSPRNG.
  static KeyMaterial generate();
  /// Keys expanded from a seed with SHA-256. Only for reproducible
  /// experiment runs where server-visible labels must repeat across runs.
  static KeyMaterial fromSeed(std::uint64_t seed);
};

/// Deterministic label of replica `replicaIndex` of bucket `bucketIndex` in
/// the level built at `epoch`. Input is encoded as three big-endian u64s.
Label labelFor(const LabelKey& key, std::uint64_t epoch, std::uint64_t bucketIndex, std::uint64_t replicaIndex);

inline std::size_t sealedSize(std::size_t plaintextLen) { return plaintextLen + kSealOverhead; }

/// Encrypts with a fresh random nonce; `associatedData` is authenticated.
Bytes sealBucket(const SealKey& key, std::span<const std::uint8_t> plaintext, const Label& associatedData);

/// Throws IntegrityError on any tampering or label mismatch.
Bytes openBucket(const SealKey& key, std::span<const std::uint8_t> ciphertext, const Label& associatedData);

/// Bytes from the OpenSSL CSPRNG.
void secureRandom(std::span<std::uint8_t> out);

}  // namespace smoothkv::crypto
