#include "smoothkv/crypto.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/rand.h>
#include <openssl/sha.h>

#include <memory>

namespace smoothkv::crypto {

namespace {

struct CipherCtxDeleter {
  void operator()(EVP_CIPHER_CTX* ctx) const { EVP_CIPHER_CTX_free(ctx); }
};
using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter>;

void putBe64(std::uint8_t* out, std::uint64_t v) {
  for (int i = 7; i >= 0; --i) {
    out[i] = static_cast<std::uint8_t>(v & 0xFF);
    v >>= 8;
  }
}

}  // namespace

void secureRandom(std::span<std::uint8_t> out) {
  if (out.empty()) return;
  if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1) {
    throw std::runtime_error("RAND_bytes failed");
  }
}

KeyMaterial KeyMaterial::generate() {
  KeyMaterial k;
  secureRandom(k.label.bytes);
  secureRandom(k.seal.bytes);
  return k;
}

KeyMaterial KeyMaterial::fromSeed(std::uint64_t seed) {
  KeyMaterial k;
  std::uint8_t in[9];
  putBe64(in, seed);
  in[8] = 'L';
  SHA256(in, sizeof(in), k.label.bytes.data());
  in[8] = 'S';
  SHA256(in, sizeof(in), k.seal.bytes.data());
  return k;
}

Label labelFor(const LabelKey& key, std::uint64_t epoch, std::uint64_t bucketIndex, std::uint64_t replicaIndex) {
  std::uint8_t msg[24];
  putBe64(msg, epoch);
  putBe64(msg + 8, bucketIndex);
  putBe64(msg + 16, replicaIndex);
  std::uint8_t mac[EVP_MAX_MD_SIZE];
  unsigned int macLen = 0;
  if (HMAC(EVP_sha256(), key.bytes.data(), static_cast<int>(key.bytes.size()), msg, sizeof(msg), mac, &macLen) ==
      nullptr) {
    throw std::runtime_error("HMAC failed");
  }
  Label out;
  std::copy(mac, mac + out.size(), out.begin());
  return out;
}

Bytes sealBucket(const SealKey& key, std::span<const std::uint8_t> plaintext, const Label& associatedData) {
  Bytes out(sealedSize(plaintext.size()));
  secureRandom(std::span(out.data(), kNonceBytes));

  CipherCtx ctx(EVP_CIPHER_CTX_new());
  int len = 0;
  bool ok = ctx && EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr) == 1 &&
            EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, kNonceBytes, nullptr) == 1 &&
            EVP_EncryptInit_ex(ctx.get(), nullptr, nullptr, key.bytes.data(), out.data()) == 1 &&
            EVP_EncryptUpdate(ctx.get(), nullptr, &len, associatedData.data(), associatedData.size()) == 1;
  std::uint8_t* body = out.data() + kNonceBytes;
  if (ok && !plaintext.empty()) {
    ok = EVP_EncryptUpdate(ctx.get(), body, &len, plaintext.data(), static_cast<int>(plaintext.size())) == 1;
  }
  int tail = 0;
  ok = ok && EVP_EncryptFinal_ex(ctx.get(), body + plaintext.size(), &tail) == 1 &&
       EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, kTagBytes, body + plaintext.size()) == 1;
  if (!ok) throw std::runtime_error("AES-GCM seal failed");
  return out;
}

Bytes openBucket(const SealKey& key, std::span<const std::uint8_t> ciphertext, const Label& associatedData) {
  if (ciphertext.size() < kSealOverhead) throw IntegrityError("ciphertext too short");
  const std::size_t bodyLen = ciphertext.size() - kSealOverhead;
  Bytes out(bodyLen);

  CipherCtx ctx(EVP_CIPHER_CTX_new());
  int len = 0;
  bool ok = ctx && EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr) == 1 &&
            EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, kNonceBytes, nullptr) == 1 &&
            EVP_DecryptInit_ex(ctx.get(), nullptr, nullptr, key.bytes.data(), ciphertext.data()) == 1 &&
            EVP_DecryptUpdate(ctx.get(), nullptr, &len, associatedData.data(), associatedData.size()) == 1;
  const std::uint8_t* body = ciphertext.data() + kNonceBytes;
  if (ok && bodyLen > 0) {
    ok = EVP_DecryptUpdate(ctx.get(), out.data(), &len, body, static_cast<int>(bodyLen)) == 1;
  }
  if (!ok) throw std::runtime_error("AES-GCM open failed");
  Bytes tag(body + bodyLen, body + bodyLen + kTagBytes);
  int tail = 0;
  if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, kTagBytes, tag.data()) != 1 ||
      EVP_DecryptFinal_ex(ctx.get(), out.data() + bodyLen, &tail) != 1) {
    throw IntegrityError("bucket authentication failed");
  }
  return out;
}

}  // namespace smoothkv::crypto
