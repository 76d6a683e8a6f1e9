#include <set>

#include "doctest.h"
#include "smoothkv/crypto.hpp"
#include "smoothkv/rng.hpp"

using namespace smoothkv;

TEST_CASE("labels are deterministic and injective on distinct triples") {
  auto keys = crypto::KeyMaterial::generate();
  CHECK(crypto::labelFor(keys.label, 0, 3, 1) == crypto::labelFor(keys.label, 0, 3, 1));
  CHECK(crypto::labelFor(keys.label, 0, 3, 1) != crypto::labelFor(keys.label, 0, 3, 2));
  CHECK(crypto::labelFor(keys.label, 1, 3, 1) != crypto::labelFor(keys.label, 0, 3, 1));
}

TEST_CASE("no label collisions over 1e5 random triples") {
  auto keys = crypto::KeyMaterial::fromSeed(7);
  Rng rng(1);
  std::set<std::tuple<std::uint64_t, std::uint64_t, std::uint64_t>> triples;
  std::set<Label> labels;
  while (triples.size() < 100000) {
    auto t = std::make_tuple(rng.below(1000), rng.below(1000), rng.below(100));
    if (!triples.insert(t).second) continue;
    labels.insert(crypto::labelFor(keys.label, std::get<0>(t), std::get<1>(t), std::get<2>(t)));
  }
  CHECK(labels.size() == triples.size());
}

TEST_CASE("seal and open round trip with fixed overhead") {
  auto keys = crypto::KeyMaterial::generate();
  Label ad = crypto::labelFor(keys.label, 2, 5, 0);
  Bytes a(200, 0x11), b(200, 0x22);
  Bytes ca = crypto::sealBucket(keys.seal, a, ad);
  Bytes cb = crypto::sealBucket(keys.seal, b, ad);
  CHECK(ca.size() == cb.size());
  CHECK(ca.size() == crypto::sealedSize(a.size()));
  CHECK(crypto::openBucket(keys.seal, ca, ad) == a);
  CHECK(crypto::openBucket(keys.seal, cb, ad) == b);
  CHECK(crypto::sealBucket(keys.seal, a, ad) != ca);
}

TEST_CASE("tampering or a wrong label fails authentication") {
  auto keys = crypto::KeyMaterial::generate();
  Label ad = crypto::labelFor(keys.label, 0, 0, 0);
  Bytes ct = crypto::sealBucket(keys.seal, Bytes(64, 7), ad);
  for (std::size_t pos : {std::size_t{0}, std::size_t{20}, ct.size() - 1}) {
    Bytes bad = ct;
    bad[pos] ^= 0x01;
    CHECK_THROWS_AS(crypto::openBucket(keys.seal, bad, ad), IntegrityError);
  }
  CHECK_THROWS_AS(crypto::openBucket(keys.seal, ct, crypto::labelFor(keys.label, 0, 0, 1)), IntegrityError);
  CHECK_THROWS_AS(crypto::openBucket(keys.seal, Bytes(10, 0), ad), IntegrityError);
}

TEST_CASE("seeded key material is reproducible") {
  auto a = crypto::KeyMaterial::fromSeed(42);
  auto b = crypto::KeyMaterial::fromSeed(42);
  auto c = crypto::KeyMaterial::fromSeed(43);
  CHECK(a.label.bytes == b.label.bytes);
  CHECK(a.seal.bytes == b.seal.bytes);
  CHECK(a.label.bytes != c.label.bytes);
  CHECK(a.label.bytes != a.seal.bytes);
}
