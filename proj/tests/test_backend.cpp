#include <filesystem>
#include <thread>

#include "doctest.h"
#include "smoothkv/backend.hpp"
#include "smoothkv/crypto.hpp"
#include "smoothkv/wire.hpp"

using namespace smoothkv;

namespace {

Label lab(std::uint8_t b) {
  Label l{};
  l.fill(b);
  return l;
}

std::vector<StoreEntry> sample(std::size_t n) {
  std::vector<StoreEntry> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(StoreEntry{lab(static_cast<std::uint8_t>(i)), Bytes(12, static_cast<std::uint8_t>(i * 3))});
  return out;
}

std::filesystem::path tempPath(const std::string& name) {
  return std::filesystem::temp_directory_path() / (name + "-" + std::to_string(::getpid()));
}

}  // namespace

TEST_CASE("put then get, order preserved") {
  TraceSink trace;
  MemoryBackend m(&trace);
  auto entries = sample(5);
  m.putBatch(entries);
  std::vector<Label> labels{lab(4), lab(0), lab(2), lab(1), lab(3)};
  auto got = m.getBatch(labels);
  REQUIRE(got.size() == 5);
  CHECK(got[0] == entries[4].ciphertext);
  CHECK(got[1] == entries[0].ciphertext);
  CHECK(m.entryCount() == 5);
  CHECK(m.payloadBytes() == 5 * (16 + 12));
  CHECK(trace.size() == 10);
  auto events = trace.snapshot();
  for (std::size_t i = 0; i < events.size(); ++i) CHECK(events[i].slot == i);
  CHECK(events[5].label == lab(4));
  CHECK(events[5].op == AccessEvent::Op::Read);
}

TEST_CASE("unknown labels are rejected") {
  MemoryBackend m;
  m.putBatch(sample(2));
  std::vector<Label> labels{lab(0), lab(9)};
  CHECK_THROWS_AS(m.getBatch(labels), MissingLabelError);
  m.eraseBatch(std::vector<Label>{lab(0)});
  CHECK(m.entryCount() == 1);
}

TEST_CASE("persist and restore are bit exact") {
  MemoryBackend m;
  auto keys = crypto::KeyMaterial::generate();
  std::vector<StoreEntry> entries;
  for (std::uint64_t i = 0; i < 100; ++i) {
    Label l = crypto::labelFor(keys.label, 0, i, 0);
    entries.push_back(StoreEntry{l, crypto::sealBucket(keys.seal, Bytes(64, 1), l)});
  }
  m.putBatch(entries);
  auto path = tempPath("smoothkv-store");
  m.persist(path);
  MemoryBackend r;
  r.restore(path);
  CHECK(r.serialize() == m.serialize());
  MemoryBackend again;
  again.deserialize(r.serialize());
  CHECK(again.serialize() == m.serialize());
  std::filesystem::remove(path);

  Bytes bad = m.serialize();
  bad[0] = 'X';
  CHECK_THROWS_AS(again.deserialize(bad), IntegrityError);
  Bytes truncated = m.serialize();
  truncated.resize(truncated.size() - 3);
  CHECK_THROWS_AS(again.deserialize(truncated), IntegrityError);
}

TEST_CASE("file backend reopens its contents") {
  auto path = tempPath("smoothkv-file");
  std::filesystem::remove(path);
  {
    FileBackend f(path);
    f.putBatch(sample(3));
    f.flush();
  }
  FileBackend g(path);
  CHECK(g.entryCount() == 3);
  CHECK(g.getBatch(std::vector<Label>{lab(2)})[0] == sample(3)[2].ciphertext);
  std::filesystem::remove(path);
}

TEST_CASE("frame codec") {
  using namespace wire;
  Frame f{Opcode::GetBatch, encodeLabels(std::vector<Label>{lab(1), lab(2)})};
  auto bytes = encodeFrame(f);
  CHECK(bytes.size() == 4 + 1 + 4 + 32);
  CHECK(bytes[0] == 1 + 4 + 32);
  CHECK(bytes[4] == 0x01);
  auto back = decodeFrame(bytes);
  CHECK(back.opcode == Opcode::GetBatch);
  CHECK(decodeLabels(back.payload) == std::vector<Label>{lab(1), lab(2)});
  CHECK(decodeEntries(encodeEntries(sample(3))) == sample(3));
  CHECK_THROWS_AS(decodeFrame(Bytes{9, 0, 0, 0, 1}), ProtocolError);
  CHECK_THROWS_AS(decodeLabels(Bytes{2, 0, 0, 0, 1, 2}), ProtocolError);
}

TEST_CASE("request handling maps errors to error frames") {
  using namespace wire;
  MemoryBackend m;
  m.putBatch(sample(2));
  auto reply = handleRequest(m, Frame{Opcode::GetBatch, encodeLabels(std::vector<Label>{lab(7)})});
  CHECK(reply.opcode == Opcode::Error);
  CHECK(reply.payload == Bytes{static_cast<std::uint8_t>(ErrorCode::MissingLabel)});
  CHECK(handleRequest(m, Frame{static_cast<Opcode>(0x55), {}}).opcode == Opcode::Error);
  CHECK(handleRequest(m, Frame{Opcode::PutBatch, Bytes{1, 0}}).payload ==
        Bytes{static_cast<std::uint8_t>(ErrorCode::Malformed)});
}

TEST_CASE("TCP client and server") {
  TraceSink trace;
  MemoryBackend store(&trace);
  wire::TcpServer server(store);
  wire::TcpBackend client("127.0.0.1", server.port());
  auto entries = sample(4);
  client.putBatch(entries);
  CHECK(client.entryCount() == 4);
  CHECK(client.payloadBytes() == 4 * (16 + 12));
  auto got = client.getBatch(std::vector<Label>{lab(3), lab(1)});
  REQUIRE(got.size() == 2);
  CHECK(got[0] == entries[3].ciphertext);
  CHECK_THROWS_AS(client.getBatch(std::vector<Label>{lab(99)}), MissingLabelError);
  client.eraseBatch(std::vector<Label>{lab(0)});
  CHECK(store.entryCount() == 3);
  CHECK(trace.size() == 4 + 2 + 1);

  wire::TcpBackend second("127.0.0.1", server.port());
  CHECK(second.entryCount() == 3);
  server.stop();
}
