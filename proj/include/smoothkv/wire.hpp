#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "smoothkv/backend.hpp"

namespace smoothkv::wire {

/// Frame: [len u32][opcode u8][payload], len = 1 + payload size, little-endian.
enum class Opcode : std::uint8_t {
  GetBatch = 0x01,
  PutBatch = 0x02,
  EraseBatch = 0x03,
  Stats = 0x04,
  GetReply = 0x81,
  PutAck = 0x82,
  EraseAck = 0x83,
  StatsReply = 0x84,
  Error = 0x7F,
};

enum class ErrorCode : std::uint8_t { MissingLabel = 1, Malformed = 2, UnknownOpcode = 3, Internal = 4 };

inline constexpr std::uint32_t kMaxFrame = 1u << 30;

struct Frame {
  Opcode opcode = Opcode::Error;
  Bytes payload;
};

Bytes encodeFrame(const Frame& frame);
/// Parses one complete frame; throws ProtocolError on malformed input.
Frame decodeFrame(std::span<const std::uint8_t> data);

Bytes encodeLabels(std::span<const Label> labels);
std::vector<Label> decodeLabels(std::span<const std::uint8_t> payload);
/// [count u32][count x (u32 len, bytes)]
Bytes encodeBlobs(std::span<const Bytes> blobs);
std::vector<Bytes> decodeBlobs(std::span<const std::uint8_t> payload);
Bytes encodeEntries(std::span<const StoreEntry> entries);
std::vector<StoreEntry> decodeEntries(std::span<const std::uint8_t> payload);

/// Answers one request frame against `store`.
Frame handleRequest(Backend& store, const Frame& request);

/// Serves a backend over TCP on 127.0.0.1, one thread per connection.
class TcpServer {
 public:
  /// Port 0 picks an ephemeral port.
  TcpServer(Backend& store, std::uint16_t port = 0);
  ~TcpServer();
  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;

  std::uint16_t port() const { return port_; }
  void stop();

 private:
  void acceptLoop();
  void serve(int fd);

  Backend& store_;
  int listenFd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{true};
  std::thread acceptor_;
  std::mutex mu_;
  std::vector<std::thread> workers_;
  std::vector<int> clients_;
};

/// Backend client speaking the wire protocol over one TCP connection.
class TcpBackend : public Backend {
 public:
  TcpBackend(const std::string& host, std::uint16_t port);
  ~TcpBackend() override;
  TcpBackend(const TcpBackend&) = delete;
  TcpBackend& operator=(const TcpBackend&) = delete;

  std::vector<Bytes> getBatch(std::span<const Label> labels) override;
  void putBatch(std::span<const StoreEntry> entries) override;
  void eraseBatch(std::span<const Label> labels) override;
  std::size_t entryCount() override;
  std::size_t payloadBytes() override;

 private:
  Frame roundTrip(const Frame& request, Opcode expected);

  int fd_ = -1;
  std::mutex mu_;
};

}  // namespace smoothkv::wire
