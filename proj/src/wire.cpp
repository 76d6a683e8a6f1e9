#include "smoothkv/wire.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <optional>

namespace smoothkv::wire {

namespace {

template <typename T>
void putLe(Bytes& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

template <typename T>
T getLe(std::span<const std::uint8_t> in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw ProtocolError("truncated payload");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(in[pos + i]) << (8 * i);
  pos += sizeof(T);
  return v;
}

Label getLabel(std::span<const std::uint8_t> in, std::size_t& pos) {
  if (pos + 16 > in.size()) throw ProtocolError("truncated label");
  Label l;
  std::memcpy(l.data(), in.data() + pos, 16);
  pos += 16;
  return l;
}

void expectEnd(std::span<const std::uint8_t> in, std::size_t pos) {
  if (pos != in.size()) throw ProtocolError("trailing bytes in payload");
}

void writeAll(int fd, const Bytes& data) {
  std::size_t off = 0;
  while (off < data.size()) {
    ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw ProtocolError(std::string("send failed: ") + std::strerror(errno));
    off += static_cast<std::size_t>(n);
  }
}

// False on clean EOF before any byte was read.
bool readAll(int fd, std::uint8_t* out, std::size_t len) {
  std::size_t off = 0;
  while (off < len) {
    ssize_t n = ::recv(fd, out + off, len - off, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n == 0 && off == 0) return false;
    if (n <= 0) throw ProtocolError("connection closed mid-frame");
    off += static_cast<std::size_t>(n);
  }
  return true;
}

std::optional<Frame> readFrame(int fd) {
  std::uint8_t head[4];
  if (!readAll(fd, head, 4)) return std::nullopt;
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(head[i]) << (8 * i);
  if (len == 0 || len > kMaxFrame) throw ProtocolError("bad frame length");
  Bytes body(len);
  if (!readAll(fd, body.data(), len)) throw ProtocolError("connection closed mid-frame");
  return Frame{static_cast<Opcode>(body[0]), Bytes(body.begin() + 1, body.end())};
}

Frame errorFrame(ErrorCode code) { return Frame{Opcode::Error, Bytes{static_cast<std::uint8_t>(code)}}; }

}  // namespace

Bytes encodeFrame(const Frame& frame) {
  if (frame.payload.size() + 1 > kMaxFrame) throw ProtocolError("frame too large");
  Bytes out;
  out.reserve(frame.payload.size() + 5);
  putLe<std::uint32_t>(out, static_cast<std::uint32_t>(frame.payload.size() + 1));
  out.push_back(static_cast<std::uint8_t>(frame.opcode));
  out.insert(out.end(), frame.payload.begin(), frame.payload.end());
  return out;
}

Frame decodeFrame(std::span<const std::uint8_t> data) {
  std::size_t pos = 0;
  const auto len = getLe<std::uint32_t>(data, pos);
  if (len == 0 || len > kMaxFrame || data.size() != 4 + static_cast<std::size_t>(len)) {
    throw ProtocolError("bad frame length");
  }
  return Frame{static_cast<Opcode>(data[4]), Bytes(data.begin() + 5, data.end())};
}

Bytes encodeLabels(std::span<const Label> labels) {
  Bytes out;
  putLe<std::uint32_t>(out, static_cast<std::uint32_t>(labels.size()));
  for (const auto& l : labels) out.insert(out.end(), l.begin(), l.end());
  return out;
}

std::vector<Label> decodeLabels(std::span<const std::uint8_t> payload) {
  std::size_t pos = 0;
  const auto count = getLe<std::uint32_t>(payload, pos);
  if (static_cast<std::size_t>(count) * 16 != payload.size() - pos) throw ProtocolError("label count mismatch");
  std::vector<Label> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) out.push_back(getLabel(payload, pos));
  return out;
}

Bytes encodeBlobs(std::span<const Bytes> blobs) {
  Bytes out;
  putLe<std::uint32_t>(out, static_cast<std::uint32_t>(blobs.size()));
  for (const auto& b : blobs) {
    putLe<std::uint32_t>(out, static_cast<std::uint32_t>(b.size()));
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

std::vector<Bytes> decodeBlobs(std::span<const std::uint8_t> payload) {
  std::size_t pos = 0;
  const auto count = getLe<std::uint32_t>(payload, pos);
  std::vector<Bytes> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = getLe<std::uint32_t>(payload, pos);
    if (pos + len > payload.size()) throw ProtocolError("truncated blob");
    out.emplace_back(payload.begin() + pos, payload.begin() + pos + len);
    pos += len;
  }
  expectEnd(payload, pos);
  return out;
}

Bytes encodeEntries(std::span<const StoreEntry> entries) {
  Bytes out;
  putLe<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    out.insert(out.end(), e.label.begin(), e.label.end());
    putLe<std::uint32_t>(out, static_cast<std::uint32_t>(e.ciphertext.size()));
    out.insert(out.end(), e.ciphertext.begin(), e.ciphertext.end());
  }
  return out;
}

std::vector<StoreEntry> decodeEntries(std::span<const std::uint8_t> payload) {
  std::size_t pos = 0;
  const auto count = getLe<std::uint32_t>(payload, pos);
  std::vector<StoreEntry> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    StoreEntry e;
    e.label = getLabel(payload, pos);
    const auto len = getLe<std::uint32_t>(payload, pos);
    if (pos + len > payload.size()) throw ProtocolError("truncated ciphertext");
    e.ciphertext.assign(payload.begin() + pos, payload.begin() + pos + len);
    pos += len;
    out.push_back(std::move(e));
  }
  expectEnd(payload, pos);
  return out;
}

Frame handleRequest(Backend& store, const Frame& request) {
  try {
    switch (request.opcode) {
      case Opcode::GetBatch: {
        auto labels = decodeLabels(request.payload);
        return Frame{Opcode::GetReply, encodeBlobs(store.getBatch(labels))};
      }
      case Opcode::PutBatch: {
        auto entries = decodeEntries(request.payload);
        store.putBatch(entries);
        Bytes ack;
        putLe<std::uint32_t>(ack, static_cast<std::uint32_t>(entries.size()));
        return Frame{Opcode::PutAck, ack};
      }
      case Opcode::EraseBatch: {
        auto labels = decodeLabels(request.payload);
        store.eraseBatch(labels);
        Bytes ack;
        putLe<std::uint32_t>(ack, static_cast<std::uint32_t>(labels.size()));
        return Frame{Opcode::EraseAck, ack};
      }
      case Opcode::Stats: {
        Bytes out;
        putLe<std::uint64_t>(out, store.entryCount());
        putLe<std::uint64_t>(out, store.payloadBytes());
        return Frame{Opcode::StatsReply, out};
      }
      default:
        return errorFrame(ErrorCode::UnknownOpcode);
    }
  } catch (const MissingLabelError&) {
    return errorFrame(ErrorCode::MissingLabel);
  } catch (const ProtocolError&) {
    return errorFrame(ErrorCode::Malformed);
  } catch (const std::exception&) {
    return errorFrame(ErrorCode::Internal);
  }
}

TcpServer::TcpServer(Backend& store, std::uint16_t port) : store_(store) {
  listenFd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listenFd_ < 0) throw ProtocolError("socket() failed");
  int one = 1;
  ::setsockopt(listenFd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(listenFd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(listenFd_, 16) != 0) {
    ::close(listenFd_);
    throw ProtocolError(std::string("cannot listen: ") + std::strerror(errno));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listenFd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  acceptor_ = std::thread([this] { acceptLoop(); });
}

TcpServer::~TcpServer() { stop(); }

void TcpServer::stop() {
  if (!running_.exchange(false)) return;
  ::shutdown(listenFd_, SHUT_RDWR);
  ::close(listenFd_);
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(mu_);
    for (int fd : clients_) ::shutdown(fd, SHUT_RDWR);
    workers = std::move(workers_);
  }
  for (auto& t : workers) t.join();
}

void TcpServer::acceptLoop() {
  while (running_) {
    int fd = ::accept(listenFd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      return;
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    std::lock_guard lock(mu_);
    clients_.push_back(fd);
    workers_.emplace_back([this, fd] { serve(fd); });
  }
}

void TcpServer::serve(int fd) {
  try {
    while (auto request = readFrame(fd)) writeAll(fd, encodeFrame(handleRequest(store_, *request)));
  } catch (const ProtocolError&) {
    try {
      writeAll(fd, encodeFrame(errorFrame(ErrorCode::Malformed)));
    } catch (const ProtocolError&) {
    }
  }
  ::close(fd);
}

TcpBackend::TcpBackend(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res) {
    throw ProtocolError("cannot resolve " + host);
  }
  fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  const int rc = fd_ < 0 ? -1 : ::connect(fd_, res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc != 0) {
    if (fd_ >= 0) ::close(fd_);
    throw ProtocolError("cannot connect to " + host + ":" + std::to_string(port));
  }
  int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

TcpBackend::~TcpBackend() {
  if (fd_ >= 0) ::close(fd_);
}

Frame TcpBackend::roundTrip(const Frame& request, Opcode expected) {
  std::lock_guard lock(mu_);
  writeAll(fd_, encodeFrame(request));
  auto reply = readFrame(fd_);
  if (!reply) throw ProtocolError("server closed the connection");
  if (reply->opcode == Opcode::Error) {
    const auto code = reply->payload.empty() ? ErrorCode::Internal : static_cast<ErrorCode>(reply->payload[0]);
    if (code == ErrorCode::MissingLabel) throw MissingLabelError("server reports a missing label");
    throw ProtocolError("server error code " + std::to_string(static_cast<int>(code)));
  }
  if (reply->opcode != expected) throw ProtocolError("unexpected reply opcode");
  return std::move(*reply);
}

std::vector<Bytes> TcpBackend::getBatch(std::span<const Label> labels) {
  auto reply = roundTrip(Frame{Opcode::GetBatch, encodeLabels(labels)}, Opcode::GetReply);
  auto blobs = decodeBlobs(reply.payload);
  if (blobs.size() != labels.size()) throw ProtocolError("reply count mismatch");
  return blobs;
}

void TcpBackend::putBatch(std::span<const StoreEntry> entries) {
  roundTrip(Frame{Opcode::PutBatch, encodeEntries(entries)}, Opcode::PutAck);
}

void TcpBackend::eraseBatch(std::span<const Label> labels) {
  roundTrip(Frame{Opcode::EraseBatch, encodeLabels(labels)}, Opcode::EraseAck);
}

std::size_t TcpBackend::entryCount() {
  auto reply = roundTrip(Frame{Opcode::Stats, {}}, Opcode::StatsReply);
  std::size_t pos = 0;
  return getLe<std::uint64_t>(reply.payload, pos);
}

std::size_t TcpBackend::payloadBytes() {
  auto reply = roundTrip(Frame{Opcode::Stats, {}}, Opcode::StatsReply);
  std::size_t pos = 8;
  return getLe<std::uint64_t>(reply.payload, pos);
}

}  // namespace smoothkv::wire
