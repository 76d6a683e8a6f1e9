#pragma once

#include <filesystem>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "smoothkv/types.hpp"

namespace smoothkv {

/// One adversary-visible server access.
struct AccessEvent {
  enum class Op : std::uint8_t { Read = 0, Write = 1, Erase = 2 };
  std::uint64_t slot = 0;
  Label label{};
  Op op = Op::Read;

  friend bool operator==(const AccessEvent&, const AccessEvent&) = default;
};

const char* opName(AccessEvent::Op op);
AccessEvent::Op parseOp(const std::string& name);

/// Append-only, internally synchronized record of server accesses.
class TraceSink {
 public:
  void record(std::span<const Label> labels, AccessEvent::Op op);
  std::vector<AccessEvent> snapshot() const;
  std::size_t size() const;
  void clear();
  void setEnabled(bool enabled);

 private:
  mutable std::mutex mu_;
  std::vector<AccessEvent> events_;
  std::uint64_t next_ = 0;
  bool enabled_ = true;
};

struct StoreEntry {
  Label label{};
  Bytes ciphertext;
  friend bool operator==(const StoreEntry&, const StoreEntry&) = default;
};

/// The untrusted server's label -> ciphertext store.
class Backend {
 public:
  virtual ~Backend() = default;
  /// Ciphertexts in request order. Throws MissingLabelError for unknown labels.
  virtual std::vector<Bytes> getBatch(std::span<const Label> labels) = 0;
  /// Upsert.
  virtual void putBatch(std::span<const StoreEntry> entries) = 0;
  virtual void eraseBatch(std::span<const Label> labels) = 0;
  virtual std::size_t entryCount() = 0;
  virtual std::size_t payloadBytes() = 0;
};

/// In-memory store; optionally traced.
class MemoryBackend : public Backend {
 public:
  explicit MemoryBackend(TraceSink* trace = nullptr) : trace_(trace) {}

  std::vector<Bytes> getBatch(std::span<const Label> labels) override;
  void putBatch(std::span<const StoreEntry> entries) override;
  void eraseBatch(std::span<const Label> labels) override;
  std::size_t entryCount() override;
  std::size_t payloadBytes() override;

  /// Writes the store file: magic, version, ciphertext length, count, then
  /// (label, ciphertext) entries ordered by label.
  void persist(const std::filesystem::path& path) const;
  /// Replaces the contents with a persisted store.
  void restore(const std::filesystem::path& path);
  /// Serialized form used by persist().
  Bytes serialize() const;
  void deserialize(std::span<const std::uint8_t> data);

  void setTrace(TraceSink* trace) { trace_ = trace; }

 private:
  mutable std::mutex mu_;
  std::unordered_map<Label, Bytes, LabelHash> entries_;
  TraceSink* trace_ = nullptr;
};

/// MemoryBackend that loads from `path` on open (if present) and writes back on flush/destruction.
class FileBackend : public MemoryBackend {
 public:
  FileBackend(std::filesystem::path path, TraceSink* trace = nullptr);
  ~FileBackend() override;
  void flush();

 private:
  std::filesystem::path path_;
};

}  // namespace smoothkv
