#include "smoothkv/backend.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>

namespace smoothkv {

namespace {

constexpr char kMagic[4] = {'S', 'M', 'K', 'V'};
constexpr std::uint16_t kFormatVersion = 1;

template <typename T>
void putLe(Bytes& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

template <typename T>
T getLe(std::span<const std::uint8_t> in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw IntegrityError("truncated store file");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(in[pos + i]) << (8 * i);
  pos += sizeof(T);
  return v;
}

}  // namespace

const char* opName(AccessEvent::Op op) {
  switch (op) {
    case AccessEvent::Op::Read:
      return "read";
    case AccessEvent::Op::Write:
      return "write";
    case AccessEvent::Op::Erase:
      return "erase";
  }
  return "?";
}

AccessEvent::Op parseOp(const std::string& name) {
  if (name == "read") return AccessEvent::Op::Read;
  if (name == "write") return AccessEvent::Op::Write;
  if (name == "erase") return AccessEvent::Op::Erase;
  throw ConfigError("unknown trace op '" + name + "'");
}

void TraceSink::record(std::span<const Label> labels, AccessEvent::Op op) {
  std::lock_guard lock(mu_);
  if (!enabled_) return;
  for (const auto& l : labels) events_.push_back(AccessEvent{next_++, l, op});
}

std::vector<AccessEvent> TraceSink::snapshot() const {
  std::lock_guard lock(mu_);
  return events_;
}

std::size_t TraceSink::size() const {
  std::lock_guard lock(mu_);
  return events_.size();
}

void TraceSink::clear() {
  std::lock_guard lock(mu_);
  events_.clear();
  next_ = 0;
}

void TraceSink::setEnabled(bool enabled) {
  std::lock_guard lock(mu_);
  enabled_ = enabled;
}

std::vector<Bytes> MemoryBackend::getBatch(std::span<const Label> labels) {
  std::lock_guard lock(mu_);
  std::vector<Bytes> out;
  out.reserve(labels.size());
  for (const auto& l : labels) {
    auto it = entries_.find(l);
    if (it == entries_.end()) throw MissingLabelError("unknown label " + toHex(l));
    out.push_back(it->second);
  }
  if (trace_) trace_->record(labels, AccessEvent::Op::Read);
  return out;
}

void MemoryBackend::putBatch(std::span<const StoreEntry> entries) {
  std::lock_guard lock(mu_);
  std::vector<Label> labels;
  labels.reserve(entries.size());
  for (const auto& e : entries) {
    entries_[e.label] = e.ciphertext;
    labels.push_back(e.label);
  }
  if (trace_) trace_->record(labels, AccessEvent::Op::Write);
}

void MemoryBackend::eraseBatch(std::span<const Label> labels) {
  std::lock_guard lock(mu_);
  for (const auto& l : labels) entries_.erase(l);
  if (trace_) trace_->record(labels, AccessEvent::Op::Erase);
}

std::size_t MemoryBackend::entryCount() {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::size_t MemoryBackend::payloadBytes() {
  std::lock_guard lock(mu_);
  std::size_t total = 0;
  for (const auto& [l, c] : entries_) total += l.size() + c.size();
  return total;
}

Bytes MemoryBackend::serialize() const {
  std::lock_guard lock(mu_);
  std::vector<const std::pair<const Label, Bytes>*> sorted;
  sorted.reserve(entries_.size());
  std::uint32_t ctLen = 0;
  for (const auto& e : entries_) {
    if (sorted.empty()) ctLen = static_cast<std::uint32_t>(e.second.size());
    if (e.second.size() != ctLen) throw IntegrityError("store holds ciphertexts of unequal length");
    sorted.push_back(&e);
  }
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->first < b->first; });

  Bytes out(kMagic, kMagic + 4);
  putLe<std::uint16_t>(out, kFormatVersion);
  putLe<std::uint32_t>(out, ctLen);
  putLe<std::uint64_t>(out, sorted.size());
  out.reserve(out.size() + sorted.size() * (16 + ctLen));
  for (auto* e : sorted) {
    out.insert(out.end(), e->first.begin(), e->first.end());
    out.insert(out.end(), e->second.begin(), e->second.end());
  }
  return out;
}

void MemoryBackend::deserialize(std::span<const std::uint8_t> data) {
  if (data.size() < 4 || std::memcmp(data.data(), kMagic, 4) != 0) throw IntegrityError("bad store file magic");
  std::size_t pos = 4;
  auto version = getLe<std::uint16_t>(data, pos);
  if (version != kFormatVersion) throw IntegrityError("unsupported store file version " + std::to_string(version));
  auto ctLen = getLe<std::uint32_t>(data, pos);
  auto count = getLe<std::uint64_t>(data, pos);
  const std::uint64_t stride = 16 + static_cast<std::uint64_t>(ctLen);
  const std::uint64_t rest = data.size() - pos;
  if (rest % stride != 0 || rest / stride != count) {
    throw IntegrityError("store file length does not match its header");
  }
  std::unordered_map<Label, Bytes, LabelHash> loaded;
  loaded.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Label l;
    std::copy_n(data.begin() + pos, 16, l.begin());
    pos += 16;
    loaded.emplace(l, Bytes(data.begin() + pos, data.begin() + pos + ctLen));
    pos += ctLen;
  }
  std::lock_guard lock(mu_);
  entries_ = std::move(loaded);
}

void MemoryBackend::persist(const std::filesystem::path& path) const {
  Bytes data = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw ConfigError("failed writing " + path.string());
}

void MemoryBackend::restore(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  deserialize(data);
}

FileBackend::FileBackend(std::filesystem::path path, TraceSink* trace) : MemoryBackend(trace), path_(std::move(path)) {
  if (std::filesystem::exists(path_)) restore(path_);
}

FileBackend::~FileBackend() {
  try {
    flush();
  } catch (...) {
  }
}

void FileBackend::flush() { persist(path_); }

}  // namespace smoothkv
