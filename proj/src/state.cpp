#include "smoothkv/state.hpp"

#include <fstream>

namespace smoothkv::state {

namespace {

template <std::size_t N>
std::array<std::uint8_t, N> arrayFromHex(const std::string& hex) {
  Bytes b = fromHex(hex);
  if (b.size() != N) throw IntegrityError("key material has the wrong length");
  std::array<std::uint8_t, N> out{};
  std::copy(b.begin(), b.end(), out.begin());
  return out;
}

Json toJson(const SmoothingState& s) {
  return Json{{"slots", s.slots},           {"replicas", s.replicas}, {"first_slot", s.firstSlot},
              {"dummy_slots", s.dummySlots}, {"bucket_prob", s.bucketProb}, {"fake_dist", s.fakeDist}};
}

SmoothingState smoothingFromJson(const Json& j) {
  SmoothingState s;
  s.slots = j.at("slots").get<std::size_t>();
  s.replicas = j.at("replicas").get<std::vector<std::uint32_t>>();
  s.firstSlot = j.at("first_slot").get<std::vector<std::size_t>>();
  s.dummySlots = j.at("dummy_slots").get<std::size_t>();
  s.bucketProb = j.at("bucket_prob").get<std::vector<double>>();
  s.fakeDist = j.at("fake_dist").get<std::vector<double>>();
  if (s.replicas.size() != s.firstSlot.size() || s.fakeDist.size() != s.slots) {
    throw IntegrityError("inconsistent smoothing state");
  }
  return s;
}

Json toJson(const LevelImage& level) {
  Json tags = Json::array();
  for (const auto& t : level.tags) tags.push_back({t.l, t.r});
  return Json{{"epoch", level.epoch},
              {"units", level.units},
              {"tags", tags},
              {"physical_of", level.physicalOf},
              {"logical_of", level.logicalOf},
              {"smoothing", toJson(level.smoothing)},
              {"request_weight", level.requestWeight}};
}

LevelImage levelFromJson(const Json& j) {
  LevelImage level;
  level.epoch = j.at("epoch").get<std::uint64_t>();
  level.units = j.at("units").get<std::uint64_t>();
  for (const auto& t : j.at("tags")) level.tags.push_back(range::Tag{t.at(0).get<Key>(), t.at(1).get<Key>()});
  level.physicalOf = j.at("physical_of").get<std::vector<std::uint64_t>>();
  level.logicalOf = j.at("logical_of").get<std::vector<std::uint64_t>>();
  level.requestWeight = j.at("request_weight").get<double>();
  if (!level.empty()) level.smoothing = smoothingFromJson(j.at("smoothing"));
  return level;
}

}  // namespace

Json toJson(const RangeProxy::Snapshot& snap) {
  Json levels = Json::array();
  for (const auto& l : snap.levels) levels.push_back(toJson(l));
  Json buffer = Json::array();
  for (const auto& r : snap.buffer) {
    buffer.push_back({{"key", r.key}, {"seq", r.seq}, {"tombstone", r.tombstone}, {"value", toHex(r.value)}});
  }
  return Json{{"levels", levels},        {"digits", snap.digits},         {"buffer", buffer},
              {"next_seq", snap.nextSeq}, {"next_epoch", snap.nextEpoch}, {"epsilon_spent", snap.epsilonSpent}};
}

RangeProxy::Snapshot snapshotFromJson(const Json& j) {
  RangeProxy::Snapshot snap;
  for (const auto& l : j.at("levels")) snap.levels.push_back(levelFromJson(l));
  snap.digits = j.at("digits").get<std::vector<std::uint64_t>>();
  for (const auto& r : j.at("buffer")) {
    snap.buffer.push_back(Record{r.at("key").get<Key>(), r.at("seq").get<std::uint64_t>(),
                                 r.at("tombstone").get<bool>(), fromHex(r.at("value").get<std::string>())});
  }
  snap.nextSeq = j.at("next_seq").get<std::uint64_t>();
  snap.nextEpoch = j.at("next_epoch").get<std::uint64_t>();
  snap.epsilonSpent = j.at("epsilon_spent").get<double>();
  return snap;
}

Json toJson(const crypto::KeyMaterial& keys) {
  return Json{{"label", toHex(keys.label.bytes.data(), keys.label.bytes.size())},
              {"seal", toHex(keys.seal.bytes.data(), keys.seal.bytes.size())}};
}

crypto::KeyMaterial keysFromJson(const Json& j) {
  crypto::KeyMaterial keys;
  keys.label.bytes = arrayFromHex<crypto::kKeyBytes>(j.at("label").get<std::string>());
  keys.seal.bytes = arrayFromHex<crypto::kKeyBytes>(j.at("seal").get<std::string>());
  return keys;
}

std::shared_ptr<const range::RangeDistribution> parseQueryDistribution(const std::string& spec, Key domain) {
  if (spec == "uniform") return std::make_shared<range::UniformRanges>(domain);
  if (spec.rfind("fixed:", 0) == 0) {
    Key width = 0;
    try {
      width = std::stoull(spec.substr(6));
    } catch (const std::exception&) {
      throw ConfigError("bad query width in '" + spec + "'");
    }
    return std::make_shared<range::FixedWidthRanges>(domain, width);
  }
  throw ConfigError("unknown query distribution '" + spec + "' (uniform, fixed:<width>)");
}

void save(const ProxyState& s, const std::filesystem::path& path) {
  Json config = Json::object();
  for (const auto& [k, v] : s.config.toMap()) config[k] = v;
  Json j{{"config", config}, {"queries", s.queries}, {"keys", toJson(s.keys)}, {"snapshot", toJson(s.snapshot)}};
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + tmp);
    out << j.dump(1) << "\n";
    if (!out) throw ConfigError("failed writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

ProxyState load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open proxy state " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw IntegrityError("proxy state " + path.string() + " is not valid JSON: " + e.what());
  }
  ProxyState s;
  try {
    for (const auto& [k, v] : j.at("config").items()) {
      s.config.set(k, v.get<std::string>());
    }
    s.queries = j.at("queries").get<std::string>();
    s.keys = keysFromJson(j.at("keys"));
    s.snapshot = snapshotFromJson(j.at("snapshot"));
  } catch (const Json::exception& e) {
    throw IntegrityError("proxy state " + path.string() + " is malformed: " + e.what());
  }
  return s;
}

}  // namespace smoothkv::state
