#pragma once

#include <filesystem>
#include <memory>

#include "json.hpp"
#include "smoothkv/config.hpp"
#include "smoothkv/rangeproxy.hpp"

namespace smoothkv::state {

using Json = nlohmann::json;

Json toJson(const RangeProxy::Snapshot& snap);
RangeProxy::Snapshot snapshotFromJson(const Json& j);

Json toJson(const crypto::KeyMaterial& keys);
crypto::KeyMaterial keysFromJson(const Json& j);

/// "uniform" or "fixed:<width>".
std::shared_ptr<const range::RangeDistribution> parseQueryDistribution(const std::string& spec, Key domain);

/// Everything the proxy must keep between runs. The file holds the keys,
/// so it belongs with the proxy, never with the server's store file.
struct ProxyState {
  RunConfig config;
  std::string queries = "uniform";
  crypto::KeyMaterial keys;
  RangeProxy::Snapshot snapshot;
};

void save(const ProxyState& s, const std::filesystem::path& path);
ProxyState load(const std::filesystem::path& path);

}  // namespace smoothkv::state
