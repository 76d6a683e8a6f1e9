#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <string>

#include "smoothkv/pool.hpp"
#include "smoothkv/rangeproxy.hpp"

namespace smoothkv {

struct RunConfig {
  std::uint64_t n = 0;          // records
  std::uint64_t domain = 0;     // N; 0 means n
  std::size_t valueLen = 16;    // L
  std::size_t z = 512;
  double alpha = 2.0;
  std::size_t theta = 5;
  double epsilon = 1.0;
  double lambda = 512.0;
  std::size_t k = 8;
  std::size_t batchSize = 0;    // 0 means ceil(3 n sigma / Z)
  double selectivity = 0.005;
  double batchesPerSecond = 0;  // 0 means back to back
  WeightPolicy policy = WeightPolicy::constant();
  std::uint64_t seed = 1;
  std::string backend = "memory";  // memory | file:<path> | tcp:<host>:<port>

  std::uint64_t effectiveDomain() const { return domain == 0 ? n : domain; }
  std::size_t effectiveBatchSize() const;
  RangeStoreConfig rangeStore() const;
  /// Throws ConfigError on out-of-range values.
  void validate() const;

  /// Applies one `key = value` setting. Keys use the CLI flag names.
  void set(const std::string& key, const std::string& value);
  std::map<std::string, std::string> toMap() const;
};

/// Reads a line-oriented `key = value` file; `#` starts a comment.
RunConfig loadConfigFile(const std::filesystem::path& path, RunConfig base = {});

/// Calls `step(tick)` exactly `ticks` times at a fixed cadence, whether or
/// not real work is pending. A rate of 0 runs back to back. Returns the
/// start time of each tick relative to the first.
std::vector<std::chrono::nanoseconds> fixedRateDriver(double batchesPerSecond, std::uint64_t ticks,
                                                      const std::function<void(std::uint64_t)>& step);

}  // namespace smoothkv
