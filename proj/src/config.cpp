#include "smoothkv/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

namespace smoothkv {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parseNumber(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T v{};
  in >> v;
  if (!in || !in.eof()) throw ConfigError("invalid value '" + text + "' for " + key);
  if constexpr (std::is_unsigned_v<T>) {
    if (text.find('-') != std::string::npos) throw ConfigError("negative value for " + key);
  }
  return v;
}

std::string fmt(double v) {
  std::ostringstream out;
  out << v;
  return out.str();
}

}  // namespace

std::size_t RunConfig::effectiveBatchSize() const {
  if (batchSize > 0) return batchSize;
  const double est = std::ceil(3.0 * static_cast<double>(n) * selectivity / static_cast<double>(z) - 1e-9);
  return static_cast<std::size_t>(std::max(1.0, est));
}

RangeStoreConfig RunConfig::rangeStore() const {
  RangeStoreConfig c;
  c.z = z;
  c.valueLen = valueLen;
  c.alpha = alpha;
  c.theta = theta;
  c.policy = policy;
  c.k = k;
  c.epsilon = epsilon;
  c.lambda = lambda;
  c.batchSize = effectiveBatchSize();
  return c;
}

void RunConfig::validate() const {
  if (z == 0) throw ConfigError("bucket size must be positive");
  if (valueLen == 0) throw ConfigError("value length must be positive");
  if (!(alpha >= 1.0)) throw ConfigError("alpha must be >= 1");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(lambda > 1.0)) throw ConfigError("lambda must exceed 1");
  if (k == 0) throw ConfigError("k must be positive");
  if (!(selectivity > 0.0 && selectivity <= 1.0)) throw ConfigError("selectivity must lie in (0, 1]");
  if (!(batchesPerSecond >= 0.0)) throw ConfigError("rate must be non-negative");
  if (domain != 0 && domain < n) throw ConfigError("domain must be at least n");
}

void RunConfig::set(const std::string& rawKey, const std::string& rawValue) {
  const std::string key = trim(rawKey);
  const std::string value = trim(rawValue);
  if (key == "n") n = parseNumber<std::uint64_t>(key, value);
  else if (key == "domain" || key == "N") domain = parseNumber<std::uint64_t>(key, value);
  else if (key == "value-len" || key == "L") valueLen = parseNumber<std::size_t>(key, value);
  else if (key == "bucket-size" || key == "Z") z = parseNumber<std::size_t>(key, value);
  else if (key == "alpha") alpha = parseNumber<double>(key, value);
  else if (key == "theta") theta = parseNumber<std::size_t>(key, value);
  else if (key == "eps") epsilon = parseNumber<double>(key, value);
  else if (key == "lambda") lambda = parseNumber<double>(key, value);
  else if (key == "k") k = parseNumber<std::size_t>(key, value);
  else if (key == "batch-size") batchSize = parseNumber<std::size_t>(key, value);
  else if (key == "selectivity") selectivity = parseNumber<double>(key, value);
  else if (key == "rate") batchesPerSecond = parseNumber<double>(key, value);
  else if (key == "weights") policy = WeightPolicy::parse(value);
  else if (key == "seed") seed = parseNumber<std::uint64_t>(key, value);
  else if (key == "backend") backend = value;
  else throw ConfigError("unknown configuration key '" + key + "'");
}

std::map<std::string, std::string> RunConfig::toMap() const {
  return {{"n", std::to_string(n)},
          {"domain", std::to_string(effectiveDomain())},
          {"value-len", std::to_string(valueLen)},
          {"bucket-size", std::to_string(z)},
          {"alpha", fmt(alpha)},
          {"theta", std::to_string(theta)},
          {"eps", fmt(epsilon)},
          {"lambda", fmt(lambda)},
          {"k", std::to_string(k)},
          {"batch-size", std::to_string(effectiveBatchSize())},
          {"selectivity", fmt(selectivity)},
          {"rate", fmt(batchesPerSecond)},
          {"weights", policy.toString()},
          {"seed", std::to_string(seed)},
          {"backend", backend}};
}

RunConfig loadConfigFile(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineNo) + ": expected key = value");
    }
    base.set(line.substr(0, eq), line.substr(eq + 1));
  }
  return base;
}

std::vector<std::chrono::nanoseconds> fixedRateDriver(double batchesPerSecond, std::uint64_t ticks,
                                                      const std::function<void(std::uint64_t)>& step) {
  using clock = std::chrono::steady_clock;
  if (batchesPerSecond < 0.0) throw ConfigError("rate must be non-negative");
  std::vector<std::chrono::nanoseconds> starts;
  starts.reserve(ticks);
  const auto t0 = clock::now();
  const auto period = batchesPerSecond > 0.0
                          ? std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(1.0 / batchesPerSecond))
                          : clock::duration::zero();
  for (std::uint64_t t = 0; t < ticks; ++t) {
    if (batchesPerSecond > 0.0) std::this_thread::sleep_until(t0 + period * static_cast<long>(t));
    starts.push_back(std::chrono::duration_cast<std::chrono::nanoseconds>(clock::now() - t0));
    step(t);
  }
  return starts;
}

}  // namespace smoothkv
