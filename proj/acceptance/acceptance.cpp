// One PASS/FAIL line per acceptance criterion; exit status is the failure count.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "smoothkv/domerge.hpp"
#include "smoothkv/dynamize.hpp"
#include "smoothkv/experiments.hpp"
#include "smoothkv/osort.hpp"
#include "smoothkv/wire.hpp"

using namespace smoothkv;
using namespace smoothkv::experiments;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int precision = 4) {
  std::ostringstream out;
  out.precision(precision);
  out << v;
  return out.str();
}

// Spread of the RSD estimate: RSD over `chunks` consecutive pieces of the read stream.
double rsdSigma(const std::vector<std::size_t>& reads, std::size_t universe, std::size_t chunks = 10) {
  std::vector<double> values;
  const std::size_t len = reads.size() / chunks;
  for (std::size_t c = 0; c < chunks; ++c) {
    std::span<const std::size_t> part(reads.data() + c * len, len);
    values.push_back(leak::rsd(leak::transitionMatrix(part, universe).cells));
  }
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(chunks);
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(chunks - 1);
  // A chunk holds 1/chunks of the pairs, so the full-stream spread is sqrt(chunks) smaller.
  return std::sqrt(var / static_cast<double>(chunks));
}

Outcome decorrelation() {
  auto run = [](KeyWorkload w, SmoothedKv::Release rel, std::size_t theta) {
    KvExperiment e;
    e.workload = w;
    e.release = rel;
    e.theta = theta;
    e.queries = 100000;
    e.batchSize = 3;
    e.queriesPerBatch = 1.3;
    e.seed = 1;
    return runKv(e);
  };
  const auto indep = run(KeyWorkload::Independent, SmoothedKv::Release::Pool, 4);
  const auto fifo = run(KeyWorkload::Markov, SmoothedKv::Release::Fifo, 0);
  std::vector<double> rsd, sigma;
  for (std::size_t theta : {0u, 1u, 2u, 4u}) {
    auto r = run(KeyWorkload::Markov, SmoothedKv::Release::Pool, theta);
    rsd.push_back(r.rsd);
    sigma.push_back(rsdSigma(r.readSlots, r.slots));
  }
  int inversions = 0;
  bool withinNoise = true;
  for (std::size_t i = 0; i + 1 < rsd.size(); ++i) {
    if (rsd[i + 1] > rsd[i]) {
      ++inversions;
      withinNoise = withinNoise && rsd[i + 1] - rsd[i] <= std::hypot(sigma[i], sigma[i + 1]);
    }
  }
  const bool near = rsd[3] <= 1.5 * indep.rsd;
  const bool belowFifo = rsd[0] < fifo.rsd;
  const bool monotone = inversions == 0 || (inversions == 1 && withinNoise);
  return {near && belowFifo && monotone,
          "RSD theta{0,1,2,4}=" + num(rsd[0]) + "," + num(rsd[1]) + "," + num(rsd[2]) + "," + num(rsd[3]) +
              " independent=" + num(indep.rsd) + " fifo=" + num(fifo.rsd) + " inversions=" + std::to_string(inversions)};
}

Outcome latencyTradeoff() {
  auto mean = [](std::size_t theta) {
    KvExperiment e;
    e.theta = theta;
    e.queries = 30000;
    e.batchSize = 1;
    e.queriesPerBatch = 0.1;
    e.seed = 2;
    return runKv(e).latency.mean;
  };
  const double l1 = mean(1), l4 = mean(4);
  const double ratio = l4 / l1;
  return {ratio >= 2.5 && ratio <= 5.5,
          "mean batches theta=1 " + num(l1) + ", theta=4 " + num(l4) + ", ratio " + num(ratio) + " (band [2.5, 5.5])"};
}

Outcome uniformity() {
  bool ok = true;
  std::string detail;
  for (auto w : {KeyWorkload::Markov, KeyWorkload::Zipf, KeyWorkload::Uniform}) {
    KvExperiment e;
    e.workload = w;
    e.keys = 16;
    e.zipfS = 1.1;
    e.theta = 4;
    e.queries = 70000;
    e.writeFraction = 0.1;
    e.seed = 3;
    auto r = runKv(e);
    const bool pass = r.readSlots.size() >= 200000 && r.uniformity.maxRelativeDeviation <= 0.05 && r.uniformity.pValue > 0.01;
    ok = ok && pass;
    detail += toString(w) + "(n'=" + std::to_string(r.slots) + ", slots=" + std::to_string(r.readSlots.size()) +
              ", maxdev=" + num(r.uniformity.maxRelativeDeviation) + ", p=" + num(r.uniformity.pValue) + ") ";
  }
  return {ok, detail};
}

RangeExperiment crdaWorkload() {
  RangeExperiment e;
  e.n = 8192;
  e.store.z = 512;
  e.store.k = 1;
  e.store.theta = 5;
  e.store.batchSize = 1;  // ceil(3 * 8192 * 0.005 / 512)
  e.width = 41;           // selectivity 0.5%
  e.queries = 60000;
  e.queriesPerBatch = 0.3;
  e.seed = 4;
  return e;
}

Outcome rorCrda() {
  auto e = crdaWorkload();
  TraceSink sink;
  MemoryBackend backend(&sink);
  auto r = runRange(e, backend, sink);
  Rng rng(44);
  auto ideal = leak::idealTrace(r.universe, r.reads.size(), rng);
  auto real = leak::rorCrdaDistinguish(r.reads, ideal);
  auto [direct, labels] = directAccessReads(e, r.reads.size());
  auto directIdeal = leak::idealTrace(labels, direct.size(), rng);
  auto control = leak::rorCrdaDistinguish(direct, directIdeal);
  const bool ok = r.reads.size() >= 200000 && real.indistinguishable() && control.frequencyP < 1e-6 &&
                  control.pairP < 1e-6;
  return {ok, "slots=" + std::to_string(r.reads.size()) + " smoothed p(freq)=" + num(real.frequencyP) +
                  " p(pair)=" + num(real.pairP) + "; direct p(freq)=" + num(control.frequencyP) +
                  " p(pair)=" + num(control.pairP)};
}

Outcome bucketMath() {
  Rng rng(5);
  double worst = 0.0;
  std::size_t checks = 0;
  for (Key n : {Key{4}, Key{16}, Key{64}}) {
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> w((n + 1) * (n + 1), 0.0);
      double total = 0.0;
      for (Key x = 1; x <= n; ++x) {
        for (Key y = x; y <= n; ++y) {
          w[x * (n + 1) + y] = rng.uniform01() < 0.3 ? 0.0 : rng.uniform01();
          total += w[x * (n + 1) + y];
        }
      }
      auto pmf = [&](Key x, Key y) { return y < x ? 0.0 : w[x * (n + 1) + y] / total; };
      auto cum = range::CumulativeRangeDist::fromPmf(n, pmf);
      std::vector<range::Tag> tags;
      for (Key at = 1; at <= n;) {
        Key r = std::min<Key>(n, at + rng.below(4));
        tags.push_back(range::Tag{at, r});
        at = r + 1 + rng.below(2);
      }
      auto probs = range::deriveBucketDistribution(cum, tags);
      for (std::size_t i = 0; i < tags.size(); ++i) {
        double brute = 0.0, bruteUniform = 0.0;
        for (Key x = 1; x <= n; ++x) {
          for (Key y = x; y <= n; ++y) {
            if (x <= tags[i].r && y >= tags[i].l) {
              brute += pmf(x, y);
              bruteUniform += 2.0 / (static_cast<double>(n) * static_cast<double>(n + 1));
            }
          }
        }
        worst = std::max(worst, std::abs(probs[i] - brute));
        worst = std::max(worst, std::abs(range::uniformBucketProbability(n, tags[i].l, tags[i].r) - bruteUniform));
        checks += 2;
      }
    }
  }
  return {worst <= 1e-12, std::to_string(checks) + " bucket probabilities, max abs error " + num(worst)};
}

Outcome obliviousSort() {
  Rng rng(6);
  bool ok = true;
  for (std::size_t n : {std::size_t{7}, std::size_t{64}, std::size_t{1000}}) {
    osort::SortTrace reference;
    for (int trial = 0; trial < 500; ++trial) {
      std::vector<std::uint64_t> v(n);
      for (auto& x : v) x = rng.below(n);
      auto oracle = v;
      std::sort(oracle.begin(), oracle.end());
      osort::SortTrace trace;
      osort::obliviousSort(v, std::less<>{}, osort::SortOptions{&trace});
      ok = ok && v == oracle;
      if (trial == 0) reference = std::move(trace);
      else ok = ok && trace == reference;
    }
  }
  const int runs = 60000;
  std::map<std::vector<int>, int> counts;
  for (int i = 0; i < runs; ++i) {
    std::vector<int> v{0, 1, 2};
    osort::obliviousShuffle(v, rng);
    ++counts[v];
  }
  const double p = 1.0 / 6.0, sigma = std::sqrt(runs * p * (1 - p));
  double worst = 0.0;
  for (const auto& [perm, c] : counts) worst = std::max(worst, std::abs(c - runs * p) / sigma);
  ok = ok && counts.size() == 6 && worst <= 3.0;
  return {ok, "1500 sorts match oracle with fixed traces; shuffle max deviation " + num(worst, 3) + " sigma"};
}

Outcome doMerge() {
  using namespace domerge;
  Rng rng(7);
  std::size_t mismatches = 0, overflows = 0, maxBuffer = 0;
  auto sortedRun = [&](std::size_t len) {
    std::vector<std::uint32_t> v(len);
    for (auto& x : v) x = static_cast<std::uint32_t>(rng.below(1u << 20));
    std::sort(v.begin(), v.end());
    return v;
  };
  for (int i = 0; i < 1000; ++i) {
    auto a = sortedRun(rng.below(1500)), b = sortedRun(rng.below(1500));
    std::vector<std::uint32_t> oracle;
    std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(oracle));
    const std::uint64_t cap = kCapacityStep * (2 + rng.below(15));
    MergeStats stats;
    try {
      mismatches += doMerge2(a, b, cap, 1.0, rng, std::less<>{}, &stats) != oracle;
      maxBuffer = std::max<std::size_t>(maxBuffer, stats.maxBufferLoad / cap);
    } catch (const BufferOverflowError&) {
      ++overflows;
    }
  }
  for (int i = 0; i < 200; ++i) {
    std::vector<std::vector<std::uint32_t>> arrays;
    std::vector<std::uint32_t> oracle;
    for (int j = 0; j < 8; ++j) {
      arrays.push_back(sortedRun(rng.below(600)));
      oracle.insert(oracle.end(), arrays.back().begin(), arrays.back().end());
    }
    std::sort(oracle.begin(), oracle.end());
    try {
      mismatches += kWayDOMerge(arrays, 32, 1.0, rng, std::less<>{}) != oracle;
    } catch (const BufferOverflowError&) {
      ++overflows;
    }
  }
  // Bin loads against the truncated Laplace pmf, final partial bins excluded.
  const std::uint64_t cap = 64;
  const auto noise = TruncLaplace::forBin(1.0, cap);
  const auto pmf = noise.pmf();
  std::vector<double> counts(pmf.size(), 0.0);
  std::size_t bins = 0;
  std::vector<std::uint32_t> data(1000 * cap);
  std::iota(data.begin(), data.end(), 0u);
  while (bins < 100000) {
    auto packed = binPack(data, cap, 1.0, rng);
    for (std::size_t i = 0; i + 1 < packed.loads.size() && bins < 100000; ++i, ++bins) {
      counts[packed.loads[i] - (cap / 2 - static_cast<std::uint64_t>(noise.truncation))] += 1.0;
    }
  }
  const double p = leak::goodnessOfFit(counts, pmf);
  return {mismatches == 0 && overflows == 0 && p > 0.01,
          "1200 merges, mismatches=" + std::to_string(mismatches) + " overflows=" + std::to_string(overflows) +
              " peak buffer " + std::to_string(maxBuffer) + " bins; load fit p=" + num(p)};
}

Outcome binCapacity() {
  using namespace domerge;
  bool ok = true;
  std::string detail;
  for (double eps : {0.1, 1.0}) {
    for (double lambda : {128.0, 512.0, 1024.0}) {
      auto r = computeBinCapacity(512, eps, lambda);
      const double below = loadShortfallProbability(512, r.capacity - kCapacityStep, eps, lambda);
      const bool pass = r.capacity <= r.theoretical && r.failureProb <= r.delta && below > r.delta;
      ok = ok && pass;
      detail += "(" + num(eps) + "," + num(lambda) + ")->" + std::to_string(r.capacity) + " ";
    }
  }
  return {ok, detail + "all <= theoretical, feasible and minimal on the step-4 lattice"};
}

Outcome bookkeeping() {
  bool ok = true;
  for (std::size_t k : {2u, 3u, 8u}) {
    dyn::BinomialCounter c(k);
    for (std::uint64_t t = c.totalUnits(); t < 10000; ++t) {
      c.advance();
      const auto oracle = dyn::decomposeOracle(c.totalUnits(), k);
      bool same = c.digits() == oracle;
      for (std::size_t i = 0; same && i < k; ++i) same = c.levelUnits(i) == dyn::binom(oracle[i], i + 1);
      if (!same) {
        ok = false;
        break;
      }
    }
  }
  auto nine = dyn::BinomialCounter::fromTotal(9, 3);
  std::vector<std::uint64_t> digits9 = nine.digits();
  nine.advance();
  std::vector<std::uint64_t> digits10 = nine.digits();
  const bool fig = digits9 == std::vector<std::uint64_t>{2, 3, 4} && digits10 == std::vector<std::uint64_t>{0, 1, 5};
  return {ok && fig, std::string("incremental == oracle for t <= 10^4, k in {2,3,8}: ") + (ok ? "yes" : "no") +
                         "; t=9 (2,3,4) -> t=10 (0,1,5): " + (fig ? "yes" : "no")};
}

Outcome dynamicEndToEnd() {
  constexpr Key kDomain = 4096;
  RangeStoreConfig cfg;
  cfg.z = 64;
  cfg.k = 8;
  cfg.valueLen = 8;
  MemoryBackend backend;
  RangeProxy proxy(cfg, crypto::KeyMaterial::fromSeed(10), backend, std::make_shared<range::UniformRanges>(kDomain),
                   Rng(10));
  std::map<Key, Bytes> oracle;
  Rng rng(11);
  auto value = [](Key k, std::uint64_t v) {
    Bytes b(8);
    for (int i = 0; i < 4; ++i) b[i] = static_cast<std::uint8_t>(k >> (8 * i));
    for (int i = 0; i < 4; ++i) b[4 + i] = static_cast<std::uint8_t>(v >> (8 * i));
    return b;
  };
  std::vector<std::pair<Key, Bytes>> load;
  for (Key k = 1; k <= 1000; ++k) {
    load.emplace_back(k * 4, value(k * 4, 0));
    oracle[k * 4] = load.back().second;
  }
  proxy.bulkLoad(load);

  struct Open {
    Key l, r;
    std::size_t rebuildsAtStart;
  };
  std::map<std::uint64_t, Open> open;
  std::size_t wrong = 0, answered = 0, spanning = 0;
  auto check = [&](const std::vector<RangeResult>& results) {
    for (const auto& res : results) {
      auto it = open.find(res.handle);
      if (it == open.end()) {
        ++wrong;
        continue;
      }
      std::vector<std::pair<Key, Bytes>> want(oracle.lower_bound(res.l), oracle.upper_bound(res.r));
      std::vector<std::pair<Key, Bytes>> got;
      for (const auto& rec : res.records) got.emplace_back(rec.key, rec.value);
      wrong += got != want;
      spanning += proxy.rebuilds().size() > it->second.rebuildsAtStart;
      ++answered;
      open.erase(it);
    }
  };
  std::uint64_t handle = 0, version = 1;
  auto mutate = [&](Key key) {
    if (rng.below(5) == 0) {
      proxy.erase(key);
      oracle.erase(key);
    } else {
      proxy.insert(key, value(key, version));
      oracle[key] = value(key, version++);
    }
    check(proxy.drainCompleted());
  };
  for (int op = 0; op < 10000; ++op) {
    const Key key = 1 + rng.below(kDomain);
    if (rng.below(2) == 0) {
      mutate(key);
    } else {
      const Key r = std::min<Key>(kDomain, key + rng.below(200));
      open[++handle] = Open{key, r, proxy.rebuilds().size()};
      proxy.query(key, r, handle);
      check(proxy.drainCompleted());
      // Every 25th query is held open across a rebuild.
      if (handle % 25 == 0 && open.contains(handle)) {
        const std::size_t before = proxy.rebuilds().size();
        while (proxy.rebuilds().size() == before) mutate(1 + rng.below(kDomain));
      }
    }
    check(proxy.runBatch());
  }
  for (int i = 0; i < 100000 && !open.empty(); ++i) check(proxy.runBatch());
  const bool ok = wrong == 0 && open.empty() && spanning >= 50;
  return {ok, std::to_string(answered) + " queries answered, mismatches=" + std::to_string(wrong) + ", " +
                  std::to_string(spanning) + " spanned a rebuild, " + std::to_string(proxy.rebuilds().size()) +
                  " rebuilds, unanswered=" + std::to_string(open.size())};
}

Outcome linearizability() {
  constexpr std::size_t kKeys = 32;
  std::vector<double> dist(kKeys, 1.0 / kKeys);
  std::vector<Bytes> values(kKeys, Bytes(8, 0));
  MemoryBackend backend;
  SmoothedKv::Options opt;
  opt.theta = 5;
  opt.batchSize = 3;
  SmoothedKv kv(crypto::KeyMaterial::fromSeed(12), dist, values, opt, backend, Rng(12));
  Rng rng(13);
  std::vector<KvResponse> history;
  std::uint64_t handle = 0;
  while (handle < 10000) {
    const auto arrivals = rng.below(3);
    for (std::uint64_t i = 0; i < arrivals && handle < 10000; ++i) {
      KvOp op;
      op.key = rng.below(kKeys);
      op.handle = ++handle;
      if (rng.coin()) {
        op.kind = KvOp::Kind::Write;
        op.value = Bytes(8, 0);
        for (int b = 0; b < 8; ++b) op.value[b] = static_cast<std::uint8_t>(handle >> (8 * b));
      }
      kv.registerOp(std::move(op));
    }
    for (auto& r : kv.runBatch()) history.push_back(std::move(r));
  }
  for (int i = 0; i < 100000 && history.size() < handle; ++i) {
    for (auto& r : kv.runBatch()) history.push_back(std::move(r));
  }
  // Sequential specification, in completion order.
  std::vector<Bytes> state(kKeys, Bytes(8, 0));
  std::size_t violations = 0, reads = 0;
  for (const auto& r : history) {
    if (r.kind == KvOp::Kind::Write) {
      state[r.key] = r.value;
    } else {
      ++reads;
      violations += r.value != state[r.key];
    }
  }
  return {violations == 0 && history.size() == handle,
          std::to_string(history.size()) + "/" + std::to_string(handle) + " ops completed, " + std::to_string(reads) +
              " reads, violations=" + std::to_string(violations)};
}

Outcome writeTrend() {
  std::map<std::size_t, std::uint64_t> cost;
  for (std::size_t k : {2u, 4u, 8u, 16u}) cost[k] = writeCost(10000, k, 512);
  const bool decreasing = cost[2] > cost[4] && cost[4] > cost[8];
  const double gap = std::abs(static_cast<double>(cost[16]) - static_cast<double>(cost[8])) / static_cast<double>(cost[8]);
  return {decreasing && gap <= 0.10, "records touched k=2 " + std::to_string(cost[2]) + ", k=4 " +
                                         std::to_string(cost[4]) + ", k=8 " + std::to_string(cost[8]) + ", k=16 " +
                                         std::to_string(cost[16]) + "; |k16-k8|/k8 = " + num(gap, 3) + " (limit 0.10)"};
}

Outcome storage() {
  RangeStoreConfig cfg;
  cfg.z = 512;
  auto r = storageAccounting(100000, cfg, 14);
  const double share = static_cast<double>(r.proxyResidentBytes) / static_cast<double>(r.serverPayloadBytes);
  return {r.serverEntries == 2 * r.liveBuckets && share < 0.01,
          "buckets=" + std::to_string(r.liveBuckets) + " entries=" + std::to_string(r.serverEntries) +
              " server bytes=" + std::to_string(r.serverPayloadBytes) + " proxy bytes=" +
              std::to_string(r.proxyResidentBytes) + " (" + num(100 * share, 3) + "%)"};
}

Outcome persistenceAndWire() {
  RangeExperiment e;
  e.n = 4096;
  e.store.z = 64;
  e.store.k = 3;
  e.store.batchSize = 2;
  e.queries = 500;
  e.seed = 15;

  TraceSink localTrace;
  MemoryBackend local(&localTrace);
  auto a = runRange(e, local, localTrace);

  TraceSink remoteTrace;
  MemoryBackend remoteStore(&remoteTrace);
  wire::TcpServer server(remoteStore);
  wire::TcpBackend client("127.0.0.1", server.port());
  auto b = runRange(e, client, remoteTrace);
  server.stop();

  bool sameResults = a.results.size() == b.results.size();
  for (std::size_t i = 0; sameResults && i < a.results.size(); ++i) {
    sameResults = a.results[i].handle == b.results[i].handle && a.results[i].records == b.results[i].records &&
                  a.results[i].answeredBatch == b.results[i].answeredBatch;
  }
  const bool sameTrace = a.trace == b.trace;

  const auto path = std::filesystem::temp_directory_path() / ("smoothkv-accept-" + std::to_string(::getpid()));
  local.persist(path);
  MemoryBackend restored;
  restored.restore(path);
  const bool exact = restored.serialize() == local.serialize();
  std::filesystem::remove(path);
  return {sameResults && sameTrace && exact, std::string("trace events ") + std::to_string(a.trace.size()) +
                                                 (sameTrace ? " identical" : " differ") + ", results " +
                                                 (sameResults ? "identical" : "differ") + ", persist/restore " +
                                                 (exact ? "bit-exact" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> only;
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"decorrelation", decorrelation},
      {"latency-privacy trade-off", latencyTradeoff},
      {"smoothing uniformity", uniformity},
      {"ROR-CRDA indistinguishability", rorCrda},
      {"bucket distribution math", bucketMath},
      {"oblivious sort and shuffle", obliviousSort},
      {"DO merge correctness", doMerge},
      {"bin capacity", binCapacity},
      {"k-binomial bookkeeping", bookkeeping},
      {"dynamic end-to-end", dynamicEndToEnd},
      {"linearizability", linearizability},
      {"write-overhead trend", writeTrend},
      {"storage accounting", storage},
      {"persistence and wire protocol", persistenceAndWire},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& ex) {
      o = {false, std::string("error: ") + ex.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !o.pass;
    std::printf("%s %2d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str(),
                secs);
    std::fflush(stdout);
  }
  return failures;
}
