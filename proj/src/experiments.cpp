#include "smoothkv/experiments.hpp"

#include <unordered_map>

#include "smoothkv/dynamize.hpp"

namespace smoothkv::experiments {

KeyWorkload parseKeyWorkload(const std::string& name) {
  if (name == "markov") return KeyWorkload::Markov;
  if (name == "independent") return KeyWorkload::Independent;
  if (name == "zipf") return KeyWorkload::Zipf;
  if (name == "uniform") return KeyWorkload::Uniform;
  throw ConfigError("unknown workload '" + name + "' (markov, independent, zipf, uniform)");
}

std::string toString(KeyWorkload w) {
  switch (w) {
    case KeyWorkload::Markov: return "markov";
    case KeyWorkload::Independent: return "independent";
    case KeyWorkload::Zipf: return "zipf";
    case KeyWorkload::Uniform: return "uniform";
  }
  return "?";
}

namespace {

class KeyStream {
 public:
  KeyStream(const KvExperiment& e, Rng& rng) : e_(e), rng_(rng), chain_(leak::MarkovModel::threeKey()) {
    switch (e.workload) {
      case KeyWorkload::Markov:
      case KeyWorkload::Independent:
        dist_ = chain_.stationary();
        break;
      case KeyWorkload::Zipf:
        if (e.keys == 0) throw ConfigError("zipf workload needs at least one key");
        dist_ = leak::ZipfKeys(e.keys, e.zipfS).pmf();
        break;
      case KeyWorkload::Uniform:
        if (e.keys == 0) throw ConfigError("uniform workload needs at least one key");
        dist_.assign(e.keys, 1.0 / static_cast<double>(e.keys));
        break;
    }
    pick_ = std::discrete_distribution<std::size_t>(dist_.begin(), dist_.end());
    state_ = pick_(rng_);
  }
  const std::vector<double>& distribution() const { return dist_; }
  std::size_t next() {
    if (e_.workload == KeyWorkload::Markov) {
      state_ = chain_.next(state_, rng_);
      return state_;
    }
    return pick_(rng_);
  }

 private:
  const KvExperiment& e_;
  Rng& rng_;
  leak::MarkovModel chain_;
  std::vector<double> dist_;
  std::discrete_distribution<std::size_t> pick_;
  std::size_t state_ = 0;
};

Bytes valueOf(std::uint64_t tag, std::size_t len) {
  Bytes v(len, 0);
  for (std::size_t i = 0; i < len && i < 8; ++i) v[i] = static_cast<std::uint8_t>(tag >> (8 * i));
  return v;
}

}  // namespace

KvExperimentResult runKv(const KvExperiment& e) {
  if (!(e.queriesPerBatch > 0.0)) throw ConfigError("arrival rate must be positive");
  Rng root(e.seed);
  Rng workRng = root.fork(1);
  KeyStream stream(e, workRng);
  const auto& dist = stream.distribution();

  std::vector<Bytes> values;
  for (std::size_t k = 0; k < dist.size(); ++k) values.push_back(valueOf(k, e.valueLen));
  TraceSink sink;
  MemoryBackend backend(&sink);
  SmoothedKv::Options opts;
  opts.alpha = e.alpha;
  opts.theta = e.theta;
  opts.policy = e.policy;
  opts.release = e.release;
  opts.batchSize = e.batchSize;
  SmoothedKv kv(crypto::KeyMaterial::fromSeed(e.seed), dist, values, opts, backend, root.fork(2));
  sink.clear();

  KvExperimentResult out;
  out.slots = kv.state().slots;
  std::unordered_map<Label, std::size_t, LabelHash> slotOf;
  for (std::size_t s = 0; s < out.slots; ++s) {
    auto [b, r] = kv.state().replicaOfSlot(s);
    slotOf.emplace(kv.labelOf(ReplicaId{0, b, r}), s);
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::size_t issued = 0, answered = 0;
  double credit = 0.0;
  std::uint64_t handle = 0;
  while (answered < e.queries) {
    credit += e.queriesPerBatch;
    while (credit >= 1.0 && issued < e.queries) {
      credit -= 1.0;
      KvOp op;
      op.key = stream.next();
      op.handle = ++handle;
      if (e.writeFraction > 0.0 && unit(workRng) < e.writeFraction) {
        op.kind = KvOp::Kind::Write;
        op.value = valueOf(handle, e.valueLen);
      }
      kv.registerOp(std::move(op));
      ++issued;
    }
    for (const auto& r : kv.runBatch()) {
      out.latencies.push_back(r.latencyBatches());
      ++answered;
    }
    for (const auto& slot : kv.lastPlan().slots) {
      if (!slot.fake) out.releaseSlots.push_back(slotOf.at(slot.label));
    }
  }
  out.batches = kv.batchesRun();
  out.trace = sink.snapshot();
  for (const auto& ev : out.trace) {
    if (ev.op == AccessEvent::Op::Read) out.readSlots.push_back(slotOf.at(ev.label));
  }
  out.transitions = leak::transitionMatrix(out.readSlots, out.slots);
  out.rsd = leak::rsd(out.transitions.cells);
  out.releaseTransitions = leak::transitionMatrix(out.releaseSlots, out.slots);
  out.releaseRsd = leak::rsd(out.releaseTransitions.cells);
  out.uniformity = leak::uniformityTest(out.readSlots, out.slots);
  out.latency = leak::latencyInBatches(out.latencies);
  return out;
}

std::vector<Label> liveLabels(const RangeProxy& proxy, const crypto::KeyMaterial& keys) {
  std::vector<Label> out;
  for (const auto& level : proxy.levels()) {
    if (level.empty()) continue;
    for (std::size_t s = 0; s < level.smoothing.slots; ++s) {
      auto [b, r] = level.smoothing.replicaOfSlot(s);
      out.push_back(crypto::labelFor(keys.label, level.epoch, b, r));
    }
  }
  return out;
}

namespace {

std::shared_ptr<const range::RangeDistribution> queryDistribution(const RangeExperiment& e) {
  if (e.width == 0) return std::make_shared<range::UniformRanges>(e.n);
  return std::make_shared<range::FixedWidthRanges>(e.n, e.width);
}

std::pair<Key, Key> drawRange(const RangeExperiment& e, Rng& rng) {
  return e.width == 0 ? leak::uniformRange(e.n, rng) : leak::fixedWidthRange(e.n, e.width, rng);
}

std::vector<std::pair<Key, Bytes>> initialRecords(const RangeExperiment& e) {
  std::vector<std::pair<Key, Bytes>> out;
  out.reserve(e.n);
  for (Key key = 1; key <= e.n; ++key) out.emplace_back(key, valueOf(key, e.store.valueLen));
  return out;
}

}  // namespace

RangeExperimentResult runRange(const RangeExperiment& e, Backend& backend, TraceSink& trace) {
  if (!(e.queriesPerBatch > 0.0)) throw ConfigError("arrival rate must be positive");
  Rng root(e.seed);
  Rng workRng = root.fork(1);
  const auto keys = crypto::KeyMaterial::fromSeed(e.seed);
  RangeProxy proxy(e.store, keys, backend, queryDistribution(e), root.fork(2));
  proxy.bulkLoad(initialRecords(e));
  trace.clear();

  RangeExperimentResult out;
  out.universe = liveLabels(proxy, keys);
  std::size_t issued = 0;
  double credit = 0.0;
  while (out.results.size() < e.queries) {
    credit += e.queriesPerBatch;
    while (credit >= 1.0 && issued < e.queries) {
      credit -= 1.0;
      auto [l, r] = drawRange(e, workRng);
      ++issued;
      proxy.query(l, r, issued);
    }
    for (auto& res : proxy.runBatch()) {
      out.latencies.push_back(res.latencyBatches());
      out.results.push_back(std::move(res));
    }
  }
  out.batches = proxy.batchesRun();
  out.trace = trace.snapshot();
  out.reads = leak::labelsOf(out.trace);
  return out;
}

std::pair<std::vector<Label>, std::vector<Label>> directAccessReads(const RangeExperiment& e, std::size_t target) {
  Rng root(e.seed);
  Rng workRng = root.fork(1);
  const auto keys = crypto::KeyMaterial::fromSeed(e.seed);
  std::vector<Record> sorted;
  for (auto& [k, v] : initialRecords(e)) sorted.push_back(Record{k, 0, false, std::move(v)});
  auto buckets = range::bucketize(std::move(sorted), e.store.z, e.store.valueLen);
  auto tags = range::tagsOf(buckets);
  std::vector<Label> universe;
  for (std::size_t b = 0; b < tags.size(); ++b) universe.push_back(crypto::labelFor(keys.label, 0, b, 0));
  std::vector<Label> reads;
  for (std::size_t q = 0; target > 0 ? reads.size() < target : q < e.queries; ++q) {
    auto [l, r] = drawRange(e, workRng);
    auto span = range::coveringSpan(tags, l, r);
    if (span.empty) continue;
    for (std::size_t b = span.first; b <= span.last; ++b) reads.push_back(universe[b]);
  }
  if (target > 0) reads.resize(target);
  return {std::move(reads), std::move(universe)};
}

std::uint64_t writeCost(std::uint64_t units, std::size_t k, std::size_t z) {
  dyn::BinomialCounter counter(k);
  std::uint64_t touched = 0;
  for (std::uint64_t t = 0; t < units; ++t) {
    const std::size_t target = counter.advance();
    // After advancing, the target level holds every unit that was merged.
    touched += z * counter.levelUnits(target);
  }
  return touched;
}

StorageReport storageAccounting(std::uint64_t n, const RangeStoreConfig& config, std::uint64_t seed) {
  RangeExperiment e;
  e.n = n;
  e.store = config;
  e.seed = seed;
  MemoryBackend backend;
  RangeProxy proxy(config, crypto::KeyMaterial::fromSeed(seed), backend, queryDistribution(e), Rng(seed));
  proxy.bulkLoad(initialRecords(e));
  StorageReport r;
  r.liveBuckets = proxy.liveBuckets();
  r.serverEntries = backend.entryCount();
  r.serverPayloadBytes = backend.payloadBytes();
  r.proxyResidentBytes = proxy.residentBytes();
  return r;
}

}  // namespace smoothkv::experiments
