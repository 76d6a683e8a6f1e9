#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "CLI11.hpp"
#include "smoothkv/domerge.hpp"
#include "smoothkv/experiments.hpp"
#include "smoothkv/state.hpp"
#include "smoothkv/wire.hpp"

namespace fs = std::filesystem;
using namespace smoothkv;

namespace {

struct Common {
  std::string configFile;
  std::string store = "smoothkv-store";
  std::string out;
  std::map<std::string, std::string> overrides;
};

/// Config file first, then any flag given on the command line.
RunConfig resolveConfig(const Common& c, RunConfig base = {}) {
  RunConfig cfg = c.configFile.empty() ? base : loadConfigFile(c.configFile, base);
  for (const auto& [k, v] : c.overrides) cfg.set(k, v);
  cfg.validate();
  return cfg;
}

void addConfigFlags(CLI::App* app, Common& c) {
  app->add_option("--config", c.configFile, "key = value configuration file")->check(CLI::ExistingFile);
  app->add_option("--out", c.out, "output directory for CSV files (default: stdout)");
  for (const char* key : {"theta", "eps", "lambda", "bucket-size", "alpha", "k", "seed", "rate", "batch-size",
                          "value-len", "selectivity", "weights", "backend", "domain"}) {
    app->add_option_function<std::string>(
        std::string("--") + key, [&c, key](const std::string& v) { c.overrides[key] = v; }, "overrides the config file");
  }
}

/// Writes to `<out>/<name>` or to stdout when no directory was given.
template <typename F>
void emit(const Common& c, const std::string& name, F&& write) {
  if (c.out.empty()) {
    write(std::cout);
    return;
  }
  fs::create_directories(c.out);
  std::ofstream file(fs::path(c.out) / name, std::ios::trunc);
  if (!file) throw ConfigError("cannot write " + (fs::path(c.out) / name).string());
  write(file);
}

Bytes encodeValue(const std::string& text, std::size_t len) {
  if (text.size() > len) throw ConfigError("value '" + text + "' longer than value-len " + std::to_string(len));
  Bytes b(text.begin(), text.end());
  b.resize(len, 0);
  return b;
}

std::string decodeValue(const Bytes& b) {
  std::string s(b.begin(), b.end());
  if (auto z = s.find('\0'); z != std::string::npos) s.resize(z);
  return s;
}

std::string csvField(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::vector<std::pair<Key, Bytes>> readRecordsCsv(const fs::path& path, std::size_t valueLen) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::vector<std::pair<Key, Bytes>> records;
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    const std::string keyText = line.substr(0, comma);
    const std::string value = comma == std::string::npos ? std::string() : line.substr(comma + 1);
    Key key = 0;
    try {
      std::size_t used = 0;
      key = std::stoull(keyText, &used);
      if (used != keyText.size()) throw std::invalid_argument(keyText);
    } catch (const std::exception&) {
      if (lineNo == 1) continue;  // header
      throw ConfigError(path.string() + ":" + std::to_string(lineNo) + ": bad key '" + keyText + "'");
    }
    records.emplace_back(key, encodeValue(value, valueLen));
  }
  return records;
}

/// Proxy plus its backend, opened from or saved to a store directory.
class Session {
 public:
  Session(const fs::path& dir, state::ProxyState st) : dir_(dir), st_(std::move(st)) {
    const std::string& b = st_.config.backend;
    if (b.rfind("tcp:", 0) == 0) {
      const auto colon = b.rfind(':');
      if (colon <= 4) throw ConfigError("backend must be tcp:<host>:<port>");
      backend_ = std::make_unique<wire::TcpBackend>(b.substr(4, colon - 4),
                                              static_cast<std::uint16_t>(std::stoul(b.substr(colon + 1))));
    } else if (b == "memory" || b == "file") {
      auto file = std::make_unique<FileBackend>(dir_ / "store.bin");
      fileBackend_ = file.get();
      backend_ = std::move(file);
    } else {
      throw ConfigError("unknown backend '" + b + "' (memory, file, tcp:<host>:<port>)");
    }
    const Key domain = st_.config.effectiveDomain();
    proxy_ = std::make_unique<RangeProxy>(st_.config.rangeStore(), st_.keys, *backend_,
                                          state::parseQueryDistribution(st_.queries, domain),
                                          Rng(st_.config.seed ^ static_cast<std::uint64_t>(
                                                                     std::chrono::steady_clock::now().time_since_epoch().count())));
  }

  static Session create(const fs::path& dir, const RunConfig& cfg, const std::string& queries) {
    fs::create_directories(dir);
    if (fs::exists(dir / "state.json")) throw ConfigError(dir.string() + " already holds a store");
    fs::remove(dir / "store.bin");
    state::ProxyState st;
    st.config = cfg;
    st.queries = queries;
    st.keys = crypto::KeyMaterial::generate();
    return Session(dir, std::move(st));
  }

  static Session open(const fs::path& dir, const Common& c) {
    auto st = state::load(dir / "state.json");
    // Run-time settings may change between invocations; layout settings may not.
    for (const auto& [k, v] : c.overrides) {
      RunConfig probe = st.config;
      probe.set(k, v);
      if (k == "rate" || k == "backend" || k == "seed") {
        st.config = probe;
      } else if (probe.toMap() != st.config.toMap()) {
        throw ConfigError("--" + k + " cannot change an existing store; run setup again");
      }
    }
    st.config.validate();
    Session s(dir, st);
    s.proxy_->restore(std::move(st.snapshot));
    return s;
  }

  RangeProxy& proxy() { return *proxy_; }
  const RunConfig& config() const { return st_.config; }

  void save() {
    if (fileBackend_ != nullptr) fileBackend_->flush();
    st_.snapshot = proxy_->snapshot();
    state::save(st_, dir_ / "state.json");
  }

  /// Runs batches at the configured rate until every handle has completed.
  std::vector<RangeResult> await(std::size_t handles) {
    std::vector<RangeResult> done = proxy_->drainCompleted();
    using clock = std::chrono::steady_clock;
    const double rate = st_.config.batchesPerSecond;
    const auto period = rate > 0 ? std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(1.0 / rate))
                                 : clock::duration::zero();
    auto next = clock::now();
    constexpr std::uint64_t kMaxBatches = 10'000'000;
    for (std::uint64_t b = 0; done.size() < handles; ++b) {
      if (b == kMaxBatches) throw std::runtime_error("queries did not complete");
      if (rate > 0) {
        std::this_thread::sleep_until(next);
        next += period;
      }
      for (auto& r : proxy_->runBatch()) done.push_back(std::move(r));
      for (auto& r : proxy_->drainCompleted()) done.push_back(std::move(r));
    }
    return done;
  }

 private:
  fs::path dir_;
  state::ProxyState st_;
  std::unique_ptr<Backend> backend_;
  FileBackend* fileBackend_ = nullptr;
  std::unique_ptr<RangeProxy> proxy_;
};

void writeRecords(std::ostream& out, const std::vector<RangeResult>& results) {
  out << "query,l,r,key,value\n";
  for (const auto& r : results) {
    for (const auto& rec : r.records) {
      out << r.handle << "," << r.l << "," << r.r << "," << rec.key << "," << csvField(decodeValue(rec.value)) << "\n";
    }
  }
}

std::pair<Key, Key> parseRange(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("range must be l:r");
  try {
    return {std::stoull(text.substr(0, colon)), std::stoull(text.substr(colon + 1))};
  } catch (const std::exception&) {
    throw ConfigError("bad range '" + text + "'");
  }
}

volatile std::sig_atomic_t gStop = 0;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Smoothed oblivious key-value and range store"};
  app.require_subcommand(1);
  Common c;

  // setup
  auto* setup = app.add_subcommand("setup", "create a store from key,value CSV");
  std::string setupCsv;
  std::string queries = "uniform";
  setup->add_option("--csv", setupCsv, "records as key,value lines")->required()->check(CLI::ExistingFile);
  setup->add_option("--queries", queries, "expected query distribution: uniform | fixed:<width>");
  setup->add_option("--store", c.store, "proxy state directory");
  addConfigFlags(setup, c);

  // query / get
  auto* query = app.add_subcommand("query", "range query");
  std::vector<std::string> ranges;
  query->add_option("--range", ranges, "l:r (repeatable)")->required();
  query->add_option("--store", c.store, "proxy state directory");
  addConfigFlags(query, c);

  auto* get = app.add_subcommand("get", "point query");
  std::vector<Key> getKeys;
  get->add_option("--key", getKeys, "key (repeatable)")->required();
  get->add_option("--store", c.store, "proxy state directory");
  addConfigFlags(get, c);

  // put / delete / insert
  auto* put = app.add_subcommand("put", "insert or overwrite one key");
  Key putKey = 0;
  std::string putValue;
  put->add_option("--key", putKey)->required();
  put->add_option("--value", putValue)->required();
  put->add_option("--store", c.store, "proxy state directory");
  addConfigFlags(put, c);

  auto* del = app.add_subcommand("delete", "delete one key");
  Key delKey = 0;
  del->add_option("--key", delKey)->required();
  del->add_option("--store", c.store, "proxy state directory");
  addConfigFlags(del, c);

  auto* insert = app.add_subcommand("insert", "insert key,value CSV into an existing store");
  std::string insertCsv;
  insert->add_option("--csv", insertCsv)->required()->check(CLI::ExistingFile);
  insert->add_option("--store", c.store, "proxy state directory");
  addConfigFlags(insert, c);

  // bench
  auto* bench = app.add_subcommand("bench", "synthetic workload; writes trace, matrix, latencies, summary");
  std::string workload = "markov";
  std::size_t ops = 100000;
  double arrival = 1.0;
  std::string release = "pool";
  std::size_t keys = 0;
  double zipfS = 1.1;
  std::uint64_t width = 0;
  bench->add_option("--workload", workload, "markov | independent | zipf | uniform | ranges");
  bench->add_option("--ops", ops, "client operations");
  bench->add_option("--arrival", arrival, "operations per batch");
  bench->add_option("--release", release, "pool | fifo")->check(CLI::IsMember({"pool", "fifo"}));
  bench->add_option("--keys", keys, "key count (zipf, uniform) or record count (ranges)");
  bench->add_option("--zipf-s", zipfS);
  bench->add_option("--width", width, "fixed range width, 0 for uniform ranges");
  addConfigFlags(bench, c);

  // analyze
  auto* analyze = app.add_subcommand("analyze", "leakage statistics of a recorded trace");
  std::string tracePath;
  std::size_t universe = 0;
  std::optional<std::uint64_t> idealSeed;
  analyze->add_option("--trace", tracePath)->required()->check(CLI::ExistingFile);
  analyze->add_option("--universe", universe, "label universe size (default: distinct labels seen)");
  analyze->add_option("--ideal-seed", idealSeed, "also test against a uniform trace drawn with this seed");
  addConfigFlags(analyze, c);

  // capacity
  auto* capacity = app.add_subcommand("capacity", "bin capacity search");
  addConfigFlags(capacity, c);

  // serve
  auto* serve = app.add_subcommand("serve", "run the untrusted server over TCP");
  std::uint16_t port = 0;
  serve->add_option("--port", port, "0 picks a free port");
  serve->add_option("--store", c.store, "directory holding store.bin");

  CLI11_PARSE(app, argc, argv);

  try {
    if (setup->parsed()) {
      RunConfig cfg = resolveConfig(c);
      auto records = readRecordsCsv(setupCsv, cfg.valueLen);
      if (records.empty()) throw ConfigError("no records in " + setupCsv);
      if (cfg.n == 0) cfg.n = records.size();
      if (cfg.domain == 0) {
        Key maxKey = 0;
        for (const auto& [k, v] : records) maxKey = std::max(maxKey, k);
        cfg.domain = std::max<Key>(maxKey, cfg.n);
      }
      cfg.validate();
      auto s = Session::create(c.store, cfg, queries);
      s.proxy().bulkLoad(std::move(records));
      s.save();
      emit(c, "setup.csv", [&](std::ostream& out) {
        out << "records,levels,live_buckets,server_slots,bin_capacity,batch_size\n";
        std::size_t live = 0;
        for (const auto& l : s.proxy().levels()) live += l.empty() ? 0 : 1;
        out << cfg.n << "," << live << "," << s.proxy().liveBuckets() << "," << s.proxy().serverSlots() << ","
            << s.proxy().binCapacity() << "," << cfg.effectiveBatchSize() << "\n";
      });
    } else if (query->parsed() || get->parsed()) {
      auto s = Session::open(c.store, c);
      std::uint64_t handle = 0;
      std::vector<std::pair<Key, Key>> rs;
      if (query->parsed()) {
        for (const auto& t : ranges) rs.push_back(parseRange(t));
      } else {
        for (Key k : getKeys) rs.emplace_back(k, k);
      }
      for (auto [l, r] : rs) s.proxy().query(l, r, handle++);
      auto results = s.await(rs.size());
      std::sort(results.begin(), results.end(), [](const auto& a, const auto& b) { return a.handle < b.handle; });
      s.save();
      emit(c, "results.csv", [&](std::ostream& out) { writeRecords(out, results); });
    } else if (put->parsed() || del->parsed() || insert->parsed()) {
      auto s = Session::open(c.store, c);
      const std::size_t len = s.config().valueLen;
      if (put->parsed()) s.proxy().insert(putKey, encodeValue(putValue, len));
      if (del->parsed()) s.proxy().erase(delKey);
      if (insert->parsed()) {
        for (auto& [k, v] : readRecordsCsv(insertCsv, len)) s.proxy().insert(k, std::move(v));
      }
      s.save();
    } else if (bench->parsed()) {
      RunConfig cfg = resolveConfig(c);
      std::vector<AccessEvent> trace;
      std::vector<std::pair<std::string, double>> summary;
      std::vector<std::uint64_t> latencies;
      std::optional<leak::Matrix> matrix;
      if (workload == "ranges") {
        experiments::RangeExperiment e;
        e.n = keys == 0 ? (cfg.n == 0 ? 8192 : cfg.n) : keys;
        cfg.n = e.n;
        e.store = cfg.rangeStore();
        e.width = width;
        e.queries = ops;
        e.queriesPerBatch = arrival;
        e.seed = cfg.seed;
        TraceSink sink;
        MemoryBackend backend(&sink);
        auto r = experiments::runRange(e, backend, sink);
        trace = std::move(r.trace);
        latencies = r.latencies;
        leak::LabelIndex index;
        for (const auto& l : r.universe) index.idOf(l);
        auto ids = index.map(r.reads);
        auto u = leak::uniformityTest(ids, index.size());
        summary = {{"batches", static_cast<double>(r.batches)},
                   {"reads", static_cast<double>(r.reads.size())},
                   {"universe", static_cast<double>(index.size())},
                   {"uniformity_max_deviation", u.maxRelativeDeviation},
                   {"uniformity_p", u.pValue}};
      } else {
        experiments::KvExperiment e;
        e.workload = experiments::parseKeyWorkload(workload);
        if (keys != 0) e.keys = keys;
        e.zipfS = zipfS;
        e.queries = ops;
        e.queriesPerBatch = arrival;
        e.alpha = cfg.alpha;
        e.theta = cfg.theta;
        e.policy = cfg.policy;
        e.release = release == "fifo" ? SmoothedKv::Release::Fifo : SmoothedKv::Release::Pool;
        e.batchSize = cfg.batchSize == 0 ? 3 : cfg.batchSize;
        e.valueLen = cfg.valueLen;
        e.seed = cfg.seed;
        auto r = experiments::runKv(e);
        trace = std::move(r.trace);
        latencies = r.latencies;
        matrix = r.transitions;
        summary = {{"slots", static_cast<double>(r.slots)},
                   {"batches", static_cast<double>(r.batches)},
                   {"transition_rsd", r.rsd},
                   {"release_transition_rsd", r.releaseRsd},
                   {"uniformity_max_deviation", r.uniformity.maxRelativeDeviation},
                   {"uniformity_p", r.uniformity.pValue}};
      }
      const auto lat = leak::latencyInBatches(latencies);
      summary.insert(summary.end(), {{"latency_mean", lat.mean},
                                     {"latency_p50", lat.p50},
                                     {"latency_p90", lat.p90},
                                     {"latency_p99", lat.p99},
                                     {"latency_max", lat.max}});
      if (!c.out.empty()) {
        emit(c, "trace.csv", [&](std::ostream& out) { leak::writeTraceCsv(out, trace); });
        emit(c, "latencies.csv", [&](std::ostream& out) {
          out << "op,latency_batches\n";
          for (std::size_t i = 0; i < latencies.size(); ++i) out << i << "," << latencies[i] << "\n";
        });
        if (matrix) emit(c, "matrix.csv", [&](std::ostream& out) { leak::writeMatrixCsv(out, *matrix); });
      }
      emit(c, "summary.csv", [&](std::ostream& out) { leak::writeSummaryCsv(out, summary); });
    } else if (analyze->parsed()) {
      std::ifstream in(tracePath);
      const auto trace = leak::readTraceCsv(in);
      const auto reads = leak::labelsOf(trace);
      leak::LabelIndex index;
      const auto ids = index.map(reads);
      const std::size_t dim = std::max(universe, index.size());
      const auto m = leak::transitionMatrix(ids, dim);
      const auto u = leak::uniformityTest(ids, dim);
      std::vector<std::pair<std::string, double>> summary{{"reads", static_cast<double>(reads.size())},
                                                          {"distinct_labels", static_cast<double>(index.size())},
                                                          {"universe", static_cast<double>(dim)},
                                                          {"transition_rsd", leak::rsd(m.cells)},
                                                          {"uniformity_max_deviation", u.maxRelativeDeviation},
                                                          {"uniformity_chi_square", u.chiSquare},
                                                          {"uniformity_p", u.pValue}};
      if (idealSeed) {
        std::vector<Label> labels;
        std::unordered_set<Label, LabelHash> seen;
        for (const auto& l : reads) {
          if (seen.insert(l).second) labels.push_back(l);
        }
        Rng rng(*idealSeed);
        const auto ideal = leak::idealTrace(labels, reads.size(), rng);
        const auto d = leak::rorCrdaDistinguish(reads, ideal);
        summary.emplace_back("ror_frequency_p", d.frequencyP);
        summary.emplace_back("ror_pair_p", d.pairP);
        summary.emplace_back("ror_indistinguishable", d.indistinguishable() ? 1.0 : 0.0);
      }
      if (!c.out.empty()) emit(c, "matrix.csv", [&](std::ostream& out) { leak::writeMatrixCsv(out, m); });
      emit(c, "summary.csv", [&](std::ostream& out) { leak::writeSummaryCsv(out, summary); });
    } else if (capacity->parsed()) {
      RunConfig cfg = resolveConfig(c);
      const auto r = domerge::computeBinCapacity(cfg.z, cfg.epsilon, cfg.lambda);
      emit(c, "capacity.csv", [&](std::ostream& out) {
        out << "z,eps,lambda,capacity,theoretical,bin_count,failure_prob,delta\n";
        out << cfg.z << "," << cfg.epsilon << "," << cfg.lambda << "," << r.capacity << "," << r.theoretical << ","
            << r.binCount << "," << r.failureProb << "," << r.delta << "\n";
      });
    } else if (serve->parsed()) {
      fs::create_directories(c.store);
      FileBackend store(fs::path(c.store) / "store.bin");
      wire::TcpServer server(store, port);
      std::cout << "listening on 127.0.0.1:" << server.port() << std::endl;
      std::signal(SIGINT, [](int) { gStop = 1; });
      std::signal(SIGTERM, [](int) { gStop = 1; });
      while (gStop == 0) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server.stop();
      store.flush();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
