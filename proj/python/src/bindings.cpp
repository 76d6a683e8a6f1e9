#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "smoothkv/domerge.hpp"
#include "smoothkv/experiments.hpp"
#include "smoothkv/state.hpp"

namespace py = pybind11;
using namespace smoothkv;

namespace {

Bytes toBytes(const py::bytes& b) {
  const std::string s = b;
  return Bytes(s.begin(), s.end());
}

py::bytes fromBytes(const Bytes& b) { return py::bytes(reinterpret_cast<const char*>(b.data()), b.size()); }

/// In-memory range store with its own server and trace.
class PyRangeStore {
 public:
  PyRangeStore(const std::vector<std::pair<Key, py::bytes>>& records, const RunConfig& cfg, const std::string& queries)
      : backend_(&trace_) {
    cfg.validate();
    RunConfig c = cfg;
    if (c.n == 0) c.n = records.size();
    Key maxKey = 0;
    std::vector<std::pair<Key, Bytes>> rs;
    for (const auto& [k, v] : records) {
      rs.emplace_back(k, toBytes(v));
      maxKey = std::max(maxKey, k);
    }
    if (c.domain == 0) c.domain = std::max<Key>(maxKey, c.n);
    c.validate();
    config_ = c;
    proxy_ = std::make_unique<RangeProxy>(c.rangeStore(), crypto::KeyMaterial::generate(), backend_,
                                          state::parseQueryDistribution(queries, c.effectiveDomain()), Rng(c.seed));
    proxy_->bulkLoad(std::move(rs));
    trace_.clear();
  }

  std::vector<std::pair<Key, py::bytes>> query(Key l, Key r) {
    const std::uint64_t handle = next_++;
    proxy_->query(l, r, handle);
    for (;;) {
      for (auto& res : proxy_->drainCompleted()) done_.push_back(std::move(res));
      for (auto it = done_.begin(); it != done_.end(); ++it) {
        if (it->handle != handle) continue;
        std::vector<std::pair<Key, py::bytes>> out;
        for (const auto& rec : it->records) out.emplace_back(rec.key, fromBytes(rec.value));
        done_.erase(it);
        return out;
      }
      for (auto& res : proxy_->runBatch()) done_.push_back(std::move(res));
    }
  }

  void insert(Key key, const py::bytes& value) { proxy_->insert(key, toBytes(value)); }
  void erase(Key key) { proxy_->erase(key); }

  /// Hex labels of server reads since construction or the last clear.
  std::vector<std::string> readLabels() const {
    std::vector<std::string> out;
    for (const auto& e : trace_.snapshot()) {
      if (e.op == AccessEvent::Op::Read) out.push_back(toHex(e.label));
    }
    return out;
  }
  void clearTrace() { trace_.clear(); }

  py::dict stats() const {
    py::dict d;
    d["levels"] = proxy_->levels().size();
    d["live_buckets"] = proxy_->liveBuckets();
    d["server_slots"] = proxy_->serverSlots();
    d["buffered"] = proxy_->bufferedRecords();
    d["batches"] = proxy_->batchesRun();
    d["rebuilds"] = proxy_->rebuilds().size();
    d["bin_capacity"] = proxy_->binCapacity();
    d["epsilon_spent"] = proxy_->epsilonSpent();
    d["resident_bytes"] = proxy_->residentBytes();
    return d;
  }

  const RunConfig& config() const { return config_; }

 private:
  TraceSink trace_;
  MemoryBackend backend_;
  RunConfig config_;
  std::unique_ptr<RangeProxy> proxy_;
  std::vector<RangeResult> done_;
  std::uint64_t next_ = 0;
};

RunConfig configFrom(const py::kwargs& kw) {
  RunConfig cfg;
  for (const auto& [k, v] : kw) {
    std::string key = py::str(k);
    std::replace(key.begin(), key.end(), '_', '-');
    cfg.set(key, py::str(v));
  }
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Smoothed oblivious key-value and range store";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<IntegrityError>(m, "IntegrityError", PyExc_RuntimeError);

  m.def(
      "capacity",
      [](std::uint64_t z, double eps, double lambda) {
        const auto r = domerge::computeBinCapacity(z, eps, lambda);
        py::dict d;
        d["capacity"] = r.capacity;
        d["bin_count"] = r.binCount;
        d["failure_prob"] = r.failureProb;
        d["delta"] = r.delta;
        d["theoretical"] = r.theoretical;
        return d;
      },
      py::arg("z"), py::arg("eps") = 1.0, py::arg("lam") = 512.0);

  m.def(
      "init_smoothing",
      [](const std::vector<double>& probs, double alpha) {
        const auto s = initSmoothing(probs, alpha);
        py::dict d;
        d["slots"] = s.slots;
        d["replicas"] = s.replicas;
        d["dummy_slots"] = s.dummySlots;
        d["fake_dist"] = s.fakeDist;
        return d;
      },
      py::arg("probs"), py::arg("alpha") = 2.0);

  m.def(
      "run_kv",
      [](const std::string& workload, std::size_t queries, std::size_t theta, double alpha, std::size_t batchSize,
         double queriesPerBatch, const std::string& release, std::uint64_t seed) {
        experiments::KvExperiment e;
        e.workload = experiments::parseKeyWorkload(workload);
        e.queries = queries;
        e.theta = theta;
        e.alpha = alpha;
        e.batchSize = batchSize;
        e.queriesPerBatch = queriesPerBatch;
        if (release == "fifo") e.release = SmoothedKv::Release::Fifo;
        else if (release != "pool") throw ConfigError("release must be pool or fifo");
        e.seed = seed;
        const auto r = experiments::runKv(e);
        py::dict d;
        d["slots"] = r.slots;
        d["batches"] = r.batches;
        d["read_slots"] = r.readSlots;
        d["transition_rsd"] = r.rsd;
        d["uniformity_max_deviation"] = r.uniformity.maxRelativeDeviation;
        d["uniformity_p"] = r.uniformity.pValue;
        d["latencies"] = r.latencies;
        d["latency_mean"] = r.latency.mean;
        return d;
      },
      py::arg("workload") = "markov", py::arg("queries") = 100000, py::arg("theta") = 4, py::arg("alpha") = 2.0,
      py::arg("batch_size") = 3, py::arg("queries_per_batch") = 1.0, py::arg("release") = "pool",
      py::arg("seed") = 1);

  m.def("rsd", [](const std::vector<double>& v) { return leak::rsd(v); });
  m.def("goodness_of_fit", [](const std::vector<double>& counts, const std::vector<double>& probs) {
    return leak::goodnessOfFit(counts, probs);
  });
  m.def("two_sample_chi_square", [](const std::vector<double>& a, const std::vector<double>& b) {
    return leak::twoSampleChiSquare(a, b);
  });

  py::class_<PyRangeStore>(m, "RangeStore")
      .def(py::init([](const std::vector<std::pair<Key, py::bytes>>& records, const std::string& queries,
                       const py::kwargs& kw) { return std::make_unique<PyRangeStore>(records, configFrom(kw), queries); }),
           py::arg("records"), py::arg("queries") = "uniform",
           "Keyword settings use the CLI flag names with underscores, e.g. bucket_size=64, value_len=16.")
      .def("query", &PyRangeStore::query, py::arg("l"), py::arg("r"))
      .def("get",
           [](PyRangeStore& s, Key key) -> py::object {
             auto got = s.query(key, key);
             if (got.empty()) return py::none();
             return got.front().second;
           })
      .def("insert", &PyRangeStore::insert, py::arg("key"), py::arg("value"))
      .def("erase", &PyRangeStore::erase, py::arg("key"))
      .def("read_labels", &PyRangeStore::readLabels)
      .def("clear_trace", &PyRangeStore::clearTrace)
      .def("stats", &PyRangeStore::stats)
      .def_property_readonly("config", [](const PyRangeStore& s) { return s.config().toMap(); });
}
