#include "smoothkv/leakage.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace smoothkv::leak {

namespace {

double chiSquareSurvival(double stat, double dof) {
  if (dof <= 0) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(dof), stat));
}

double quantile(std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - static_cast<double>(lo));
}

}  // namespace

MarkovModel::MarkovModel(std::vector<std::vector<double>> p) : p_(std::move(p)) {
  if (p_.empty()) throw ConfigError("Markov model needs at least one state");
  for (const auto& row : p_) {
    if (row.size() != p_.size()) throw ConfigError("transition matrix must be square");
    double sum = 0.0;
    for (double v : row) {
      if (v < 0.0) throw ConfigError("negative transition probability");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("transition rows must sum to 1");
    rows_.emplace_back(row.begin(), row.end());
  }
}

MarkovModel MarkovModel::threeKey() {
  return MarkovModel({{0.30, 0.65, 0.05}, {0.90, 0.00, 0.10}, {0.70, 0.30, 0.00}});
}

std::size_t MarkovModel::next(std::size_t current, Rng& rng) const { return rows_.at(current)(rng); }

std::vector<double> MarkovModel::stationary() const {
  // (P^T - I) pi = 0 with the last equation replaced by sum(pi) = 1.
  const std::size_t n = p_.size();
  std::vector<std::vector<double>> a(n, std::vector<double>(n + 1, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) a[i][j] = p_[j][i] - (i == j ? 1.0 : 0.0);
  }
  for (std::size_t j = 0; j < n; ++j) a[n - 1][j] = 1.0;
  a[n - 1][n] = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t pivot = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(a[r][c]) > std::abs(a[pivot][c])) pivot = r;
    }
    std::swap(a[c], a[pivot]);
    if (std::abs(a[c][c]) < 1e-300) throw ConfigError("chain has no unique stationary distribution");
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k <= n; ++k) a[r][k] -= f * a[c][k];
    }
  }
  std::vector<double> pi(n);
  for (std::size_t i = 0; i < n; ++i) pi[i] = a[i][n] / a[i][i];
  return pi;
}

ZipfKeys::ZipfKeys(std::uint64_t n, double s) {
  if (n == 0) throw ConfigError("Zipf domain must be nonempty");
  weights_.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) weights_[i] = std::pow(static_cast<double>(i + 1), -s);
  dist_ = std::discrete_distribution<std::uint64_t>(weights_.begin(), weights_.end());
}

std::vector<double> ZipfKeys::pmf() const {
  const double total = std::accumulate(weights_.begin(), weights_.end(), 0.0);
  std::vector<double> out(weights_);
  for (double& w : out) w /= total;
  return out;
}

std::pair<std::uint64_t, std::uint64_t> uniformRange(std::uint64_t n, Rng& rng) {
  // Pick the right end r with weight r (the number of ranges ending there).
  const std::uint64_t total = n * (n + 1) / 2;
  std::uint64_t u = rng.below(total);
  const auto rf = static_cast<std::uint64_t>((std::sqrt(8.0 * static_cast<double>(u) + 1.0) - 1.0) / 2.0);
  std::uint64_t r = rf;
  while (r * (r + 1) / 2 > u) --r;
  while ((r + 1) * (r + 2) / 2 <= u) ++r;
  const std::uint64_t y = r + 1;
  const std::uint64_t x = u - r * (r + 1) / 2 + 1;
  return {x, y};
}

std::pair<std::uint64_t, std::uint64_t> fixedWidthRange(std::uint64_t n, std::uint64_t w, Rng& rng) {
  if (w == 0 || w > n) throw ConfigError("range width must be in [1, N]");
  const std::uint64_t x = 1 + rng.below(n - w + 1);
  return {x, x + w - 1};
}

std::size_t LabelIndex::idOf(const Label& label) {
  auto [it, inserted] = ids_.try_emplace(label, ids_.size());
  return it->second;
}

std::vector<std::size_t> LabelIndex::map(std::span<const Label> labels) {
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back(idOf(l));
  return out;
}

std::vector<Label> labelsOf(std::span<const AccessEvent> trace, AccessEvent::Op op) {
  std::vector<Label> out;
  for (const auto& e : trace) {
    if (e.op == op) out.push_back(e.label);
  }
  return out;
}

Matrix transitionMatrix(std::span<const std::size_t> ids, std::size_t universe) {
  Matrix m;
  m.dim = universe;
  m.cells.assign(universe * universe, 0.0);
  if (ids.size() < 2) return m;
  for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
    if (ids[i] >= universe || ids[i + 1] >= universe) throw ConfigError("trace id outside the label universe");
    m.cells[ids[i] * universe + ids[i + 1]] += 1.0;
  }
  const double total = static_cast<double>(ids.size() - 1);
  for (double& c : m.cells) c /= total;
  return m;
}

double rsd(std::span<const double> values) {
  if (values.empty()) return 0.0;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (mean == 0.0) return 0.0;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return std::sqrt(var / n) / std::abs(mean);
}

Uniformity uniformityTest(std::span<const std::size_t> ids, std::size_t universe) {
  if (universe == 0) throw ConfigError("empty label universe");
  std::vector<double> counts(universe, 0.0);
  for (auto id : ids) {
    if (id >= universe) throw ConfigError("more distinct labels than the universe size");
    counts[id] += 1.0;
  }
  const double expected = static_cast<double>(ids.size()) / static_cast<double>(universe);
  Uniformity u;
  for (double c : counts) {
    u.maxRelativeDeviation = std::max(u.maxRelativeDeviation, std::abs(c - expected) / expected);
    u.chiSquare += (c - expected) * (c - expected) / expected;
  }
  u.pValue = chiSquareSurvival(u.chiSquare, static_cast<double>(universe - 1));
  return u;
}

double goodnessOfFit(std::span<const double> counts, std::span<const double> probs) {
  if (counts.size() != probs.size()) throw ConfigError("count and probability vectors differ in length");
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  const double mass = std::accumulate(probs.begin(), probs.end(), 0.0);
  if (total == 0.0) return 1.0;
  std::vector<std::size_t> order(counts.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto x, auto y) { return probs[x] < probs[y]; });
  std::vector<std::pair<double, double>> cells;  // observed, expected
  double obs = 0.0, exp = 0.0;
  for (auto i : order) {
    obs += counts[i];
    exp += total * probs[i] / mass;
    if (exp >= 5.0) {
      cells.emplace_back(obs, exp);
      obs = exp = 0.0;
    }
  }
  if (exp > 0.0 || obs > 0.0) {
    if (cells.empty()) return 1.0;
    cells.back().first += obs;
    cells.back().second += exp;
  }
  if (cells.size() < 2) return 1.0;
  double stat = 0.0;
  for (auto [o, e] : cells) {
    if (e == 0.0) return o > 0.0 ? 0.0 : 1.0;
    stat += (o - e) * (o - e) / e;
  }
  return chiSquareSurvival(stat, static_cast<double>(cells.size() - 1));
}

double twoSampleChiSquare(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("paired count vectors differ in length");
  const double ta = std::accumulate(a.begin(), a.end(), 0.0);
  const double tb = std::accumulate(b.begin(), b.end(), 0.0);
  if (ta == 0.0 || tb == 0.0) return 1.0;
  const double fa = ta / (ta + tb);
  const double fb = tb / (ta + tb);

  // Pool sparse cells, smallest first, until every cell expects >= 5 per sample.
  std::vector<std::size_t> order(a.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto x, auto y) { return a[x] + b[x] < a[y] + b[y]; });
  std::vector<std::pair<double, double>> cells;
  double pa = 0.0, pb = 0.0;
  for (auto i : order) {
    if (a[i] + b[i] == 0.0) continue;
    pa += a[i];
    pb += b[i];
    const double n = pa + pb;
    if (n * fa >= 5.0 && n * fb >= 5.0) {
      cells.emplace_back(pa, pb);
      pa = pb = 0.0;
    }
  }
  if (pa + pb > 0.0) {
    if (cells.empty()) return 1.0;
    cells.back().first += pa;
    cells.back().second += pb;
  }
  if (cells.size() < 2) return 1.0;
  double stat = 0.0;
  for (auto [x, y] : cells) {
    const double n = x + y;
    stat += (x - n * fa) * (x - n * fa) / (n * fa) + (y - n * fb) * (y - n * fb) / (n * fb);
  }
  return chiSquareSurvival(stat, static_cast<double>(cells.size() - 1));
}

Distinguisher rorCrdaDistinguish(std::span<const Label> real, std::span<const Label> ideal) {
  LabelIndex index;
  std::vector<std::size_t> ra = index.map(real);
  std::vector<std::size_t> ia = index.map(ideal);
  const std::size_t u = index.size();

  Distinguisher d;
  std::vector<double> fa(u, 0.0), fb(u, 0.0);
  for (auto id : ra) fa[id] += 1.0;
  for (auto id : ia) fb[id] += 1.0;
  d.frequencyP = twoSampleChiSquare(fa, fb);

  std::map<std::pair<std::size_t, std::size_t>, std::pair<double, double>> pairs;
  for (std::size_t i = 0; i + 1 < ra.size(); i += 2) pairs[{ra[i], ra[i + 1]}].first += 1.0;
  for (std::size_t i = 0; i + 1 < ia.size(); i += 2) pairs[{ia[i], ia[i + 1]}].second += 1.0;
  std::vector<double> pa, pb;
  for (const auto& [key, c] : pairs) {
    pa.push_back(c.first);
    pb.push_back(c.second);
  }
  d.pairP = twoSampleChiSquare(pa, pb);
  return d;
}

std::vector<Label> idealTrace(std::span<const Label> universe, std::size_t length, Rng& rng) {
  if (universe.empty()) throw ConfigError("empty label universe");
  std::vector<Label> out;
  out.reserve(length);
  for (std::size_t i = 0; i < length; ++i) out.push_back(universe[rng.below(universe.size())]);
  return out;
}

LatencySummary latencyInBatches(std::span<const std::uint64_t> latencies) {
  LatencySummary s;
  s.count = latencies.size();
  if (latencies.empty()) return s;
  std::vector<double> v(latencies.begin(), latencies.end());
  std::sort(v.begin(), v.end());
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  s.p50 = quantile(v, 0.50);
  s.p90 = quantile(v, 0.90);
  s.p99 = quantile(v, 0.99);
  s.max = v.back();
  return s;
}

void writeTraceCsv(std::ostream& out, std::span<const AccessEvent> trace) {
  out << "slot,label_hex,op\n";
  for (const auto& e : trace) out << e.slot << ',' << toHex(e.label) << ',' << opName(e.op) << '\n';
}

std::vector<AccessEvent> readTraceCsv(std::istream& in) {
  std::vector<AccessEvent> out;
  std::string line;
  if (!std::getline(in, line) || line.rfind("slot,label_hex,op", 0) != 0) throw ConfigError("missing trace CSV header");
  std::size_t lineNo = 1;
  while (std::getline(in, line)) {
    ++lineNo;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string slot, hex, op;
    if (!std::getline(ss, slot, ',') || !std::getline(ss, hex, ',') || !std::getline(ss, op)) {
      throw ConfigError("malformed trace CSV line " + std::to_string(lineNo));
    }
    Bytes raw = fromHex(hex);
    if (raw.size() != 16) throw ConfigError("label must be 32 hex digits on line " + std::to_string(lineNo));
    AccessEvent e;
    e.slot = std::stoull(slot);
    std::copy(raw.begin(), raw.end(), e.label.begin());
    e.op = parseOp(op);
    out.push_back(e);
  }
  return out;
}

void writeMatrixCsv(std::ostream& out, const Matrix& m) {
  for (std::size_t a = 0; a < m.dim; ++a) {
    for (std::size_t b = 0; b < m.dim; ++b) out << (b ? "," : "") << m.at(a, b);
    out << '\n';
  }
}

void writeSummaryCsv(std::ostream& out, const std::vector<std::pair<std::string, double>>& rows) {
  out << "metric,value\n";
  for (const auto& [k, v] : rows) out << k << ',' << v << '\n';
}

}  // namespace smoothkv::leak
