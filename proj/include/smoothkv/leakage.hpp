#pragma once

#include <iosfwd>
#include <map>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "smoothkv/backend.hpp"
#include "smoothkv/rng.hpp"

namespace smoothkv::leak {

/// Discrete-time Markov chain over states 0..n-1.
class MarkovModel {
 public:
  /// Throws ConfigError unless P is square with rows summing to 1 +- 1e-9.
  explicit MarkovModel(std::vector<std::vector<double>> p);
  /// The three-key chain used throughout the decorrelation experiments.
  static MarkovModel threeKey();

  std::size_t states() const { return p_.size(); }
  std::size_t next(std::size_t current, Rng& rng) const;
  /// Solves pi P = pi, sum pi = 1.
  std::vector<double> stationary() const;
  const std::vector<std::vector<double>>& matrix() const { return p_; }

 private:
  std::vector<std::vector<double>> p_;
  mutable std::vector<std::discrete_distribution<std::size_t>> rows_;
};

/// Keys 1..n with probability proportional to rank^-s.
class ZipfKeys {
 public:
  ZipfKeys(std::uint64_t n, double s);
  std::uint64_t operator()(Rng& rng) const { return dist_(rng) + 1; }
  std::vector<double> pmf() const;

 private:
  std::vector<double> weights_;
  mutable std::discrete_distribution<std::uint64_t> dist_;
};

/// Uniform over all ranges [x, y], 1 <= x <= y <= n.
std::pair<std::uint64_t, std::uint64_t> uniformRange(std::uint64_t n, Rng& rng);
/// Width-w range with uniform start.
std::pair<std::uint64_t, std::uint64_t> fixedWidthRange(std::uint64_t n, std::uint64_t w, Rng& rng);

/// Dense ids for labels in order of first appearance.
class LabelIndex {
 public:
  std::size_t idOf(const Label& label);
  std::size_t size() const { return ids_.size(); }
  std::vector<std::size_t> map(std::span<const Label> labels);

 private:
  std::unordered_map<Label, std::size_t, LabelHash> ids_;
};

/// Labels of events of one kind, in trace order.
std::vector<Label> labelsOf(std::span<const AccessEvent> trace, AccessEvent::Op op = AccessEvent::Op::Read);

/// Row-major dim x dim frequency matrix of consecutive (a, b) pairs.
struct Matrix {
  std::size_t dim = 0;
  std::vector<double> cells;
  double at(std::size_t a, std::size_t b) const { return cells[a * dim + b]; }
};
Matrix transitionMatrix(std::span<const std::size_t> ids, std::size_t universe);

/// Population standard deviation over mean; 0 for constant input.
double rsd(std::span<const double> values);

struct Uniformity {
  double maxRelativeDeviation = 0.0;
  double pValue = 0.0;
  double chiSquare = 0.0;
};
/// Observed counts against the uniform expectation total / universe.
Uniformity uniformityTest(std::span<const std::size_t> ids, std::size_t universe);

struct Distinguisher {
  double frequencyP = 0.0;
  double pairP = 0.0;
  bool indistinguishable(double alpha = 0.01) const { return frequencyP > alpha && pairP > alpha; }
};
/// Two-sample chi-square on label frequencies and on non-overlapping
/// consecutive label pairs. Cells with expected count < 5 are pooled.
Distinguisher rorCrdaDistinguish(std::span<const Label> real, std::span<const Label> ideal);
/// p-value of the chi-square goodness-of-fit of `counts` to `probs`. Cells
/// expecting fewer than 5 are pooled, smallest first.
double goodnessOfFit(std::span<const double> counts, std::span<const double> probs);
/// p-value of the two-sample chi-square homogeneity test over paired counts.
double twoSampleChiSquare(std::span<const double> a, std::span<const double> b);

/// The ideal trace: labels drawn uniformly from `universe`.
std::vector<Label> idealTrace(std::span<const Label> universe, std::size_t length, Rng& rng);

struct LatencySummary {
  std::size_t count = 0;
  double mean = 0.0;
  double p50 = 0.0;
  double p90 = 0.0;
  double p99 = 0.0;
  double max = 0.0;
};
LatencySummary latencyInBatches(std::span<const std::uint64_t> latencies);

void writeTraceCsv(std::ostream& out, std::span<const AccessEvent> trace);
std::vector<AccessEvent> readTraceCsv(std::istream& in);
void writeMatrixCsv(std::ostream& out, const Matrix& m);
void writeSummaryCsv(std::ostream& out, const std::vector<std::pair<std::string, double>>& rows);

}  // namespace smoothkv::leak
