#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>
#include "maskrgg/gaussmodel.hpp"
#include "maskrgg/matrix.hpp"
#include "maskrgg/rng.hpp"

namespace maskrgg {

/// Edge subset of the complete bipartite graph between rows (R) and
/// columns (L). Edges are kept sorted; duplicates are rejected.
class PatternGraph {
 public:
  struct Edge {
    int row = 0;
    int col = 0;
    auto operator<=>(const Edge&) const = default;
  };

  PatternGraph() = default;
  explicit PatternGraph(std::vector<Edge> edges);

  static PatternGraph single_edge();
  static PatternGraph two_path();    // row 0 joined to columns 0 and 1
  static PatternGraph four_cycle();  // rows {0,1} x columns {0,1}
  /// Pattern from a bitmask over the row-major entries of an n x m matrix.
  static PatternGraph from_entry_mask(std::uint64_t mask, int n, int m);

  [[nodiscard]] const std::vector<Edge>& edges() const noexcept { return edges_; }
  [[nodiscard]] std::size_t size() const noexcept { return edges_.size(); }
  [[nodiscard]] std::vector<int> row_vertices() const;
  [[nodiscard]] std::vector<int> col_vertices() const;
  /// True if some vertex has degree one.
  [[nodiscard]] bool has_leaf() const;

 private:
  std::vector<Edge> edges_;
};

/// P2(M) = sum_i sum_{k<l} (M_ik - p)(M_il - p), exact in O(nm).
double signed_wedges(const BitMatrix& matrix, double p);

/// C4(M) = sum_{i<j} sum_{k<l} (M_ik - p)(M_il - p)(M_jk - p)(M_jl - p).
///
/// Evaluated through D = A^T A with A = M - p: C4 = sum_{k<l} (D_kl^2 -
/// sum_i A_ik^2 A_il^2) / 2, pairing along the shorter side. Each D_kl is
/// assembled from integer co-occurrence counts of bit-packed lines, so the
/// only rounding happens in the compensated outer sum.
double signed_four_cycles(const BitMatrix& matrix, double p);

/// Wedge sum restricted to terms whose entries all have mask = 1.
double signed_wedges_masked(const BitMatrix& matrix, const BitMatrix& mask, double p);

/// Four-cycle sum restricted to terms whose four entries all have mask = 1.
double signed_four_cycles_masked(const BitMatrix& matrix, const BitMatrix& mask, double p);

/// prod_{e in pattern} (M_e - p). Throws std::out_of_range for edges outside
/// the matrix and std::invalid_argument for an empty pattern.
double signed_weight_of_pattern(const BitMatrix& matrix, double p, const PatternGraph& pattern);

enum class Statistic { kWedge, kFourCycle, kWedgeMasked, kFourCycleMasked };

/// Registry names: "wedge", "c4", "wedge-masked", "c4-masked".
Statistic parse_statistic(std::string_view name);
std::string_view statistic_name(Statistic statistic);
std::span<const std::string_view> statistic_names();
bool requires_mask(Statistic statistic);

/// Evaluates a registered statistic; `mask` must be non-null for the masked
/// variants and is ignored otherwise.
double evaluate_statistic(Statistic statistic, const BitMatrix& matrix, const BitMatrix* mask,
                          double p);

enum class Hypothesis {
  kNull,         // M ~ Bern(p) i.i.d., mask ~ Bern(q) independent of M
  kAlternative,  // unknown-mask model; masked statistics see the true mask
};

/// Simulates every statistic in `statistics` on the same draws. Trial t uses
/// the stream seed.child(t). Returns values[statistic][trial].
std::vector<std::vector<double>> simulate_statistics(std::span<const Statistic> statistics,
                                                     Hypothesis hypothesis,
                                                     const ModelParams& params,
                                                     const Calibration* cal, int trials,
                                                     const StreamSeed& seed, unsigned threads);

/// Two-sided empirical acceptance region of a statistic under the null.
struct NullInterval {
  double lower = 0.0;
  double upper = 0.0;
  double alpha = 0.05;
  int trials = 0;

  [[nodiscard]] bool rejects(double value) const { return value < lower || value > upper; }
};

/// Builds a NullInterval from simulated null values (the alpha/2 and
/// 1 - alpha/2 empirical quantiles). Throws when trials < 100 / alpha.
NullInterval null_interval_from_samples(std::vector<double> values, double alpha);

/// Quantiles of the statistic under M(n, m, p) (plus a Bern(q) mask for the
/// masked statistics). Deterministic given the seed.
NullInterval calibrate_null(Statistic statistic, const ModelParams& params, int trials,
                            double alpha, const StreamSeed& seed, unsigned threads = 1);

struct PowerEstimate {
  double power = 0.0;
  double std_error = 0.0;  // binomial sqrt(power (1 - power) / trials)
  double h1_mean = 0.0;
  int trials = 0;
};

PowerEstimate power_from_samples(std::span<const double> values, const NullInterval& interval);

/// Fraction of unknown-mask-model samples falling outside the null interval.
PowerEstimate estimate_power(Statistic statistic, const ModelParams& params,
                             const Calibration& cal, const NullInterval& interval, int trials,
                             const StreamSeed& seed, unsigned threads = 1);

struct TestReport {
  std::string statistic;
  double value = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool reject = false;
  double alpha = 0.05;
  int trials = 0;
  std::uint64_t seed = 0;
};

/// Calibrates the null for the observed matrix shape and tests `matrix`.
TestReport run_test(Statistic statistic, const BitMatrix& matrix, const BitMatrix* mask,
                    double p, int null_trials, double alpha, std::uint64_t seed,
                    unsigned threads = 1);

nlohmann::json to_json(const TestReport& report);

}  // namespace maskrgg
