#include "maskrgg/signedstats.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include "maskrgg/numerics.hpp"
#include "maskrgg/parallel.hpp"

namespace maskrgg {

PatternGraph::PatternGraph(std::vector<Edge> edges) : edges_(std::move(edges)) {
  std::sort(edges_.begin(), edges_.end());
  if (std::adjacent_find(edges_.begin(), edges_.end()) != edges_.end()) {
    throw std::invalid_argument("PatternGraph: duplicate edge");
  }
  for (const auto& e : edges_) {
    if (e.row < 0 || e.col < 0) throw std::invalid_argument("PatternGraph: negative vertex");
  }
}

PatternGraph PatternGraph::single_edge() { return PatternGraph({{0, 0}}); }

PatternGraph PatternGraph::two_path() { return PatternGraph({{0, 0}, {0, 1}}); }

PatternGraph PatternGraph::four_cycle() { return PatternGraph({{0, 0}, {0, 1}, {1, 0}, {1, 1}}); }

PatternGraph PatternGraph::from_entry_mask(std::uint64_t mask, int n, int m) {
  std::vector<Edge> edges;
  for (int k = 0; k < n * m; ++k) {
    if ((mask >> k) & 1U) edges.push_back({k / m, k % m});
  }
  return PatternGraph(std::move(edges));
}

std::vector<int> PatternGraph::row_vertices() const {
  std::set<int> rows;
  for (const auto& e : edges_) rows.insert(e.row);
  return {rows.begin(), rows.end()};
}

std::vector<int> PatternGraph::col_vertices() const {
  std::set<int> cols;
  for (const auto& e : edges_) cols.insert(e.col);
  return {cols.begin(), cols.end()};
}

bool PatternGraph::has_leaf() const {
  std::map<int, int> row_degree;
  std::map<int, int> col_degree;
  for (const auto& e : edges_) {
    ++row_degree[e.row];
    ++col_degree[e.col];
  }
  auto leaf = [](const auto& entry) { return entry.second == 1; };
  return std::any_of(row_degree.begin(), row_degree.end(), leaf) ||
         std::any_of(col_degree.begin(), col_degree.end(), leaf);
}

namespace {

// Columns of a BitMatrix packed into 64-bit words, column-major.
struct PackedLines {
  int lines = 0;
  int length = 0;
  int words = 0;
  std::vector<std::uint64_t> bits;

  [[nodiscard]] const std::uint64_t* line(int k) const {
    return bits.data() + static_cast<std::size_t>(k) * words;
  }
};

PackedLines pack_columns(const BitMatrix& matrix) {
  PackedLines out;
  out.lines = matrix.cols();
  out.length = matrix.rows();
  out.words = (matrix.rows() + 63) / 64;
  out.bits.assign(static_cast<std::size_t>(out.lines) * out.words, 0);
  for (int i = 0; i < matrix.rows(); ++i) {
    const std::uint64_t bit = std::uint64_t{1} << (i % 64);
    const int word = i / 64;
    for (int k = 0; k < matrix.cols(); ++k) {
      if (matrix(i, k)) out.bits[static_cast<std::size_t>(k) * out.words + word] |= bit;
    }
  }
  return out;
}

PackedLines intersect(const PackedLines& a, const PackedLines& b) {
  PackedLines out = a;
  for (std::size_t w = 0; w < out.bits.size(); ++w) out.bits[w] &= b.bits[w];
  return out;
}

int popcount_and(const std::uint64_t* a, const std::uint64_t* b, int words) {
  int count = 0;
  for (int w = 0; w < words; ++w) count += std::popcount(a[w] & b[w]);
  return count;
}

int popcount_line(const std::uint64_t* a, int words) {
  int count = 0;
  for (int w = 0; w < words; ++w) count += std::popcount(a[w]);
  return count;
}

// Sum over line pairs k < l of (D_kl^2 - S_kl) / 2 where D and S are the
// centered co-moment and fourth-moment sums over positions observed in both
// lines. `observed` holds ones that are visible; `visible` is null for an
// all-visible matrix.
double four_cycle_kernel(const PackedLines& observed, const PackedLines* visible, double p) {
  const double a = 1.0 - p;
  const double b = -p;
  const double d11 = a * a;
  const double d10 = a * b;
  const double d00 = b * b;
  const double s11 = d11 * d11;
  const double s10 = d10 * d10;
  const double s00 = d00 * d00;
  const int words = observed.words;

  std::vector<int> ones(observed.lines);
  for (int k = 0; k < observed.lines; ++k) ones[k] = popcount_line(observed.line(k), words);

  CompensatedSum total;
  for (int k = 0; k < observed.lines; ++k) {
    const std::uint64_t* ok = observed.line(k);
    for (int l = k + 1; l < observed.lines; ++l) {
      const std::uint64_t* ol = observed.line(l);
      const int n11 = popcount_and(ok, ol, words);
      int k_only;
      int l_only;
      int both_visible;
      if (visible == nullptr) {
        k_only = ones[k] - n11;
        l_only = ones[l] - n11;
        both_visible = observed.length;
      } else {
        k_only = popcount_and(ok, visible->line(l), words) - n11;
        l_only = popcount_and(ol, visible->line(k), words) - n11;
        both_visible = popcount_and(visible->line(k), visible->line(l), words);
      }
      const int n00 = both_visible - n11 - k_only - l_only;
      const int mixed = k_only + l_only;
      const double d = n11 * d11 + mixed * d10 + n00 * d00;
      const double s = n11 * s11 + mixed * s10 + n00 * s00;
      total.add(0.5 * (d * d - s));
    }
  }
  return total.value();
}

// Rows of the returned matrices are paired implicitly, columns explicitly;
// transpose so that the explicitly paired side is the shorter one.
bool pair_rows_instead(const BitMatrix& matrix) { return matrix.cols() > matrix.rows(); }

void check_p(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("statistic: p must lie in [0, 1]");
}

}  // namespace

double signed_wedges(const BitMatrix& matrix, double p) {
  check_p(p);
  const double a = 1.0 - p;
  const double b = -p;
  CompensatedSum total;
  for (int i = 0; i < matrix.rows(); ++i) {
    int ones = 0;
    for (int k = 0; k < matrix.cols(); ++k) ones += matrix(i, k);
    const int zeros = matrix.cols() - ones;
    const double sum = ones * a + zeros * b;
    const double sum_sq = ones * a * a + zeros * b * b;
    total.add(0.5 * (sum * sum - sum_sq));
  }
  return total.value();
}

double signed_wedges_masked(const BitMatrix& matrix, const BitMatrix& mask, double p) {
  check_p(p);
  if (!matrix.same_shape(mask)) throw std::invalid_argument("signed_wedges_masked: shape mismatch");
  const double a = 1.0 - p;
  const double b = -p;
  CompensatedSum total;
  for (int i = 0; i < matrix.rows(); ++i) {
    int ones = 0;
    int visible = 0;
    for (int k = 0; k < matrix.cols(); ++k) {
      visible += mask(i, k);
      ones += mask(i, k) & matrix(i, k);
    }
    const int zeros = visible - ones;
    const double sum = ones * a + zeros * b;
    const double sum_sq = ones * a * a + zeros * b * b;
    total.add(0.5 * (sum * sum - sum_sq));
  }
  return total.value();
}

double signed_four_cycles(const BitMatrix& matrix, double p) {
  check_p(p);
  if (pair_rows_instead(matrix)) return signed_four_cycles(matrix.transposed(), p);
  return four_cycle_kernel(pack_columns(matrix), nullptr, p);
}

double signed_four_cycles_masked(const BitMatrix& matrix, const BitMatrix& mask, double p) {
  check_p(p);
  if (!matrix.same_shape(mask)) {
    throw std::invalid_argument("signed_four_cycles_masked: shape mismatch");
  }
  if (pair_rows_instead(matrix)) {
    return signed_four_cycles_masked(matrix.transposed(), mask.transposed(), p);
  }
  const PackedLines visible = pack_columns(mask);
  const PackedLines observed = intersect(pack_columns(matrix), visible);
  return four_cycle_kernel(observed, &visible, p);
}

double signed_weight_of_pattern(const BitMatrix& matrix, double p, const PatternGraph& pattern) {
  if (pattern.size() == 0) throw std::invalid_argument("signed_weight_of_pattern: empty pattern");
  double product = 1.0;
  for (const auto& e : pattern.edges()) {
    if (e.row >= matrix.rows() || e.col >= matrix.cols()) {
      throw std::out_of_range("signed_weight_of_pattern: edge outside the matrix");
    }
    product *= static_cast<double>(matrix(e.row, e.col)) - p;
  }
  return product;
}

namespace {

constexpr std::array<std::string_view, 4> kStatisticNames = {"wedge", "c4", "wedge-masked",
                                                             "c4-masked"};

}  // namespace

Statistic parse_statistic(std::string_view name) {
  for (std::size_t i = 0; i < kStatisticNames.size(); ++i) {
    if (kStatisticNames[i] == name) return static_cast<Statistic>(i);
  }
  throw std::invalid_argument("unknown statistic: " + std::string(name));
}

std::string_view statistic_name(Statistic statistic) {
  return kStatisticNames[static_cast<std::size_t>(statistic)];
}

std::span<const std::string_view> statistic_names() { return kStatisticNames; }

bool requires_mask(Statistic statistic) {
  return statistic == Statistic::kWedgeMasked || statistic == Statistic::kFourCycleMasked;
}

double evaluate_statistic(Statistic statistic, const BitMatrix& matrix, const BitMatrix* mask,
                          double p) {
  if (requires_mask(statistic) && mask == nullptr) {
    throw std::invalid_argument(std::string(statistic_name(statistic)) + " requires a mask");
  }
  switch (statistic) {
    case Statistic::kWedge:
      return signed_wedges(matrix, p);
    case Statistic::kFourCycle:
      return signed_four_cycles(matrix, p);
    case Statistic::kWedgeMasked:
      return signed_wedges_masked(matrix, *mask, p);
    case Statistic::kFourCycleMasked:
      return signed_four_cycles_masked(matrix, *mask, p);
  }
  throw std::logic_error("unreachable statistic");
}

std::vector<std::vector<double>> simulate_statistics(std::span<const Statistic> statistics,
                                                     Hypothesis hypothesis,
                                                     const ModelParams& params,
                                                     const Calibration* cal, int trials,
                                                     const StreamSeed& seed, unsigned threads) {
  params.validate();
  if (trials < 1) throw std::invalid_argument("simulate_statistics: trials must be >= 1");
  if (hypothesis == Hypothesis::kAlternative && cal == nullptr) {
    throw std::invalid_argument("simulate_statistics: the alternative needs a calibration");
  }
  const bool needs_mask = std::any_of(statistics.begin(), statistics.end(), requires_mask);
  std::vector<std::vector<double>> values(statistics.size(), std::vector<double>(trials));
  parallel_for(static_cast<std::size_t>(trials), threads, [&](std::size_t t) {
    Rng rng = seed.child(t).rng();
    ObservedSample sample;
    if (hypothesis == Hypothesis::kNull) {
      sample.observed = sample_er(params.n, params.m, params.p, rng);
      if (needs_mask) sample.mask = sample_er(params.n, params.m, params.q, rng);
    } else {
      sample = sample_masked_adjacency(params, *cal, rng);
    }
    for (std::size_t s = 0; s < statistics.size(); ++s) {
      values[s][t] = evaluate_statistic(statistics[s], sample.observed, &sample.mask, params.p);
    }
  });
  return values;
}

NullInterval null_interval_from_samples(std::vector<double> values, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  const auto trials = static_cast<double>(values.size());
  if (trials * alpha < 100.0 - 1e-9) {
    throw std::invalid_argument("null calibration needs at least 100 / alpha trials");
  }
  std::sort(values.begin(), values.end());
  NullInterval out;
  out.lower = sorted_quantile(values, 0.5 * alpha);
  out.upper = sorted_quantile(values, 1.0 - 0.5 * alpha);
  out.alpha = alpha;
  out.trials = static_cast<int>(values.size());
  return out;
}

NullInterval calibrate_null(Statistic statistic, const ModelParams& params, int trials,
                            double alpha, const StreamSeed& seed, unsigned threads) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  if (static_cast<double>(trials) * alpha < 100.0 - 1e-9) {
    throw std::invalid_argument("null calibration needs at least 100 / alpha trials");
  }
  const std::array<Statistic, 1> one = {statistic};
  auto values = simulate_statistics(one, Hypothesis::kNull, params, nullptr, trials, seed, threads);
  return null_interval_from_samples(std::move(values.front()), alpha);
}

PowerEstimate power_from_samples(std::span<const double> values, const NullInterval& interval) {
  PowerEstimate out;
  out.trials = static_cast<int>(values.size());
  if (values.empty()) return out;
  std::size_t rejections = 0;
  CompensatedSum sum;
  for (double v : values) {
    rejections += interval.rejects(v) ? 1 : 0;
    sum.add(v);
  }
  const auto n = static_cast<double>(values.size());
  out.power = static_cast<double>(rejections) / n;
  out.std_error = std::sqrt(out.power * (1.0 - out.power) / n);
  out.h1_mean = sum.value() / n;
  return out;
}

PowerEstimate estimate_power(Statistic statistic, const ModelParams& params,
                             const Calibration& cal, const NullInterval& interval, int trials,
                             const StreamSeed& seed, unsigned threads) {
  const std::array<Statistic, 1> one = {statistic};
  const auto values =
      simulate_statistics(one, Hypothesis::kAlternative, params, &cal, trials, seed, threads);
  return power_from_samples(values.front(), interval);
}

TestReport run_test(Statistic statistic, const BitMatrix& matrix, const BitMatrix* mask,
                    double p, int null_trials, double alpha, std::uint64_t seed,
                    unsigned threads) {
  if (requires_mask(statistic) && (mask == nullptr || !mask->same_shape(matrix))) {
    throw std::invalid_argument("run_test: masked statistic needs a mask of the same shape");
  }
  // Null draws keep the supplied mask fixed: the test conditions on it.
  const StreamSeed root(seed);
  std::vector<double> null_values(static_cast<std::size_t>(std::max(null_trials, 0)));
  if (static_cast<double>(null_trials) * alpha < 100.0 - 1e-9) {
    throw std::invalid_argument("run_test: null calibration needs at least 100 / alpha trials");
  }
  parallel_for(null_values.size(), threads, [&](std::size_t t) {
    Rng rng = root.child(t).rng();
    const BitMatrix draw = sample_er(matrix.rows(), matrix.cols(), p, rng);
    null_values[t] = evaluate_statistic(statistic, draw, mask, p);
  });
  const NullInterval interval = null_interval_from_samples(std::move(null_values), alpha);

  TestReport report;
  report.statistic = std::string(statistic_name(statistic));
  report.value = evaluate_statistic(statistic, matrix, mask, p);
  report.lower = interval.lower;
  report.upper = interval.upper;
  report.reject = interval.rejects(report.value);
  report.alpha = alpha;
  report.trials = interval.trials;
  report.seed = seed;
  return report;
}

nlohmann::json to_json(const TestReport& report) {
  return nlohmann::json{{"statistic", report.statistic}, {"value", report.value},
                        {"lower", report.lower},         {"upper", report.upper},
                        {"reject", report.reject},       {"alpha", report.alpha},
                        {"trials", report.trials},       {"seed", report.seed}};
}

}  // namespace maskrgg
