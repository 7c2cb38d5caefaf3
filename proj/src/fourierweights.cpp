#include "maskrgg/fourierweights.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>

#include "maskrgg/numerics.hpp"
#include "maskrgg/parallel.hpp"

namespace maskrgg {

double hermite(int k, double x) {
  if (k < 0 || k > kMaxHermiteOrder) {
    throw std::invalid_argument("hermite: order must lie in [0, 64]");
  }
  if (k == 0) return 1.0;
  double prev = 1.0;
  double curr = x;
  for (int j = 1; j < k; ++j) {
    const double next = x * curr - j * prev;
    prev = curr;
    curr = next;
  }
  return curr;
}

double gaussian_density_derivative(int s, double x, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_density_derivative: sigma must be > 0");
  if (s < 0 || s > kMaxHermiteOrder) {
    throw std::invalid_argument("gaussian_density_derivative: order must lie in [0, 64]");
  }
  const double u = x / sigma;
  const double density = normal_pdf(u) / sigma;
  const double sign = (s % 2 == 0) ? 1.0 : -1.0;
  return sign * std::pow(sigma, -s) * hermite(s, u) * density;
}

namespace {

void enumerate_into(CoveringTupleSet& out) {
  const int k = out.alpha_size;
  std::vector<CoveringTupleSet::Pair> current;
  std::vector<int> counts(k, 0);
  int uncovered = k;

  auto recurse = [&](auto&& self, int remaining) -> void {
    if (uncovered > 2 * remaining) return;
    if (remaining == 0) {
      out.tuples.push_back(current);
      out.multiplicities.push_back(counts);
      return;
    }
    for (int a = 0; a < k; ++a) {
      for (int b = 0; b < k; ++b) {
        current.push_back({a, b});
        for (int e : {a, b}) {
          if (counts[e]++ == 0) --uncovered;
        }
        self(self, remaining - 1);
        for (int e : {a, b}) {
          if (--counts[e] == 0) ++uncovered;
        }
        current.pop_back();
      }
    }
  };
  recurse(recurse, out.ell);
}

}  // namespace

const CoveringTupleSet& enumerate_covering_tuples(int alpha_size) {
  if (alpha_size < 1 || alpha_size > kMaxCoveringSize) {
    throw std::invalid_argument("enumerate_covering_tuples: size must lie in [1, 8]");
  }
  static std::mutex mutex;
  static std::array<std::unique_ptr<CoveringTupleSet>, kMaxCoveringSize + 1> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[alpha_size];
  if (!slot) {
    auto set = std::make_unique<CoveringTupleSet>();
    set->alpha_size = alpha_size;
    set->ell = (alpha_size + 1) / 2;
    enumerate_into(*set);
    slot = std::move(set);
  }
  return *slot;
}

double leading_term_lambda(const LatentMatrix& x_alpha, const Calibration& cal,
                           bool sigma_hat_density) {
  const int k = static_cast<int>(x_alpha.rows());
  if (k < 1 || k > kMaxCoveringSize) {
    throw std::invalid_argument("leading_term_lambda: pattern size must lie in [1, 8]");
  }
  if (x_alpha.dim() != cal.d) {
    throw std::invalid_argument("leading_term_lambda: latent dimension differs from calibration");
  }
  const CoveringTupleSet& covering = enumerate_covering_tuples(k);
  const int ell = covering.ell;

  Eigen::MatrixXd delta = x_alpha.normalized_gram();
  delta.diagonal().array() -= cal.sigma_hat * cal.sigma_hat;

  const double sigma = sigma_hat_density ? cal.sigma_hat : 1.0;
  std::vector<double> derivative(2 * ell);
  for (int s = 0; s < 2 * ell; ++s) derivative[s] = gaussian_density_derivative(s, cal.tau, sigma);

  CompensatedSum total;
  for (std::size_t t = 0; t < covering.tuples.size(); ++t) {
    double term = 1.0;
    for (const auto& r : covering.tuples[t]) term *= delta(r[0], r[1]);
    for (int s : covering.multiplicities[t]) term *= derivative[s - 1];
    total.add(term);
  }
  double prefactor = 1.0;
  for (int j = 1; j <= ell; ++j) prefactor /= 2.0 * j;
  return prefactor * total.value();
}

std::string_view method_name(EstimateMethod method) {
  switch (method) {
    case EstimateMethod::kMonteCarlo:
      return "mc";
    case EstimateMethod::kQuadrature:
      return "quadrature";
    case EstimateMethod::kExactBivariate:
      return "exact-bivariate";
  }
  return "unknown";
}

nlohmann::json to_json(const SignedWeightEstimate& estimate) {
  return {{"value", estimate.value},
          {"std_error", estimate.std_error},
          {"method", method_name(estimate.method)},
          {"samples", estimate.samples}};
}

namespace {

constexpr std::int64_t kBlockSize = 4096;

struct BlockSums {
  CompensatedSum sum;
  CompensatedSum sum_sq;
  std::int64_t count = 0;

  void add(double v) {
    sum.add(v);
    sum_sq.add(v * v);
    ++count;
  }
};

// Runs `draw(rng)` `count` times in blocks of kBlockSize; block b uses
// seed.child(b). Reduction is in block order.
template <typename Draw>
MeanEstimate blocked_mean(std::int64_t count, const StreamSeed& seed, unsigned threads,
                          const Draw& draw) {
  const std::int64_t blocks = (count + kBlockSize - 1) / kBlockSize;
  std::vector<BlockSums> partial(static_cast<std::size_t>(blocks));
  parallel_for(partial.size(), threads, [&](std::size_t b) {
    Rng rng = seed.child(b).rng();
    const std::int64_t begin = static_cast<std::int64_t>(b) * kBlockSize;
    const std::int64_t end = std::min(count, begin + kBlockSize);
    for (std::int64_t i = begin; i < end; ++i) partial[b].add(draw(rng));
  });
  CompensatedSum sum;
  CompensatedSum sum_sq;
  for (const auto& p : partial) {
    sum.add(p.sum.value());
    sum_sq.add(p.sum_sq.value());
  }
  MeanEstimate out;
  out.count = static_cast<std::size_t>(count);
  const auto n = static_cast<double>(count);
  out.mean = sum.value() / n;
  if (count > 1) {
    out.variance = std::max(0.0, (sum_sq.value() - n * out.mean * out.mean) / (n - 1.0));
    out.std_error = std::sqrt(out.variance / n);
  }
  return out;
}

}  // namespace

SignedWeightEstimate conditional_star_sw_mc(const LatentMatrix& x_alpha, const Calibration& cal,
                                            std::int64_t samples, const StreamSeed& seed,
                                            unsigned threads) {
  if (samples < 1000) throw std::invalid_argument("conditional_star_sw_mc: samples must be >= 1000");
  const int k = static_cast<int>(x_alpha.rows());
  if (k < 1) throw std::invalid_argument("conditional_star_sw_mc: empty pattern");
  const Eigen::Index d = x_alpha.dim();
  const double tau = cal.tau;
  const double p = cal.p;

  const Eigen::MatrixXd gram = x_alpha.normalized_gram();
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  bool reduced = llt.info() == Eigen::Success;
  Eigen::MatrixXd factor;
  if (reduced) {
    factor = llt.matrixL();
    const double scale = gram.diagonal().maxCoeff();
    for (int u = 0; u < k; ++u) reduced = reduced && factor(u, u) > 1e-12 * std::sqrt(scale);
  }
  const Eigen::MatrixXd projector = x_alpha.values() / std::sqrt(static_cast<double>(d));

  auto pair_value = [&](Rng& rng) {
    Eigen::VectorXd z;
    if (reduced) {
      Eigen::VectorXd xi(k);
      for (int u = 0; u < k; ++u) xi(u) = rng.normal();
      z = factor.triangularView<Eigen::Lower>() * xi;
    } else {
      Eigen::VectorXd x(d);
      for (Eigen::Index j = 0; j < d; ++j) x(j) = rng.normal();
      z = projector * x;
    }
    double plus = 1.0;
    double minus = 1.0;
    for (int u = 0; u < k; ++u) {
      plus *= (z(u) <= tau ? 1.0 : 0.0) - p;
      minus *= (-z(u) <= tau ? 1.0 : 0.0) - p;
    }
    return 0.5 * (plus + minus);
  };
  const std::int64_t pairs = samples / 2;
  const MeanEstimate est = blocked_mean(pairs, seed, threads, pair_value);
  return {est.mean, est.std_error, EstimateMethod::kMonteCarlo, 2 * pairs};
}

SignedWeightEstimate conditional_star_sw_exact2(const LatentMatrix& x_alpha,
                                                const Calibration& cal) {
  if (x_alpha.rows() != 2) {
    throw std::invalid_argument("conditional_star_sw_exact2: exactly two latent rows required");
  }
  const Eigen::MatrixXd gram = x_alpha.normalized_gram();
  const double v1 = gram(0, 0);
  const double v2 = gram(1, 1);
  if (!(v1 > 0.0 && v2 > 0.0)) {
    throw std::invalid_argument("conditional_star_sw_exact2: Gram matrix has a zero variance");
  }
  double rho = gram(0, 1) / std::sqrt(v1 * v2);
  if (std::fabs(rho) > 1.0 + 1e-10) {
    throw std::invalid_argument("conditional_star_sw_exact2: Gram matrix is not positive semidefinite");
  }
  rho = std::clamp(rho, -1.0, 1.0);
  const double a1 = cal.tau / std::sqrt(v1);
  const double a2 = cal.tau / std::sqrt(v2);

  auto integrand = [a1, a2](double theta) {
    const double s = std::sin(theta);
    const double c = std::cos(theta);
    const double c2 = c * c;
    // a1^2 - 2 a1 a2 s + a2^2 written to stay accurate as |s| -> 1.
    double numerator;
    if (s >= 0.0) {
      numerator = (a1 - a2) * (a1 - a2) + 2.0 * a1 * a2 * c2 / (1.0 + s);
    } else {
      numerator = (a1 + a2) * (a1 + a2) - 2.0 * a1 * a2 * c2 / (1.0 - s);
    }
    if (c2 <= 0.0) {
      return numerator == 0.0 ? std::exp(-0.5 * a1 * a1) / (2.0 * std::numbers::pi) : 0.0;
    }
    return std::exp(-numerator / (2.0 * c2)) / (2.0 * std::numbers::pi);
  };
  const double upper = std::asin(rho);
  QuadratureResult quad;
  if (upper != 0.0) quad = integrate_adaptive(integrand, 0.0, upper, 1e-14, 1e-12);
  const double independent = (normal_cdf(a1) - cal.p) * (normal_cdf(a2) - cal.p);
  return {independent + quad.value, quad.error, EstimateMethod::kExactBivariate, quad.nodes};
}

std::string_view status_name(VerificationStatus status) {
  switch (status) {
    case VerificationStatus::kPass:
      return "pass";
    case VerificationStatus::kFail:
      return "fail";
    case VerificationStatus::kInconclusive:
      return "inconclusive";
  }
  return "unknown";
}

ScalingReport verify_remainder_scaling(const ScalingOptions& options) {
  const int k = options.alpha_size;
  if (k < 2 || k > 4) throw std::invalid_argument("verify_remainder_scaling: alpha_size must be 2, 3 or 4");
  if (options.d_values.size() < 2) {
    throw std::invalid_argument("verify_remainder_scaling: at least two d values required");
  }
  if (options.draws < 1) throw std::invalid_argument("verify_remainder_scaling: draws must be >= 1");
  const int ell = (k + 1) / 2;

  ScalingReport report;
  report.options = options;
  report.method = k == 2 ? EstimateMethod::kExactBivariate : EstimateMethod::kMonteCarlo;
  report.slope_limit = -0.5 * (ell + 1) + 0.5;

  const StreamSeed root(options.seed);
  for (std::size_t i = 0; i < options.d_values.size(); ++i) {
    const int d = options.d_values[i];
    const Calibration cal = calibrate(options.p, d);
    const auto draws = static_cast<std::size_t>(options.draws);
    std::vector<double> residual(draws);
    std::vector<double> error(draws);
    std::vector<double> lambda(draws);
    std::vector<int> attempts(draws);
    // Draws run serially when the Monte Carlo estimator parallelizes itself.
    const unsigned outer = k == 2 ? options.threads : 1;
    const unsigned inner = k == 2 ? 1 : options.threads;
    parallel_for(draws, outer, [&](std::size_t j) {
      const StreamSeed stream = root.child(i).child(j);
      Rng rng = stream.rng();
      const LatentMatrix x =
          sample_latents_in_s_rho(k, d, options.rho, rng, kDefaultRejectionAttempts, &attempts[j]);
      lambda[j] = leading_term_lambda(x, cal, options.sigma_hat_density);
      const SignedWeightEstimate est =
          k == 2 ? conditional_star_sw_exact2(x, cal)
                 : conditional_star_sw_mc(x, cal, options.mc_samples, stream.child(1), inner);
      residual[j] = std::fabs(est.value - lambda[j]);
      error[j] = est.std_error;
    });

    ScalingPoint point;
    point.d = d;
    const MeanEstimate res = mean_estimate(residual);
    point.mean_residual = res.mean;
    point.residual_se = res.std_error;
    point.estimate_error = mean_estimate(error).mean;
    CompensatedSum abs_lambda;
    for (double v : lambda) abs_lambda.add(std::fabs(v));
    point.mean_abs_lambda = abs_lambda.value() / static_cast<double>(draws);
    point.fitted_constant = std::sqrt(static_cast<double>(d)) / (options.rho * k) *
                            std::pow(point.mean_residual, 1.0 / (ell + 1));
    for (int a : attempts) point.rejection_attempts += a;
    report.points.push_back(point);
  }

  std::vector<double> ds;
  std::vector<double> rs;
  bool noisy = false;
  for (const auto& point : report.points) {
    ds.push_back(point.d);
    rs.push_back(point.mean_residual);
    report.fitted_constant = std::max(report.fitted_constant, point.fitted_constant);
    noisy = noisy || point.estimate_error > 0.5 * point.mean_residual;
  }
  for (std::size_t i = 0; i + 1 < rs.size(); ++i) report.step_ratios.push_back(rs[i] / rs[i + 1]);
  report.slope = log_log_slope(ds, rs);

  if (noisy) {
    report.status = VerificationStatus::kInconclusive;
  } else {
    const bool ratios_ok =
        std::all_of(report.step_ratios.begin(), report.step_ratios.end(),
                    [&](double r) { return r >= options.min_step_ratio; });
    report.status = ratios_ok && report.slope <= report.slope_limit ? VerificationStatus::kPass
                                                                    : VerificationStatus::kFail;
  }
  return report;
}

nlohmann::json to_json(const ScalingReport& report) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : report.points) {
    points.push_back({{"d", p.d},
                      {"mean_residual", p.mean_residual},
                      {"residual_se", p.residual_se},
                      {"estimate_error", p.estimate_error},
                      {"mean_abs_lambda", p.mean_abs_lambda},
                      {"fitted_constant", p.fitted_constant},
                      {"rejection_attempts", p.rejection_attempts}});
  }
  const auto& o = report.options;
  return {{"alpha_size", o.alpha_size},
          {"p", o.p},
          {"rho", o.rho},
          {"draws", o.draws},
          {"mc_samples", o.mc_samples},
          {"sigma_hat_density", o.sigma_hat_density},
          {"seed", o.seed},
          {"method", method_name(report.method)},
          {"points", points},
          {"step_ratios", report.step_ratios},
          {"min_step_ratio", o.min_step_ratio},
          {"slope", report.slope},
          {"slope_limit", report.slope_limit},
          {"fitted_constant", report.fitted_constant},
          {"status", status_name(report.status)}};
}

SignedWeightEstimate unconditional_star_sw_mc(int ell, double p, int d, std::int64_t trials,
                                              const StreamSeed& seed, unsigned threads,
                                              LeafMode mode) {
  if (ell < 1) throw std::invalid_argument("unconditional_star_sw_mc: ell must be >= 1");
  if (trials < 2) throw std::invalid_argument("unconditional_star_sw_mc: trials must be >= 2");
  const Calibration cal = calibrate(p, d);
  const double dd = static_cast<double>(d);
  auto draw = [&](Rng& rng) {
    const double s = std::sqrt(rng.chi_squared(dd) / dd);
    if (mode == LeafMode::kAnalytic) return std::pow(normal_cdf(cal.tau / s) - p, ell);
    double product = 1.0;
    for (int u = 0; u < ell; ++u) product *= (s * rng.normal() <= cal.tau ? 1.0 : 0.0) - p;
    return product;
  };
  const MeanEstimate est = blocked_mean(trials, seed, threads, draw);
  return {est.mean, est.std_error, EstimateMethod::kMonteCarlo, trials};
}

LeafZeroReport leaf_zero_check(const PatternGraph& pattern, const ModelParams& params,
                               std::int64_t trials, double rho, const StreamSeed& seed,
                               unsigned threads) {
  params.validate();
  if (params.p != 0.5) throw std::invalid_argument("leaf_zero_check: p must be exactly 1/2");
  if (pattern.size() == 0) throw std::invalid_argument("leaf_zero_check: empty pattern");
  if (trials < 2) throw std::invalid_argument("leaf_zero_check: trials must be >= 2");
  const auto rows = pattern.row_vertices();
  const auto cols = pattern.col_vertices();
  if (rows.back() >= params.n || cols.back() >= params.m) {
    throw std::out_of_range("leaf_zero_check: pattern does not fit in an n x m matrix");
  }
  std::map<int, int> col_index;
  for (std::size_t c = 0; c < cols.size(); ++c) col_index[cols[c]] = static_cast<int>(c);
  const int d = params.d;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  LeafZeroReport report;
  report.pattern_has_leaf = pattern.has_leaf();
  report.d = d;
  report.rho = rho;
  report.trials = trials;

  for (int variant = 0; variant < 2; ++variant) {
    const bool conditioned = variant == 1;
    auto draw = [&](Rng& rng) {
      // Conditioning involves every row of X_R, so all n rows are drawn.
      const LatentMatrix right = conditioned ? sample_latents_in_s_rho(params.n, d, rho, rng)
                                             : LatentMatrix();
      LatentMatrix left(static_cast<Eigen::Index>(cols.size()), d);
      for (Eigen::Index c = 0; c < left.rows(); ++c) {
        for (int j = 0; j < d; ++j) left(c, j) = rng.normal();
      }
      LatentMatrix own_rows;
      if (!conditioned) {
        own_rows = LatentMatrix(params.n, d);
        for (int r : rows) {
          for (int j = 0; j < d; ++j) own_rows(r, j) = rng.normal();
        }
      }
      const LatentMatrix& x_r = conditioned ? right : own_rows;
      double product = 1.0;
      for (const auto& e : pattern.edges()) {
        const double inner = x_r.values().row(e.row).dot(left.values().row(col_index[e.col]));
        product *= (inner * scale <= 0.0 ? 1.0 : 0.0) - 0.5;
      }
      return product;
    };
    const MeanEstimate est = blocked_mean(trials, seed.child(variant), threads, draw);
    LeafZeroRow row;
    row.variant = conditioned ? "s-rho" : "unconditional";
    row.estimate = est.mean;
    row.std_error = est.std_error;
    row.z_score = est.std_error > 0.0 ? est.mean / est.std_error : 0.0;
    row.within_4_sigma = std::fabs(est.mean) <= 4.0 * est.std_error;
    report.rows.push_back(row);
  }
  return report;
}

nlohmann::json to_json(const LeafZeroReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"variant", r.variant},
                    {"estimate", r.estimate},
                    {"std_error", r.std_error},
                    {"z_score", r.z_score},
                    {"within_4_sigma", r.within_4_sigma}});
  }
  return {{"pattern_has_leaf", report.pattern_has_leaf},
          {"d", report.d},
          {"rho", report.rho},
          {"trials", report.trials},
          {"rows", rows}};
}

}  // namespace maskrgg

namespace maskrgg {

LeafMode parse_leaf_mode(std::string_view name) {
  if (name == "sampled") return LeafMode::kSampled;
  if (name == "analytic") return LeafMode::kAnalytic;
  throw std::invalid_argument("unknown leaf mode: " + std::string(name));
}

std::string_view leaf_mode_name(LeafMode mode) {
  return mode == LeafMode::kSampled ? "sampled" : "analytic";
}

StarReport verify_star_decay(const StarOptions& options) {
  if (options.d_values.size() < 2) {
    throw std::invalid_argument("verify_star_decay: at least two d values required");
  }
  StarReport report;
  report.options = options;
  const StreamSeed root(options.seed);
  for (std::size_t i = 0; i < options.d_values.size(); ++i) {
    StarPoint point;
    point.d = options.d_values[i];
    point.estimate = unconditional_star_sw_mc(options.ell, options.p, point.d, options.trials,
                                              root.child(i), options.threads, options.mode);
    point.fitted_constant = static_cast<double>(point.d) / options.ell *
                            std::pow(std::fabs(point.estimate.value), 2.0 / options.ell);
    report.fitted_constant = std::max(report.fitted_constant, point.fitted_constant);
    report.points.push_back(point);
  }
  bool steps_ok = true;
  for (std::size_t i = 0; i + 1 < report.points.size(); ++i) {
    const auto& a = report.points[i].estimate;
    const auto& b = report.points[i + 1].estimate;
    report.step_ratios.push_back(std::fabs(a.value) / std::fabs(b.value));
    const double slack = 3.0 * std::hypot(a.std_error / options.min_step_ratio, b.std_error);
    steps_ok = steps_ok && std::fabs(b.value) <= std::fabs(a.value) / options.min_step_ratio + slack;
  }
  const auto& first = report.points.front().estimate;
  if (std::fabs(first.value) <= 3.0 * first.std_error) {
    report.status = VerificationStatus::kInconclusive;
  } else {
    report.status = steps_ok ? VerificationStatus::kPass : VerificationStatus::kFail;
  }
  return report;
}

nlohmann::json to_json(const StarReport& report) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : report.points) {
    points.push_back({{"d", p.d},
                      {"estimate", to_json(p.estimate)},
                      {"fitted_constant", p.fitted_constant}});
  }
  const auto& o = report.options;
  return {{"ell", o.ell},
          {"p", o.p},
          {"trials", o.trials},
          {"mode", leaf_mode_name(o.mode)},
          {"min_step_ratio", o.min_step_ratio},
          {"seed", o.seed},
          {"points", points},
          {"step_ratios", report.step_ratios},
          {"fitted_constant", report.fitted_constant},
          {"status", status_name(report.status)}};
}

}  // namespace maskrgg
