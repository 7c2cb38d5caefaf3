#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "maskrgg/gaussmodel.hpp"
#include "maskrgg/matrix.hpp"
#include "maskrgg/rng.hpp"
#include "maskrgg/signedstats.hpp"

namespace maskrgg {

inline constexpr int kMaxHermiteOrder = 64;
inline constexpr int kMaxCoveringSize = 8;

/// Probabilists' Hermite polynomial He_k(x) by the three-term recurrence.
/// Throws std::invalid_argument for k < 0 or k > 64.
double hermite(int k, double x);

/// s-th derivative of the N(0, sigma^2) density at x,
/// (-1)^s sigma^{-s} He_s(x / sigma) phi_sigma(x).
double gaussian_density_derivative(int s, double x, double sigma);

/// Sequences of ell = ceil(size / 2) ordered pairs over {0, ..., size - 1}
/// whose union is the whole index set.
struct CoveringTupleSet {
  using Pair = std::array<int, 2>;

  int alpha_size = 0;
  int ell = 0;
  std::vector<std::vector<Pair>> tuples;
  /// multiplicities[t][e]: how often index e appears in tuple t (a pair
  /// (e, e) counts twice).
  std::vector<std::vector<int>> multiplicities;
};

/// Memoized per size; the returned reference stays valid for the program's
/// lifetime. Throws for sizes outside [1, 8].
const CoveringTupleSet& enumerate_covering_tuples(int alpha_size);

/// Leading term of E[SW(K_{1,alpha}) | X_alpha] for a star whose leaves
/// carry the rows of `x_alpha`:
///
///   Lambda = 1 / (2^ell ell!) * sum over covering tuples r of
///            prod_j Delta_{r_j} * prod_e phi^{(s_e - 1)}(tau),
///
/// with Delta = <x_u, x_v> / d - sigma_hat^2 I. phi is the N(0, sigma_hat^2)
/// density, or the standard normal density when `sigma_hat_density` is
/// false.
double leading_term_lambda(const LatentMatrix& x_alpha, const Calibration& cal,
                           bool sigma_hat_density = true);

enum class EstimateMethod { kMonteCarlo, kQuadrature, kExactBivariate };

std::string_view method_name(EstimateMethod method);

struct SignedWeightEstimate {
  double value = 0.0;
  double std_error = 0.0;  // Monte Carlo standard error, or quadrature error bound
  EstimateMethod method = EstimateMethod::kMonteCarlo;
  std::int64_t samples = 0;  // center draws, or quadrature nodes
};

nlohmann::json to_json(const SignedWeightEstimate& estimate);

/// Monte Carlo over the star center x ~ N(0, I_d) of
/// prod_u (1(<x_u, x> / sqrt(d) <= tau) - p), in antithetic pairs (x, -x).
///
/// The projections z = X_alpha x / sqrt(d) are drawn directly from
/// N(0, X_alpha X_alpha^T / d) through a Cholesky factor; a singular Gram
/// matrix falls back to drawing x. `samples` counts center draws (both
/// members of a pair) and must be >= 1000. Block b of 4096 pairs uses the
/// stream seed.child(b).
SignedWeightEstimate conditional_star_sw_mc(const LatentMatrix& x_alpha, const Calibration& cal,
                                            std::int64_t samples, const StreamSeed& seed,
                                            unsigned threads = 1);

/// Two-leaf conditional signed weight without sampling:
///
///   (Phi(a_1) - p)(Phi(a_2) - p) + (1 / 2pi) int_0^{asin rho}
///       exp(-(a_1^2 - 2 a_1 a_2 sin t + a_2^2) / (2 cos^2 t)) dt,
///
/// where a_u = tau / sigma_u and rho is the correlation of the 2x2 Gram
/// matrix <x_u, x_v> / d. The integral is the bivariate normal CDF minus its
/// independent part, so the rank-one case |rho| = 1 is covered. Throws for
/// a row count other than two, a zero variance or a Gram matrix that is not
/// positive semidefinite.
SignedWeightEstimate conditional_star_sw_exact2(const LatentMatrix& x_alpha,
                                                const Calibration& cal);

struct ScalingOptions {
  int alpha_size = 2;
  std::vector<int> d_values{64, 256, 1024};
  double p = 0.3;
  double rho = 3.0;
  int draws = 50;
  std::int64_t mc_samples = 1'000'000;  // per draw, for alpha_size 3 and 4
  double min_step_ratio = 2.5;
  bool sigma_hat_density = true;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

enum class VerificationStatus { kPass, kFail, kInconclusive };

std::string_view status_name(VerificationStatus status);

struct ScalingPoint {
  int d = 0;
  double mean_residual = 0.0;
  double residual_se = 0.0;     // spread of the residual across latent draws
  double estimate_error = 0.0;  // mean per-draw error of the signed weight
  double mean_abs_lambda = 0.0;
  double fitted_constant = 0.0;  // C with residual = (C rho |alpha| / sqrt(d))^(ell + 1)
  int rejection_attempts = 0;
};

struct ScalingReport {
  ScalingOptions options;
  EstimateMethod method = EstimateMethod::kExactBivariate;
  std::vector<ScalingPoint> points;
  std::vector<double> step_ratios;  // residual(d_i) / residual(d_{i+1})
  double slope = 0.0;               // log-log slope of residual against d
  double slope_limit = 0.0;         // -(ell + 1) / 2 + 1/2
  double fitted_constant = 0.0;     // max over the grid
  VerificationStatus status = VerificationStatus::kInconclusive;
};

/// Samples leaf latents in S_rho, compares the conditional signed weight
/// (exact for two leaves, Monte Carlo otherwise) with leading_term_lambda
/// and summarizes how the mean residual scales with d.
///
/// Status is inconclusive when an estimate error exceeds half the mean
/// residual at some d; otherwise pass requires slope <= slope_limit and
/// every step ratio >= min_step_ratio.
ScalingReport verify_remainder_scaling(const ScalingOptions& options);

nlohmann::json to_json(const ScalingReport& report);

enum class LeafMode {
  kSampled,   // leaf projections drawn given the center
  kAnalytic,  // leaves integrated out: (Phi(tau / s) - p)^ell given the center
};

/// E[SW(K_{1,ell})] with the center and all leaves random. Given the center
/// norm s = |x| / sqrt(d), the leaf projections are i.i.d. N(0, s^2); d s^2
/// is drawn as a chi-square variate. Block b of 4096 trials uses
/// seed.child(b).
SignedWeightEstimate unconditional_star_sw_mc(int ell, double p, int d, std::int64_t trials,
                                              const StreamSeed& seed, unsigned threads = 1,
                                              LeafMode mode = LeafMode::kSampled);

struct StarOptions {
  int ell = 2;
  double p = 0.5;
  std::vector<int> d_values{100, 400};
  std::int64_t trials = 10'000'000;
  LeafMode mode = LeafMode::kSampled;
  double min_step_ratio = 2.5;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

struct StarPoint {
  int d = 0;
  SignedWeightEstimate estimate;
  double fitted_constant = 0.0;  // C with |E| = (C ell / d)^(ell / 2)
};

struct StarReport {
  StarOptions options;
  std::vector<StarPoint> points;
  std::vector<double> step_ratios;  // |E(d_i)| / |E(d_{i+1})|
  double fitted_constant = 0.0;     // max over the grid
  VerificationStatus status = VerificationStatus::kInconclusive;
};

/// Runs unconditional_star_sw_mc over the d grid (stream seed.child(i) for
/// d_i). A step passes when |E(d_{i+1})| <= |E(d_i)| / min_step_ratio
/// within three combined standard errors. The report is inconclusive when
/// the first estimate is within three standard errors of zero, because the
/// decay is then unresolved; otherwise it passes iff every step passes.
StarReport verify_star_decay(const StarOptions& options);

nlohmann::json to_json(const StarReport& report);

LeafMode parse_leaf_mode(std::string_view name);
std::string_view leaf_mode_name(LeafMode mode);

struct LeafZeroRow {
  std::string variant;  // "unconditional" or "s-rho"
  double estimate = 0.0;
  double std_error = 0.0;
  double z_score = 0.0;
  bool within_4_sigma = false;
};

struct LeafZeroReport {
  bool pattern_has_leaf = false;
  int d = 0;
  double rho = 0.0;
  std::int64_t trials = 0;
  std::vector<LeafZeroRow> rows;
};

/// Monte Carlo of E[SW(pattern)] at p = 1/2 (tau = 0), once with
/// unconditional latents and once with row latents conditioned on S_rho.
/// Only the vertices touched by the pattern are sampled. The pattern must
/// fit inside an n x m matrix; patterns without a leaf are accepted so the
/// contrast case can be run, and `pattern_has_leaf` records which case it
/// was.
LeafZeroReport leaf_zero_check(const PatternGraph& pattern, const ModelParams& params,
                               std::int64_t trials, double rho, const StreamSeed& seed,
                               unsigned threads = 1);

nlohmann::json to_json(const LeafZeroReport& report);

}  // namespace maskrgg
