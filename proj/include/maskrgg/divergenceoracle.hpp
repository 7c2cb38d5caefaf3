#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "maskrgg/gaussmodel.hpp"
#include "maskrgg/rng.hpp"

namespace maskrgg {

inline constexpr int kMaxOutcomeBits = 14;
inline constexpr int kMaxPatternEntries = 9;

/// Probability vector over 0/1 outcomes of `bits` bits.
///
/// A plain outcome is an n x m matrix with entry (i, j) at bit i * m + j.
/// A joint outcome (joint_mask = true) additionally stores the mask entry
/// (i, j) at bit n * m + i * m + j.
struct OutcomeDistribution {
  enum class Provenance { kExact, kMonteCarlo };

  int n = 0;
  int m = 0;
  bool joint_mask = false;
  Provenance provenance = Provenance::kExact;
  std::int64_t samples = 0;
  std::vector<double> probabilities;
  std::vector<std::int64_t> counts;  // Monte Carlo only
  std::vector<double> std_errors;    // binomial, Monte Carlo only

  [[nodiscard]] int bits() const noexcept { return (joint_mask ? 2 : 1) * n * m; }
  [[nodiscard]] std::size_t outcomes() const noexcept { return probabilities.size(); }
};

/// Exact product Bern(p) law of an n x m matrix. Requires n m <= 14.
OutcomeDistribution null_distribution(int n, int m, double p);

/// Exact law of (mask, M) with mask ~ Bern(q) independent of M ~ Bern(p).
/// Requires 2 n m <= 14.
OutcomeDistribution joint_null_distribution(int n, int m, double p, double q);

enum class ModelKind {
  kUnknownMask,        // law of M
  kKnownMaskAveraged,  // joint law of (mask, M)
  kPureRgg,            // law of W; q is ignored
};

ModelKind parse_model_kind(std::string_view name);
std::string_view model_kind_name(ModelKind kind);

/// Empirical outcome frequencies from `trials` >= 1e5 model draws. Block b
/// of 4096 draws uses seed.child(b).
OutcomeDistribution model_distribution_mc(const ModelParams& params, ModelKind kind,
                                          std::int64_t trials, const StreamSeed& seed,
                                          unsigned threads = 1);

/// Total variation distance 1/2 sum |a - b|.
double tv(const OutcomeDistribution& a, const OutcomeDistribution& b);

/// Chi-square divergence sum a^2 / b - 1. Throws if b vanishes where a does
/// not, or if the outcome spaces differ.
double chi2(const OutcomeDistribution& a, const OutcomeDistribution& b);

struct Chi2Estimate {
  double value = 0.0;      // plug-in
  double unbiased = 0.0;   // bias-corrected for Monte Carlo noise in the estimate
  double std_error = 0.0;  // first-order (delta method)
};

/// chi2(a, b) for Monte Carlo `a` against exact `b`, with the unbiased
/// variant sum c (c - 1) / (N (N - 1) b) - 1 and a delta-method error.
Chi2Estimate chi2_estimate(const OutcomeDistribution& a, const OutcomeDistribution& b);

/// Monte Carlo estimates of E[SW(alpha)] for every nonempty alpha inside the
/// n x m entry grid, all from the same latent draws. Pattern index bits
/// follow the plain outcome layout.
struct PatternWeights {
  ModelParams params;
  std::int64_t trials = 0;
  std::uint64_t seed = 0;
  double rho = 0.0;  // > 0 when row latents were conditioned on S_rho
  std::vector<double> mean;       // indexed by pattern bitmask; entry 0 unused
  std::vector<double> std_error;  // per-pattern standard error of the mean
  std::vector<double> variance;   // per-pattern sample variance of SW

  [[nodiscard]] std::size_t patterns() const noexcept { return mean.size(); }
};

/// Requires n m <= 9 and trials >= 1e5. Block b of 4096 draws uses
/// seed.child(b). rho > 0 conditions row latents on S_rho.
PatternWeights estimate_pattern_weights(const ModelParams& params, std::int64_t trials,
                                        std::uint64_t seed, unsigned threads = 1,
                                        double rho = 0.0);

enum class MaskMode {
  kUnknown,  // weight q^{2|alpha|}
  kKnown,    // weight q^{|alpha|}
};

MaskMode parse_mask_mode(std::string_view name);
std::string_view mask_mode_name(MaskMode mode);

struct PatternTerm {
  std::uint32_t pattern = 0;
  int size = 0;
  double mean = 0.0;
  double std_error = 0.0;
  double term_unknown = 0.0;
  double term_known = 0.0;
};

struct Chi2ViaWeights {
  MaskMode mode = MaskMode::kUnknown;
  double value = 0.0;      // sum of weighted squared means
  double unbiased = 0.0;   // squared means replaced by mean^2 - se^2
  double std_error = 0.0;  // delta method over the shared draws
  bool inconclusive = false;
};

struct ContrastReport {
  PatternWeights weights;
  std::vector<PatternTerm> terms;
  Chi2ViaWeights unknown;
  Chi2ViaWeights known;
  bool known_dominates = false;  // every known term >= its unknown term
};

/// Evaluates both weighting modes on one set of pattern estimates. The
/// delta-method error needs the per-draw gradient combination, so the same
/// streams are replayed once after the means are known.
ContrastReport known_vs_unknown_contrast(const ModelParams& params, std::int64_t trials,
                                         std::uint64_t seed, unsigned threads = 1);

/// One mode of known_vs_unknown_contrast.
Chi2ViaWeights chi2_via_signed_weights(const ModelParams& params, MaskMode mode,
                                       std::int64_t trials, std::uint64_t seed,
                                       unsigned threads = 1);

struct OracleOptions {
  std::int64_t outcome_trials = 2'000'000;
  std::int64_t weight_trials = 1'000'000;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

struct Agreement {
  double direct = 0.0;
  double direct_se = 0.0;
  double via_weights = 0.0;
  double via_weights_se = 0.0;
  double z_score = 0.0;  // (direct - via_weights) / combined se
  bool within_3_sigma = false;
};

struct OracleReport {
  ModelParams params;
  OracleOptions options;
  double tv_unknown = 0.0;
  Chi2Estimate direct_unknown;
  bool has_known = false;  // joint outcome space fits when 2 n m <= 14
  Chi2Estimate direct_known;
  ContrastReport contrast;
  Agreement unknown_agreement;
  Agreement known_agreement;
};

/// Direct chi-square from outcome frequencies against the signed-weight sum,
/// for both mask modes. Uses seed.child(0) for the unknown-mask outcomes,
/// child(1) for the joint outcomes and the raw seed mixed with 2 for the
/// pattern weights.
OracleReport run_chi2_oracle(const ModelParams& params, const OracleOptions& options);

nlohmann::json to_json(const ContrastReport& report);
nlohmann::json to_json(const OracleReport& report);

}  // namespace maskrgg
