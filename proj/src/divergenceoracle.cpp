#include "maskrgg/divergenceoracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

#include "maskrgg/numerics.hpp"
#include "maskrgg/parallel.hpp"

namespace maskrgg {

namespace {

constexpr std::int64_t kBlockSize = 4096;

void check_outcome_bits(int bits) {
  if (bits < 1 || bits > kMaxOutcomeBits) {
    throw std::invalid_argument("outcome space limited to 14 bits");
  }
}

std::vector<double> bernoulli_product(int bits, const std::vector<double>& p_of_bit) {
  std::vector<double> out(std::size_t{1} << bits);
  for (std::size_t x = 0; x < out.size(); ++x) {
    double prob = 1.0;
    for (int b = 0; b < bits; ++b) prob *= ((x >> b) & 1U) ? p_of_bit[b] : 1.0 - p_of_bit[b];
    out[x] = prob;
  }
  return out;
}

std::uint32_t pack(const BitMatrix& matrix, int offset) {
  std::uint32_t out = 0;
  const auto data = matrix.data();
  for (std::size_t k = 0; k < data.size(); ++k) out |= static_cast<std::uint32_t>(data[k]) << (k + offset);
  return out;
}

void check_same_space(const OutcomeDistribution& a, const OutcomeDistribution& b) {
  if (a.n != b.n || a.m != b.m || a.joint_mask != b.joint_mask ||
      a.outcomes() != b.outcomes()) {
    throw std::invalid_argument("outcome distributions live on different spaces");
  }
}

}  // namespace

OutcomeDistribution null_distribution(int n, int m, double p) {
  if (n < 1 || m < 1) throw std::invalid_argument("null_distribution: n and m must be >= 1");
  check_outcome_bits(n * m);
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("null_distribution: p must lie in [0, 1]");
  OutcomeDistribution out;
  out.n = n;
  out.m = m;
  out.probabilities = bernoulli_product(n * m, std::vector<double>(n * m, p));
  return out;
}

OutcomeDistribution joint_null_distribution(int n, int m, double p, double q) {
  if (n < 1 || m < 1) throw std::invalid_argument("joint_null_distribution: n and m must be >= 1");
  check_outcome_bits(2 * n * m);
  std::vector<double> p_of_bit(2 * n * m, p);
  std::fill(p_of_bit.begin() + n * m, p_of_bit.end(), q);
  OutcomeDistribution out;
  out.n = n;
  out.m = m;
  out.joint_mask = true;
  out.probabilities = bernoulli_product(2 * n * m, p_of_bit);
  return out;
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "unknown-mask") return ModelKind::kUnknownMask;
  if (name == "known-mask-averaged") return ModelKind::kKnownMaskAveraged;
  if (name == "pure-rgg") return ModelKind::kPureRgg;
  throw std::invalid_argument("unknown model kind: " + std::string(name));
}

std::string_view model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kUnknownMask:
      return "unknown-mask";
    case ModelKind::kKnownMaskAveraged:
      return "known-mask-averaged";
    case ModelKind::kPureRgg:
      return "pure-rgg";
  }
  return "unknown";
}

OutcomeDistribution model_distribution_mc(const ModelParams& params, ModelKind kind,
                                          std::int64_t trials, const StreamSeed& seed,
                                          unsigned threads) {
  params.validate();
  const bool joint = kind == ModelKind::kKnownMaskAveraged;
  const int bits = (joint ? 2 : 1) * params.n * params.m;
  check_outcome_bits(bits);
  if (trials < 100'000) throw std::invalid_argument("model_distribution_mc: trials must be >= 1e5");
  const Calibration cal = calibrate(params.p, params.d);

  std::vector<std::uint16_t> outcome(static_cast<std::size_t>(trials));
  const std::int64_t blocks = (trials + kBlockSize - 1) / kBlockSize;
  parallel_for(static_cast<std::size_t>(blocks), threads, [&](std::size_t b) {
    Rng rng = seed.child(b).rng();
    const std::int64_t begin = static_cast<std::int64_t>(b) * kBlockSize;
    const std::int64_t end = std::min(trials, begin + kBlockSize);
    for (std::int64_t t = begin; t < end; ++t) {
      std::uint32_t x;
      if (kind == ModelKind::kPureRgg) {
        x = pack(sample_rgg_adjacency(params, cal, rng), 0);
      } else {
        const ObservedSample s = sample_masked_adjacency(params, cal, rng);
        x = pack(s.observed, 0);
        if (joint) x |= pack(s.mask, params.n * params.m);
      }
      outcome[t] = static_cast<std::uint16_t>(x);
    }
  });

  OutcomeDistribution out;
  out.n = params.n;
  out.m = params.m;
  out.joint_mask = joint;
  out.provenance = OutcomeDistribution::Provenance::kMonteCarlo;
  out.samples = trials;
  out.counts.assign(std::size_t{1} << bits, 0);
  for (auto x : outcome) ++out.counts[x];
  const auto total = static_cast<double>(trials);
  out.probabilities.resize(out.counts.size());
  out.std_errors.resize(out.counts.size());
  for (std::size_t x = 0; x < out.counts.size(); ++x) {
    const double f = static_cast<double>(out.counts[x]) / total;
    out.probabilities[x] = f;
    out.std_errors[x] = std::sqrt(f * (1.0 - f) / total);
  }
  return out;
}

double tv(const OutcomeDistribution& a, const OutcomeDistribution& b) {
  check_same_space(a, b);
  CompensatedSum sum;
  for (std::size_t x = 0; x < a.outcomes(); ++x) {
    sum.add(std::fabs(a.probabilities[x] - b.probabilities[x]));
  }
  return std::min(1.0, 0.5 * sum.value());
}

double chi2(const OutcomeDistribution& a, const OutcomeDistribution& b) {
  check_same_space(a, b);
  CompensatedSum sum;
  for (std::size_t x = 0; x < a.outcomes(); ++x) {
    if (a.probabilities[x] == 0.0) continue;
    if (!(b.probabilities[x] > 0.0)) {
      throw std::invalid_argument("chi2: reference vanishes where the other law has mass");
    }
    sum.add(a.probabilities[x] * a.probabilities[x] / b.probabilities[x]);
  }
  return sum.value() - 1.0;
}

Chi2Estimate chi2_estimate(const OutcomeDistribution& a, const OutcomeDistribution& b) {
  if (a.provenance != OutcomeDistribution::Provenance::kMonteCarlo || a.samples < 2) {
    throw std::invalid_argument("chi2_estimate: first argument must be a Monte Carlo law");
  }
  Chi2Estimate out;
  out.value = chi2(a, b);
  const auto n = static_cast<double>(a.samples);
  CompensatedSum unbiased;
  CompensatedSum mean_g;
  CompensatedSum mean_g2;
  for (std::size_t x = 0; x < a.outcomes(); ++x) {
    const auto c = static_cast<double>(a.counts[x]);
    if (c == 0.0) continue;
    unbiased.add(c * (c - 1.0) / (n * (n - 1.0) * b.probabilities[x]));
    const double f = a.probabilities[x];
    const double g = 2.0 * f / b.probabilities[x];
    mean_g.add(f * g);
    mean_g2.add(f * g * g);
  }
  out.unbiased = unbiased.value() - 1.0;
  const double var = mean_g2.value() - mean_g.value() * mean_g.value();
  out.std_error = std::sqrt(std::max(var, 0.0) / n);
  return out;
}

namespace {

// Per-draw signed weights of every pattern: sw[alpha] = prod_{e in alpha} (W_e - p).
void pattern_products(const BitMatrix& w, double p, std::vector<double>& sw) {
  const auto data = w.data();
  sw[0] = 1.0;
  for (std::size_t alpha = 1; alpha < sw.size(); ++alpha) {
    const int low = std::countr_zero(alpha);
    sw[alpha] = sw[alpha & (alpha - 1)] * (static_cast<double>(data[low]) - p);
  }
}

BitMatrix draw_rgg(const ModelParams& params, const Calibration& cal, double rho, Rng& rng) {
  if (rho <= 0.0) return sample_rgg_adjacency(params, cal, rng);
  const LatentMatrix right = sample_latents_in_s_rho(params.n, params.d, rho, rng);
  const LatentMatrix left = sample_latents(params.m, params.d, rng);
  return threshold_latents(right, left, cal);
}

void check_pattern_grid(const ModelParams& params) {
  params.validate();
  if (params.n * params.m > kMaxPatternEntries) {
    throw std::invalid_argument("pattern enumeration limited to n m <= 9");
  }
}

double pattern_factor(int size, double p, double q, MaskMode mode) {
  const double q_power = mode == MaskMode::kUnknown ? 2.0 * size : static_cast<double>(size);
  return std::pow(q, q_power) / std::pow(p * (1.0 - p), size);
}

// Replays the streams of estimate_pattern_weights and returns the standard
// error of sum_alpha coefficient[alpha] * SW(alpha) per draw, for each
// coefficient vector.
std::vector<double> replay_linear_se(const PatternWeights& weights,
                                     const std::vector<std::vector<double>>& coefficients,
                                     unsigned threads) {
  const ModelParams& params = weights.params;
  const Calibration cal = calibrate(params.p, params.d);
  const StreamSeed root(weights.seed);
  const std::int64_t trials = weights.trials;
  const std::int64_t blocks = (trials + kBlockSize - 1) / kBlockSize;
  const std::size_t k = coefficients.size();
  std::vector<std::vector<double>> sums(static_cast<std::size_t>(blocks), std::vector<double>(2 * k));
  parallel_for(static_cast<std::size_t>(blocks), threads, [&](std::size_t b) {
    Rng rng = root.child(b).rng();
    std::vector<double> sw(weights.patterns());
    std::vector<CompensatedSum> acc(2 * k);
    const std::int64_t begin = static_cast<std::int64_t>(b) * kBlockSize;
    const std::int64_t end = std::min(trials, begin + kBlockSize);
    for (std::int64_t t = begin; t < end; ++t) {
      pattern_products(draw_rgg(params, cal, weights.rho, rng), params.p, sw);
      for (std::size_t c = 0; c < k; ++c) {
        double y = 0.0;
        for (std::size_t alpha = 1; alpha < sw.size(); ++alpha) y += coefficients[c][alpha] * sw[alpha];
        acc[2 * c].add(y);
        acc[2 * c + 1].add(y * y);
      }
    }
    for (std::size_t j = 0; j < 2 * k; ++j) sums[b][j] = acc[j].value();
  });
  std::vector<double> out(k);
  const auto n = static_cast<double>(trials);
  for (std::size_t c = 0; c < k; ++c) {
    CompensatedSum s;
    CompensatedSum s2;
    for (const auto& block : sums) {
      s.add(block[2 * c]);
      s2.add(block[2 * c + 1]);
    }
    const double mean = s.value() / n;
    const double var = std::max(0.0, (s2.value() - n * mean * mean) / (n - 1.0));
    out[c] = std::sqrt(var / n);
  }
  return out;
}

Chi2ViaWeights combine(const PatternWeights& weights, MaskMode mode,
                       const std::vector<PatternTerm>& terms, double se) {
  Chi2ViaWeights out;
  out.mode = mode;
  out.std_error = se;
  CompensatedSum value;
  CompensatedSum unbiased;
  double largest = 0.0;
  for (const auto& t : terms) {
    const double term = mode == MaskMode::kUnknown ? t.term_unknown : t.term_known;
    value.add(term);
    const double factor = pattern_factor(t.size, weights.params.p, weights.params.q, mode);
    unbiased.add(factor * (t.mean * t.mean - t.std_error * t.std_error));
    largest = std::max(largest, term);
  }
  out.value = value.value();
  out.unbiased = unbiased.value();
  // Dominant terms (within a factor 10 of the largest) must be resolved to
  // 30% relative error: the relative error of mean^2 is 2 se / |mean|.
  for (const auto& t : terms) {
    const double term = mode == MaskMode::kUnknown ? t.term_unknown : t.term_known;
    if (largest > 0.0 && term >= 0.1 * largest && 2.0 * t.std_error > 0.3 * std::fabs(t.mean)) {
      out.inconclusive = true;
    }
  }
  return out;
}

}  // namespace

PatternWeights estimate_pattern_weights(const ModelParams& params, std::int64_t trials,
                                        std::uint64_t seed, unsigned threads, double rho) {
  check_pattern_grid(params);
  if (trials < 100'000) throw std::invalid_argument("estimate_pattern_weights: trials must be >= 1e5");
  const Calibration cal = calibrate(params.p, params.d);
  const std::size_t patterns = std::size_t{1} << (params.n * params.m);
  const StreamSeed root(seed);
  const std::int64_t blocks = (trials + kBlockSize - 1) / kBlockSize;

  std::vector<std::vector<double>> block_sum(static_cast<std::size_t>(blocks));
  std::vector<std::vector<double>> block_sq(static_cast<std::size_t>(blocks));
  parallel_for(static_cast<std::size_t>(blocks), threads, [&](std::size_t b) {
    Rng rng = root.child(b).rng();
    std::vector<double> sw(patterns);
    std::vector<CompensatedSum> sum(patterns);
    std::vector<CompensatedSum> sq(patterns);
    const std::int64_t begin = static_cast<std::int64_t>(b) * kBlockSize;
    const std::int64_t end = std::min(trials, begin + kBlockSize);
    for (std::int64_t t = begin; t < end; ++t) {
      pattern_products(draw_rgg(params, cal, rho, rng), params.p, sw);
      for (std::size_t alpha = 1; alpha < patterns; ++alpha) {
        sum[alpha].add(sw[alpha]);
        sq[alpha].add(sw[alpha] * sw[alpha]);
      }
    }
    block_sum[b].resize(patterns);
    block_sq[b].resize(patterns);
    for (std::size_t alpha = 0; alpha < patterns; ++alpha) {
      block_sum[b][alpha] = sum[alpha].value();
      block_sq[b][alpha] = sq[alpha].value();
    }
  });

  PatternWeights out;
  out.params = params;
  out.trials = trials;
  out.seed = seed;
  out.rho = rho;
  out.mean.assign(patterns, 0.0);
  out.std_error.assign(patterns, 0.0);
  out.variance.assign(patterns, 0.0);
  const auto n = static_cast<double>(trials);
  for (std::size_t alpha = 1; alpha < patterns; ++alpha) {
    CompensatedSum s;
    CompensatedSum s2;
    for (std::int64_t b = 0; b < blocks; ++b) {
      s.add(block_sum[b][alpha]);
      s2.add(block_sq[b][alpha]);
    }
    const double mean = s.value() / n;
    const double var = std::max(0.0, (s2.value() - n * mean * mean) / (n - 1.0));
    out.mean[alpha] = mean;
    out.variance[alpha] = var;
    out.std_error[alpha] = std::sqrt(var / n);
  }
  return out;
}

MaskMode parse_mask_mode(std::string_view name) {
  if (name == "unknown") return MaskMode::kUnknown;
  if (name == "known") return MaskMode::kKnown;
  throw std::invalid_argument("unknown mask mode: " + std::string(name));
}

std::string_view mask_mode_name(MaskMode mode) {
  return mode == MaskMode::kUnknown ? "unknown" : "known";
}

ContrastReport known_vs_unknown_contrast(const ModelParams& params, std::int64_t trials,
                                         std::uint64_t seed, unsigned threads) {
  ContrastReport report;
  report.weights = estimate_pattern_weights(params, trials, seed, threads);
  const PatternWeights& w = report.weights;

  std::vector<std::vector<double>> gradient(2, std::vector<double>(w.patterns(), 0.0));
  report.known_dominates = true;
  for (std::size_t alpha = 1; alpha < w.patterns(); ++alpha) {
    PatternTerm t;
    t.pattern = static_cast<std::uint32_t>(alpha);
    t.size = std::popcount(alpha);
    t.mean = w.mean[alpha];
    t.std_error = w.std_error[alpha];
    const double f_unknown = pattern_factor(t.size, params.p, params.q, MaskMode::kUnknown);
    const double f_known = pattern_factor(t.size, params.p, params.q, MaskMode::kKnown);
    t.term_unknown = f_unknown * t.mean * t.mean;
    t.term_known = f_known * t.mean * t.mean;
    report.known_dominates = report.known_dominates && t.term_known >= t.term_unknown;
    gradient[0][alpha] = 2.0 * f_unknown * t.mean;
    gradient[1][alpha] = 2.0 * f_known * t.mean;
    report.terms.push_back(t);
  }
  const std::vector<double> se = replay_linear_se(w, gradient, threads);
  report.unknown = combine(w, MaskMode::kUnknown, report.terms, se[0]);
  report.known = combine(w, MaskMode::kKnown, report.terms, se[1]);
  return report;
}

Chi2ViaWeights chi2_via_signed_weights(const ModelParams& params, MaskMode mode,
                                       std::int64_t trials, std::uint64_t seed,
                                       unsigned threads) {
  const ContrastReport report = known_vs_unknown_contrast(params, trials, seed, threads);
  return mode == MaskMode::kUnknown ? report.unknown : report.known;
}

namespace {

Agreement agree(const Chi2Estimate& direct, const Chi2ViaWeights& via) {
  Agreement a;
  a.direct = direct.unbiased;
  a.direct_se = direct.std_error;
  a.via_weights = via.unbiased;
  a.via_weights_se = via.std_error;
  const double combined = std::hypot(direct.std_error, via.std_error);
  const double diff = a.direct - a.via_weights;
  a.z_score = combined > 0.0 ? diff / combined : (diff == 0.0 ? 0.0 : INFINITY);
  a.within_3_sigma = std::fabs(diff) <= 3.0 * combined;
  return a;
}

}  // namespace

OracleReport run_chi2_oracle(const ModelParams& params, const OracleOptions& options) {
  check_pattern_grid(params);
  OracleReport report;
  report.params = params;
  report.options = options;
  const StreamSeed root(options.seed);

  const OutcomeDistribution null = null_distribution(params.n, params.m, params.p);
  const OutcomeDistribution unknown = model_distribution_mc(
      params, ModelKind::kUnknownMask, options.outcome_trials, root.child(0), options.threads);
  report.tv_unknown = tv(unknown, null);
  report.direct_unknown = chi2_estimate(unknown, null);

  report.has_known = 2 * params.n * params.m <= kMaxOutcomeBits;
  if (report.has_known) {
    const OutcomeDistribution joint_null =
        joint_null_distribution(params.n, params.m, params.p, params.q);
    const OutcomeDistribution joint = model_distribution_mc(
        params, ModelKind::kKnownMaskAveraged, options.outcome_trials, root.child(1),
        options.threads);
    report.direct_known = chi2_estimate(joint, joint_null);
  }

  report.contrast = known_vs_unknown_contrast(params, options.weight_trials,
                                              mix64(options.seed ^ 2U), options.threads);
  report.unknown_agreement = agree(report.direct_unknown, report.contrast.unknown);
  if (report.has_known) report.known_agreement = agree(report.direct_known, report.contrast.known);
  return report;
}

namespace {

nlohmann::json params_json(const ModelParams& p) {
  return {{"n", p.n}, {"m", p.m}, {"p", p.p}, {"q", p.q}, {"d", p.d}};
}

nlohmann::json chi2_json(const Chi2ViaWeights& c) {
  return {{"mode", mask_mode_name(c.mode)},
          {"value", c.value},
          {"unbiased", c.unbiased},
          {"std_error", c.std_error},
          {"inconclusive", c.inconclusive}};
}

nlohmann::json estimate_json(const Chi2Estimate& c) {
  return {{"value", c.value}, {"unbiased", c.unbiased}, {"std_error", c.std_error}};
}

nlohmann::json agreement_json(const Agreement& a) {
  return {{"direct", a.direct},
          {"direct_se", a.direct_se},
          {"via_weights", a.via_weights},
          {"via_weights_se", a.via_weights_se},
          {"z_score", a.z_score},
          {"within_3_sigma", a.within_3_sigma}};
}

}  // namespace

nlohmann::json to_json(const ContrastReport& report) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : report.terms) {
    terms.push_back({{"pattern", t.pattern},
                     {"size", t.size},
                     {"mean", t.mean},
                     {"std_error", t.std_error},
                     {"term_unknown", t.term_unknown},
                     {"term_known", t.term_known}});
  }
  return {{"params", params_json(report.weights.params)},
          {"trials", report.weights.trials},
          {"seed", report.weights.seed},
          {"unknown", chi2_json(report.unknown)},
          {"known", chi2_json(report.known)},
          {"known_dominates", report.known_dominates},
          {"patterns", terms}};
}

nlohmann::json to_json(const OracleReport& report) {
  nlohmann::json out = {{"params", params_json(report.params)},
                        {"seed", report.options.seed},
                        {"outcome_trials", report.options.outcome_trials},
                        {"weight_trials", report.options.weight_trials},
                        {"tv_unknown", report.tv_unknown},
                        {"direct_unknown", estimate_json(report.direct_unknown)},
                        {"unknown_agreement", agreement_json(report.unknown_agreement)},
                        {"signed_weights", to_json(report.contrast)}};
  if (report.has_known) {
    out["direct_known"] = estimate_json(report.direct_known);
    out["known_agreement"] = agreement_json(report.known_agreement);
  }
  return out;
}

}  // namespace maskrgg
