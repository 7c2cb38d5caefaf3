#include "maskrgg/gaussmodel.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include <boost/math/tools/roots.hpp>

#include "maskrgg/numerics.hpp"

namespace maskrgg {

void ModelParams::validate() const {
  if (n < 1 || m < 1) throw std::invalid_argument("ModelParams: n and m must be >= 1");
  if (d < 1) throw std::invalid_argument("ModelParams: d must be >= 1");
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("ModelParams: p must lie in (0, 1)");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("ModelParams: q must lie in [0, 1]");
}

namespace {

constexpr double kQuadRelTol = 1e-10;
constexpr int kQuadMaxNodes = 2048;
// The chi log-density has curvature <= -1, so mass beyond 12 units from the
// mode is below exp(-72).
constexpr double kChiHalfWidth = 12.0;

// P(<x,y>/sqrt(d) <= -|t|), integrating Phi(-|t| sqrt(d) / r) against the
// chi(d) density of r = |y|. The density is evaluated relative to its mode
// and normalized numerically over the same window.
double lower_tail(double abs_t, int d) {
  const double dd = static_cast<double>(d);
  const double mode = std::sqrt(std::max(dd - 1.0, 0.0));
  const double lo = std::max(0.0, mode - kChiHalfWidth);
  const double hi = mode + kChiHalfWidth;
  auto log_density = [=](double r) {
    if (d == 1) return -0.5 * r * r;
    return (dd - 1.0) * std::log(r / mode) - 0.5 * (r - mode) * (r + mode);
  };
  auto density = [=](double r) { return r <= 0.0 ? (d == 1 ? 1.0 : 0.0) : std::exp(log_density(r)); };
  const double scaled = abs_t * std::sqrt(dd);
  auto weighted = [=](double r) {
    if (r <= 0.0) return 0.0;
    return normal_cdf(-scaled / r) * std::exp(log_density(r));
  };
  const auto norm = integrate_adaptive(density, lo, hi, 0.0, kQuadRelTol, kQuadMaxNodes);
  const auto tail = integrate_adaptive(weighted, lo, hi, 1e-14 * norm.value, kQuadRelTol,
                                       kQuadMaxNodes);
  return tail.value / norm.value;
}

}  // namespace

double inner_product_cdf(double t, int d) {
  if (d < 1) throw std::invalid_argument("inner_product_cdf: d must be >= 1");
  if (std::isnan(t)) throw std::invalid_argument("inner_product_cdf: t is NaN");
  if (t == std::numeric_limits<double>::infinity()) return 1.0;
  if (t == -std::numeric_limits<double>::infinity()) return 0.0;
  if (t == 0.0) return 0.5;
  const double tail = lower_tail(std::fabs(t), d);
  return t < 0.0 ? tail : 1.0 - tail;
}

double compute_tau(double p, int d) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("compute_tau: p must lie in (0, 1)");
  if (d < 1) throw std::invalid_argument("compute_tau: d must be >= 1");
  if (p == 0.5) return 0.0;
  if (p > 0.5) return -compute_tau(1.0 - p, d);

  auto excess = [d, p](double t) { return inner_product_cdf(t, d) - p; };
  double lo = std::min(-1.0, 2.0 * normal_quantile(p));
  while (excess(lo) > 0.0) lo *= 2.0;
  const double hi = 0.0;

  std::uintmax_t iterations = 200;
  const auto bracket = boost::math::tools::toms748_solve(
      excess, lo, hi, excess(lo), 0.5 - p, boost::math::tools::eps_tolerance<double>(50),
      iterations);
  const double tau = 0.5 * (bracket.first + bracket.second);
  if (std::fabs(excess(tau)) > 1e-9) {
    std::ostringstream msg;
    msg << "compute_tau: root finding did not converge for p=" << p << ", d=" << d;
    throw std::runtime_error(msg.str());
  }
  return tau;
}

double reference_variance(double p, int d, double tau) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("reference_variance: p must lie in (0, 1)");
  }
  if (d < 1) throw std::invalid_argument("reference_variance: d must be >= 1");
  if (p == 0.5) return 1.0;
  return tau / normal_quantile(p);
}

Calibration calibrate(double p, int d) {
  const double tau = compute_tau(p, d);
  return {tau, reference_variance(p, d, tau), p, d};
}

LatentMatrix sample_latents(int count, int d, Rng& rng) {
  if (count < 1 || d < 1) throw std::invalid_argument("sample_latents: count and d must be >= 1");
  LatentMatrix out(count, d);
  for (int i = 0; i < count; ++i) {
    for (int j = 0; j < d; ++j) out(i, j) = rng.normal();
  }
  return out;
}

BitMatrix threshold_latents(const LatentMatrix& right, const LatentMatrix& left,
                            const Calibration& cal) {
  if (right.dim() != left.dim()) {
    throw std::invalid_argument("threshold_latents: latent dimensions differ");
  }
  const Eigen::MatrixXd inner = right.values() * left.values().transpose();
  const double scale = 1.0 / std::sqrt(static_cast<double>(right.dim()));
  BitMatrix out(static_cast<int>(right.rows()), static_cast<int>(left.rows()));
  for (int u = 0; u < out.rows(); ++u) {
    for (int v = 0; v < out.cols(); ++v) out.set(u, v, inner(u, v) * scale <= cal.tau);
  }
  return out;
}

namespace {

void check_calibration(const ModelParams& params, const Calibration& cal) {
  params.validate();
  if (cal.p != params.p || cal.d != params.d) {
    throw std::invalid_argument("calibration was computed for a different (p, d)");
  }
}

}  // namespace

RggSample sample_rgg(const ModelParams& params, const Calibration& cal, Rng& rng) {
  check_calibration(params, cal);
  RggSample out;
  out.right = sample_latents(params.n, params.d, rng);
  out.left = sample_latents(params.m, params.d, rng);
  out.adjacency = threshold_latents(out.right, out.left, cal);
  return out;
}

BitMatrix sample_rgg_adjacency(const ModelParams& params, const Calibration& cal, Rng& rng) {
  check_calibration(params, cal);
  const int k = std::min(params.n, params.m);
  const int wide = std::max(params.n, params.m);
  if (params.d <= k) return sample_rgg(params, cal, rng).adjacency;

  // Bartlett factor: T lower triangular, T_ii^2 ~ chi2(d - i), T_ij ~ N(0,1).
  Eigen::MatrixXd bartlett = Eigen::MatrixXd::Zero(k, k);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < i; ++j) bartlett(i, j) = rng.normal();
    bartlett(i, i) = std::sqrt(rng.chi_squared(static_cast<double>(params.d - i)));
  }
  Eigen::MatrixXd noise(k, wide);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < wide; ++j) noise(i, j) = rng.normal();
  }
  const Eigen::MatrixXd cross = bartlett.triangularView<Eigen::Lower>() * noise;
  const double scale = 1.0 / std::sqrt(static_cast<double>(params.d));
  BitMatrix out(params.n, params.m);
  const bool rows_small = params.n <= params.m;
  for (int u = 0; u < params.n; ++u) {
    for (int v = 0; v < params.m; ++v) {
      const double inner = rows_small ? cross(u, v) : cross(v, u);
      out.set(u, v, inner * scale <= cal.tau);
    }
  }
  return out;
}

BitMatrix sample_er(int n, int m, double p, Rng& rng) {
  if (n < 0 || m < 0) throw std::invalid_argument("sample_er: negative shape");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("sample_er: p must lie in [0, 1]");
  BitMatrix out(n, m);
  for (auto& b : out.data()) b = rng.bernoulli(p) ? 1 : 0;
  return out;
}

BitMatrix apply_mask(const BitMatrix& w, const BitMatrix& mask, const BitMatrix& fill) {
  if (!w.same_shape(mask) || !w.same_shape(fill)) {
    throw std::invalid_argument("apply_mask: shape mismatch");
  }
  BitMatrix out(w.rows(), w.cols());
  const auto wd = w.data();
  const auto md = mask.data();
  const auto fd = fill.data();
  auto od = out.data();
  for (std::size_t k = 0; k < od.size(); ++k) od[k] = md[k] ? wd[k] : fd[k];
  return out;
}

MaskedSample sample_unknown_mask_model(const ModelParams& params, const Calibration& cal,
                                       Rng& rng) {
  MaskedSample out;
  RggSample rgg = sample_rgg(params, cal, rng);
  out.mask = sample_er(params.n, params.m, params.q, rng);
  out.fill = sample_er(params.n, params.m, params.p, rng);
  out.observed = apply_mask(rgg.adjacency, out.mask, out.fill);
  out.rgg = std::move(rgg.adjacency);
  out.right = std::move(rgg.right);
  out.left = std::move(rgg.left);
  return out;
}

ObservedSample sample_masked_adjacency(const ModelParams& params, const Calibration& cal,
                                       Rng& rng) {
  const BitMatrix rgg = sample_rgg_adjacency(params, cal, rng);
  BitMatrix mask = sample_er(params.n, params.m, params.q, rng);
  const BitMatrix fill = sample_er(params.n, params.m, params.p, rng);
  BitMatrix observed = apply_mask(rgg, mask, fill);
  return {std::move(observed), std::move(mask)};
}

bool check_s_rho(const LatentMatrix& latents, double rho) {
  const Eigen::MatrixXd gram = latents.normalized_gram();
  const double bound = rho / std::sqrt(static_cast<double>(latents.dim()));
  for (Eigen::Index u = 0; u < gram.rows(); ++u) {
    for (Eigen::Index v = u; v < gram.cols(); ++v) {
      const double target = u == v ? 1.0 : 0.0;
      if (!(std::fabs(gram(u, v) - target) <= bound)) return false;
    }
  }
  return true;
}

LatentMatrix sample_latents_in_s_rho(int count, int d, double rho, Rng& rng, int max_attempts,
                                     int* attempts_used) {
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    LatentMatrix candidate = sample_latents(count, d, rng);
    if (check_s_rho(candidate, rho)) {
      if (attempts_used != nullptr) *attempts_used = attempt;
      return candidate;
    }
  }
  std::ostringstream msg;
  msg << "sample_latents_in_s_rho: no draw in S_rho after " << max_attempts
      << " attempts (rho=" << rho << ", count=" << count << ", d=" << d << ")";
  throw RejectionLimitError(msg.str());
}

}  // namespace maskrgg
