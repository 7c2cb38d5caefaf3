#pragma once

#include <stdexcept>

#include "maskrgg/matrix.hpp"
#include "maskrgg/rng.hpp"

namespace maskrgg {

/// Experiment configuration for the masked bipartite Gaussian RGG.
///
/// Rows of every sampled matrix are the vertex set R (size n) and columns the
/// vertex set L (size m). No ordering between n and m is enforced.
struct ModelParams {
  int n = 1;
  int m = 1;
  double p = 0.5;  // edge density, in (0, 1)
  double q = 1.0;  // mask density, in [0, 1]
  int d = 1;       // latent dimension

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

/// Connection threshold and reference spread for a given (p, d).
///
/// tau solves P(<x, y> / sqrt(d) <= tau) = p for independent standard
/// Gaussian x, y in R^d. sigma_hat is the standard deviation for which a
/// centered normal puts mass p below tau; it is exactly 1 when p = 1/2.
struct Calibration {
  double tau = 0.0;
  double sigma_hat = 1.0;
  double p = 0.5;
  int d = 1;
};

/// P(<x, y> / sqrt(d) <= t) for independent x, y ~ N(0, I_d).
///
/// Conditioning on s = |y| / sqrt(d), the inner product is N(0, s^2), so the
/// value is E_s[Phi(t / s)] with d s^2 ~ chi-square(d). The expectation is
/// evaluated by adaptive Gauss-Kronrod over the chi density (relative
/// tolerance 1e-10, at most 2048 nodes). t = +-inf is allowed; NaN throws.
double inner_product_cdf(double t, int d);

/// Root of inner_product_cdf(tau, d) = p. Exactly 0 at p = 1/2 and
/// antisymmetric: compute_tau(1 - p, d) == -compute_tau(p, d).
double compute_tau(double p, int d);

/// tau / Phi^{-1}(p) for p != 1/2, and 1 at p = 1/2.
double reference_variance(double p, int d, double tau);

/// compute_tau followed by reference_variance.
Calibration calibrate(double p, int d);

/// count x d matrix of i.i.d. N(0, 1) entries, filled row by row.
LatentMatrix sample_latents(int count, int d, Rng& rng);

struct RggSample {
  BitMatrix adjacency;  // W, n x m
  LatentMatrix right;   // X_R, n x d (rows of W)
  LatentMatrix left;    // X_L, m x d (columns of W)
};

/// W_{uv} = 1(<x_u, x_v> / sqrt(d) <= tau). Draws X_R then X_L.
RggSample sample_rgg(const ModelParams& params, const Calibration& cal, Rng& rng);

/// Thresholds a latent pair directly (no sampling).
BitMatrix threshold_latents(const LatentMatrix& right, const LatentMatrix& left,
                            const Calibration& cal);

/// Adjacency-only RGG sampler for experiments that never look at latents.
///
/// When d exceeds the smaller side k = min(n, m), the cross Gram matrix is
/// drawn in law as G = T Z with T the Bartlett factor of a Wishart(d, I_k)
/// matrix and Z a k x max(n, m) standard normal matrix, which costs
/// O(k^2 max(n, m)) instead of O(n m d). Otherwise latents are drawn
/// directly. The law of the returned matrix equals that of sample_rgg.
BitMatrix sample_rgg_adjacency(const ModelParams& params, const Calibration& cal, Rng& rng);

/// n x m matrix of i.i.d. Bern(p) entries, row-major draw order.
BitMatrix sample_er(int n, int m, double p, Rng& rng);

/// W where mask = 1, fill where mask = 0. Throws on shape mismatch.
BitMatrix apply_mask(const BitMatrix& w, const BitMatrix& mask, const BitMatrix& fill);

struct MaskedSample {
  BitMatrix observed;  // M = W * mask + fill * (1 - mask)
  BitMatrix mask;
  BitMatrix rgg;       // W
  BitMatrix fill;      // B
  LatentMatrix right;
  LatentMatrix left;
};

/// Unknown-mask model: W via sample_rgg, then mask ~ Bern(q), then fill ~
/// Bern(p), composed with apply_mask. Every piece is returned.
MaskedSample sample_unknown_mask_model(const ModelParams& params, const Calibration& cal,
                                       Rng& rng);

struct ObservedSample {
  BitMatrix observed;
  BitMatrix mask;
};

/// Same law as sample_unknown_mask_model for (observed, mask), built on
/// sample_rgg_adjacency.
ObservedSample sample_masked_adjacency(const ModelParams& params, const Calibration& cal,
                                       Rng& rng);

/// True iff |<x_u, x_v>/d - I_{uv}| <= rho / sqrt(d) for every pair of rows,
/// diagonal included.
bool check_s_rho(const LatentMatrix& latents, double rho);

class RejectionLimitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kDefaultRejectionAttempts = 10000;

/// Rejection sampler for latents conditioned on check_s_rho. Throws
/// RejectionLimitError after `max_attempts` rejected draws.
LatentMatrix sample_latents_in_s_rho(int count, int d, double rho, Rng& rng,
                                     int max_attempts = kDefaultRejectionAttempts,
                                     int* attempts_used = nullptr);

}  // namespace maskrgg
