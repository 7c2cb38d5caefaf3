#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "doctest.h"
#include "maskrgg/gaussmodel.hpp"
#include "maskrgg/numerics.hpp"

using namespace maskrgg;

namespace {

// tau(0.3, d) from an independent 30-digit evaluation of E_v[Phi(t sqrt(d / v))]
// with v ~ chi-square(d).
const std::map<int, double> kFrozenTau03 = {
    {1, -0.24939075037303188},   {2, -0.36120826256878002},  {10, -0.4885315395174079},
    {25, -0.51006595707827566},  {100, -0.52082468297975312}, {400, -0.5235071747132111},
    {1600, -0.52417721878132488}};

// 1e8 Monte Carlo pairs (x, y) in R^2, seed 20261016.
constexpr double kMcF2At1 = 0.87842297;
constexpr double kMcF2At1Se = 3.267966581475078e-05;

std::uint32_t pack2x2(const BitMatrix& m) {
  return m(0, 0) | (m(0, 1) << 1) | (m(1, 0) << 2) | (m(1, 1) << 3);
}

// Pearson two-sample statistic over a shared outcome space.
double two_sample_chi2(const std::vector<double>& a, const std::vector<double>& b) {
  const double na = std::accumulate(a.begin(), a.end(), 0.0);
  const double nb = std::accumulate(b.begin(), b.end(), 0.0);
  double stat = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double total = a[k] + b[k];
    if (total == 0.0) continue;
    const double ea = total * na / (na + nb);
    const double eb = total * nb / (na + nb);
    stat += (a[k] - ea) * (a[k] - ea) / ea + (b[k] - eb) * (b[k] - eb) / eb;
  }
  return stat;
}

double chi2_critical(int dof, double level) {
  return boost::math::quantile(boost::math::complement(boost::math::chi_squared(dof), level));
}

}  // namespace

TEST_SUITE("gaussmodel") {
  TEST_CASE("inner_product_cdf trivial values") {
    for (int d : {1, 2, 17, 1000}) {
      CHECK(inner_product_cdf(0.0, d) == 0.5);
      CHECK(inner_product_cdf(std::numeric_limits<double>::infinity(), d) == 1.0);
      CHECK(inner_product_cdf(-std::numeric_limits<double>::infinity(), d) == 0.0);
    }
    CHECK_THROWS_AS(inner_product_cdf(std::nan(""), 3), std::invalid_argument);
    CHECK_THROWS_AS(inner_product_cdf(0.3, 0), std::invalid_argument);
  }

  TEST_CASE("inner_product_cdf against the Monte Carlo oracle at d = 2") {
    const double f = inner_product_cdf(1.0, 2);
    CHECK(std::fabs(f - kMcF2At1) <= 3.0 * kMcF2At1Se);
    // At d = 2 the inner product is standard Laplace.
    CHECK(std::fabs(f - (1.0 - 0.5 * std::exp(-std::sqrt(2.0)))) <= 1e-9);
  }

  TEST_CASE("inner_product_cdf against high-precision quadrature") {
    CHECK(std::fabs(inner_product_cdf(0.5, 1) - 0.79510589791829947) <= 1e-9);
    CHECK(std::fabs(inner_product_cdf(-0.7, 3) - 0.20073989431125526) <= 1e-9);
  }

  TEST_CASE("compute_tau matches frozen roots") {
    for (const auto& [d, tau] : kFrozenTau03) {
      CAPTURE(d);
      CHECK(std::fabs(compute_tau(0.3, d) - tau) <= 1e-8);
    }
  }

  TEST_CASE("compute_tau symmetric cases") {
    CHECK(compute_tau(0.5, 17) == 0.0);
    for (int d : {1, 10, 100}) {
      CHECK(compute_tau(0.2, d) < compute_tau(0.8, d));
      for (double p : {0.05, 0.3, 0.45}) {
        CHECK(std::fabs(compute_tau(1.0 - p, d) + compute_tau(p, d)) <= 1e-8);
      }
    }
  }

  TEST_CASE("compute_tau root is unique and accurate") {
    for (int d : {1, 3, 50, 2000}) {
      for (double p : {0.01, 0.3, 0.7}) {
        const double tau = compute_tau(p, d);
        CHECK(std::fabs(inner_product_cdf(tau, d) - p) <= 1e-9);
        CHECK(inner_product_cdf(tau - 0.1, d) < p);
        CHECK(inner_product_cdf(tau + 0.1, d) > p);
      }
    }
  }

  TEST_CASE("compute_tau approaches the Gaussian quantile") {
    CHECK(std::fabs(compute_tau(0.3, 10000) - normal_quantile(0.3)) <= 0.05);
  }

  TEST_CASE("compute_tau rejects p outside (0, 1)") {
    for (double p : {0.0, 1.0, -0.1, 1.5}) CHECK_THROWS_AS(compute_tau(p, 5), std::invalid_argument);
  }

  TEST_CASE("reference variance") {
    CHECK(reference_variance(0.5, 9, 0.0) == 1.0);
    CHECK(calibrate(0.5, 123).sigma_hat == 1.0);
    const Calibration big = calibrate(0.3, 10000);
    CHECK(std::fabs(big.sigma_hat - 1.0) <= 0.05);
    const Calibration c = calibrate(0.3, 100);
    CHECK(std::fabs(normal_cdf(c.tau / c.sigma_hat) - 0.3) <= 1e-9);
  }

  TEST_CASE("sigma_hat approaches one as d grows") {
    double previous = 1e9;
    for (int d : {4, 16, 64, 256, 1024}) {
      const double gap = std::fabs(calibrate(0.3, d).sigma_hat - 1.0);
      CHECK(gap < previous);
      CHECK(gap * std::sqrt(static_cast<double>(d)) < 1.0);
      previous = gap;
    }
  }

  TEST_CASE("sample_latents is deterministic and standard normal") {
    Rng a(99);
    Rng b(99);
    CHECK(sample_latents(5, 3, a) == sample_latents(5, 3, b));

    Rng rng(100);
    const int count = 100000;
    const LatentMatrix x = sample_latents(count, 8, rng);
    const Eigen::RowVectorXd mean = x.values().colwise().mean();
    for (int j = 0; j < 8; ++j) CHECK(std::fabs(mean(j)) < 4.0 / std::sqrt(count));
    const Eigen::MatrixXd cov = x.values().transpose() * x.values() / count;
    const Eigen::MatrixXd diff = cov - Eigen::MatrixXd::Identity(8, 8);
    CHECK(diff.cwiseAbs().maxCoeff() < 5.0 / std::sqrt(count));
  }

  TEST_CASE("sample_rgg density") {
    for (double p : {0.4, 0.5}) {
      const ModelParams params{100, 100, p, 1.0, 6};
      const Calibration cal = calibrate(p, params.d);
      Rng rng(7);
      double total = 0.0;
      for (int t = 0; t < 200; ++t) total += sample_rgg(params, cal, rng).adjacency.density();
      CHECK(std::fabs(total / 200.0 - p) < 0.02);
    }
  }

  TEST_CASE("thresholding is deterministic given latents") {
    LatentMatrix x(1, 1);
    x(0, 0) = 1.0;
    for (double p : {0.2, 0.9}) {
      const Calibration cal = calibrate(p, 1);
      const BitMatrix w = threshold_latents(x, x, cal);
      CHECK(w(0, 0) == (1.0 <= cal.tau ? 1 : 0));
    }
  }

  TEST_CASE("sample_rgg returns the latents that produced W") {
    const ModelParams params{4, 6, 0.3, 1.0, 5};
    const Calibration cal = calibrate(0.3, 5);
    Rng rng(8);
    const RggSample s = sample_rgg(params, cal, rng);
    CHECK(s.right.rows() == 4);
    CHECK(s.left.rows() == 6);
    CHECK(threshold_latents(s.right, s.left, cal) == s.adjacency);
  }

  TEST_CASE("calibration must match the parameters") {
    const ModelParams params{3, 3, 0.3, 1.0, 5};
    Rng rng(1);
    CHECK_THROWS_AS(sample_rgg(params, calibrate(0.3, 6), rng), std::invalid_argument);
    CHECK_THROWS_AS(sample_rgg(params, calibrate(0.4, 5), rng), std::invalid_argument);
  }

  TEST_CASE("Bartlett sampler has the law of the latent sampler") {
    // d exceeds min(n, m), so the fast path is taken.
    const ModelParams params{2, 3, 0.35, 1.0, 7};
    const Calibration cal = calibrate(params.p, params.d);
    Rng rng(21);
    const int draws = 100000;
    std::vector<double> direct(64, 0.0);
    std::vector<double> fast(64, 0.0);
    auto pack = [](const BitMatrix& m) {
      std::uint32_t x = 0;
      for (std::size_t k = 0; k < m.size(); ++k) x |= static_cast<std::uint32_t>(m.data()[k]) << k;
      return x;
    };
    for (int t = 0; t < draws; ++t) {
      direct[pack(sample_rgg(params, cal, rng).adjacency)] += 1.0;
      fast[pack(sample_rgg_adjacency(params, cal, rng))] += 1.0;
    }
    CHECK(two_sample_chi2(direct, fast) < chi2_critical(63, 1e-3));
  }

  TEST_CASE("sample_er") {
    Rng a(4);
    Rng b(4);
    CHECK(sample_er(9, 11, 0.3, a) == sample_er(9, 11, 0.3, b));
    Rng rng(5);
    double density = 0.0;
    for (int t = 0; t < 100; ++t) density += sample_er(50, 50, 0.3, rng).density();
    CHECK(std::fabs(density / 100.0 - 0.3) < 4.0 * std::sqrt(0.21 / 250000.0));

    // Correlation of two fixed entries over 1e5 draws.
    const int draws = 100000;
    double sx = 0.0;
    double sy = 0.0;
    double sxy = 0.0;
    for (int t = 0; t < draws; ++t) {
      const BitMatrix m = sample_er(3, 3, 0.3, rng);
      sx += m(0, 0);
      sy += m(2, 1);
      sxy += m(0, 0) * m(2, 1);
    }
    const double cov = sxy / draws - (sx / draws) * (sy / draws);
    CHECK(std::fabs(cov / 0.21) < 4.0 / std::sqrt(draws));
  }

  TEST_CASE("apply_mask") {
    Rng rng(6);
    const BitMatrix w = sample_er(4, 5, 0.5, rng);
    const BitMatrix fill = sample_er(4, 5, 0.5, rng);
    const BitMatrix mask = sample_er(4, 5, 0.5, rng);
    CHECK(apply_mask(w, BitMatrix(4, 5, 1), fill) == w);
    CHECK(apply_mask(w, BitMatrix(4, 5, 0), fill) == fill);
    const BitMatrix once = apply_mask(w, mask, fill);
    CHECK(apply_mask(once, mask, fill) == once);

    const BitMatrix w2 = BitMatrix::from_rows({{1, 1}, {0, 0}});
    const BitMatrix m2 = BitMatrix::from_rows({{1, 0}, {0, 1}});
    const BitMatrix b2 = BitMatrix::from_rows({{0, 0}, {1, 1}});
    CHECK(apply_mask(w2, m2, b2) == BitMatrix::from_rows({{1, 0}, {1, 0}}));
    CHECK_THROWS_AS(apply_mask(w2, BitMatrix(2, 3), b2), std::invalid_argument);
  }

  TEST_CASE("unknown-mask model pieces") {
    const ModelParams full{5, 6, 0.3, 1.0, 4};
    const Calibration cal = calibrate(0.3, 4);
    Rng rng(9);
    const MaskedSample s = sample_unknown_mask_model(full, cal, rng);
    CHECK(s.observed == s.rgg);
    CHECK(s.mask == BitMatrix(5, 6, 1));
    CHECK(threshold_latents(s.right, s.left, cal) == s.rgg);
    CHECK(apply_mask(s.rgg, s.mask, s.fill) == s.observed);

    const ModelParams half{50, 50, 0.3, 0.5, 4};
    double density = 0.0;
    for (int t = 0; t < 100; ++t) density += sample_unknown_mask_model(half, cal, rng).observed.density();
    CHECK(std::fabs(density / 100.0 - 0.3) < 0.01);
  }

  TEST_CASE("q = 0 reproduces the Bernoulli null") {
    const ModelParams params{2, 2, 0.3, 0.0, 2};
    const Calibration cal = calibrate(0.3, 2);
    Rng rng(10);
    const int draws = 100000;
    std::vector<double> model(16, 0.0);
    std::vector<double> null(16, 0.0);
    for (int t = 0; t < draws; ++t) {
      model[pack2x2(sample_unknown_mask_model(params, cal, rng).observed)] += 1.0;
      null[pack2x2(sample_er(2, 2, 0.3, rng))] += 1.0;
    }
    CHECK(two_sample_chi2(model, null) < chi2_critical(15, 1e-3));
  }

  TEST_CASE("masked adjacency matches the full model law") {
    const ModelParams params{2, 2, 0.4, 0.6, 3};
    const Calibration cal = calibrate(0.4, 3);
    Rng rng(14);
    const int draws = 100000;
    std::vector<double> a(256, 0.0);
    std::vector<double> b(256, 0.0);
    for (int t = 0; t < draws; ++t) {
      const MaskedSample s = sample_unknown_mask_model(params, cal, rng);
      a[pack2x2(s.observed) | (pack2x2(s.mask) << 4)] += 1.0;
      const ObservedSample o = sample_masked_adjacency(params, cal, rng);
      b[pack2x2(o.observed) | (pack2x2(o.mask) << 4)] += 1.0;
    }
    CHECK(two_sample_chi2(a, b) < chi2_critical(255, 1e-3));
  }

  TEST_CASE("check_s_rho") {
    LatentMatrix zero_row(2, 16);
    for (int j = 0; j < 16; ++j) zero_row(0, j) = 1.0;
    CHECK_FALSE(check_s_rho(zero_row, 3.9));

    LatentMatrix one(1, 9);
    for (int j = 0; j < 9; ++j) one(0, j) = 1.0;
    CHECK(check_s_rho(one, 1e-9));

    Rng rng(31);
    const int n = 50;
    const int d = 10000;
    const double rho = 3.0 * std::sqrt(std::log(static_cast<double>(n)));
    for (int t = 0; t < 50; ++t) CHECK(check_s_rho(sample_latents(n, d, rng), rho));
  }

  TEST_CASE("S_rho holds with high probability") {
    // The Gram matrix of n standard latents in R^d is Wishart(d, I_n); drawing
    // it through its Bartlett factor lets 1e4 repetitions run at n = 50,
    // d = 1e4. The predicate below restates the S_rho definition.
    const int n = 50;
    const int d = 10000;
    const double rho = 3.0 * std::sqrt(std::log(static_cast<double>(n)));
    const double bound = rho / std::sqrt(static_cast<double>(d));
    Rng rng(32);
    int accepted = 0;
    const int reps = 10000;
    for (int r = 0; r < reps; ++r) {
      Eigen::MatrixXd t = Eigen::MatrixXd::Zero(n, n);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < i; ++j) t(i, j) = rng.normal();
        t(i, i) = std::sqrt(rng.chi_squared(d - i));
      }
      const Eigen::MatrixXd gram = t * t.transpose() / d;
      bool ok = true;
      for (int u = 0; u < n && ok; ++u) {
        for (int v = u; v < n && ok; ++v) ok = std::fabs(gram(u, v) - (u == v ? 1.0 : 0.0)) <= bound;
      }
      accepted += ok ? 1 : 0;
    }
    CHECK(accepted >= 0.99 * reps);
  }

  TEST_CASE("rejection sampler") {
    Rng rng(40);
    int attempts = 0;
    const LatentMatrix x = sample_latents_in_s_rho(4, 20, 1e6, rng, 10, &attempts);
    CHECK(attempts == 1);
    CHECK(check_s_rho(x, 1e6));

    for (int t = 0; t < 20; ++t) CHECK(check_s_rho(sample_latents_in_s_rho(3, 30, 2.5, rng), 2.5));

    try {
      sample_latents_in_s_rho(3, 7, 1e-6, rng, 5);
      FAIL("expected RejectionLimitError");
    } catch (const RejectionLimitError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("rho=1e-06") != std::string::npos);
      CHECK(msg.find("count=3") != std::string::npos);
      CHECK(msg.find("d=7") != std::string::npos);
    }
  }

  TEST_CASE("rejection acceptance rate matches P(S_rho)") {
    const int n = 3;
    const int d = 5;
    const double rho = 2.0;
    Rng rng(41);
    const int draws = 20000;
    int hits = 0;
    for (int t = 0; t < draws; ++t) hits += check_s_rho(sample_latents(n, d, rng), rho) ? 1 : 0;
    const double p_direct = static_cast<double>(hits) / draws;

    const int calls = 5000;
    long total_attempts = 0;
    for (int t = 0; t < calls; ++t) {
      int used = 0;
      sample_latents_in_s_rho(n, d, rho, rng, kDefaultRejectionAttempts, &used);
      total_attempts += used;
    }
    const double p_sampler = static_cast<double>(calls) / static_cast<double>(total_attempts);
    const double se = std::hypot(std::sqrt(p_direct * (1 - p_direct) / draws),
                                 std::sqrt(p_sampler * (1 - p_sampler) / total_attempts));
    CHECK(std::fabs(p_direct - p_sampler) <= 3.0 * se);
  }

  TEST_CASE("parameter validation") {
    CHECK_THROWS(ModelParams{0, 1, 0.5, 1.0, 1}.validate());
    CHECK_THROWS(ModelParams{1, 1, 1.0, 1.0, 1}.validate());
    CHECK_THROWS(ModelParams{1, 1, 0.5, 1.5, 1}.validate());
    CHECK_THROWS(ModelParams{1, 1, 0.5, 1.0, 0}.validate());
    CHECK_NOTHROW(ModelParams{7, 2, 0.5, 0.0, 1}.validate());
  }
}
