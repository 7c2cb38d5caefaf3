#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "maskrgg/fourierweights.hpp"
#include "maskrgg/numerics.hpp"

using namespace maskrgg;

namespace {

long double density_ld(long double x, long double sigma) {
  const long double z = x / sigma;
  return std::exp(-0.5L * z * z) / (sigma * std::sqrt(2.0L * static_cast<long double>(M_PI)));
}

// Row vectors with prescribed normalized Gram entries, written into the first
// two coordinates of a d-dimensional latent matrix.
LatentMatrix two_rows(int d, double g11, double g22, double g12) {
  LatentMatrix x(2, d);
  const double scale = std::sqrt(static_cast<double>(d));
  const double a = std::sqrt(g11);
  x(0, 0) = a * scale;
  const double b1 = g12 / a;
  const double b2 = std::sqrt(std::max(0.0, g22 - b1 * b1));
  x(1, 0) = b1 * scale;
  x(1, 1) = b2 * scale;
  return x;
}

LatentMatrix one_row(int d, double g11) {
  LatentMatrix x(1, d);
  x(0, 0) = std::sqrt(g11 * d);
  return x;
}

}  // namespace

TEST_SUITE("fourierweights") {
  TEST_CASE("Hermite polynomials") {
    CHECK(hermite(0, 1.7) == 1.0);
    CHECK(hermite(1, 1.7) == doctest::Approx(1.7));
    for (double x : {-2.3, -0.4, 0.0, 0.9, 3.1}) {
      const double x2 = x * x;
      CHECK(hermite(2, x) == doctest::Approx(x2 - 1));
      CHECK(hermite(3, x) == doctest::Approx(x * x2 - 3 * x));
      CHECK(hermite(4, x) == doctest::Approx(x2 * x2 - 6 * x2 + 3));
      CHECK(hermite(5, x) == doctest::Approx(x * x2 * x2 - 10 * x * x2 + 15 * x));
      CHECK(hermite(6, x) == doctest::Approx(x2 * x2 * x2 - 15 * x2 * x2 + 45 * x2 - 15));
      CHECK(hermite(7, x) ==
            doctest::Approx(x * x2 * x2 * x2 - 21 * x * x2 * x2 + 105 * x * x2 - 105 * x));
      CHECK(hermite(8, x) == doctest::Approx(x2 * x2 * x2 * x2 - 28 * x2 * x2 * x2 +
                                             210 * x2 * x2 - 420 * x2 + 105));
    }
    CHECK(hermite(64, 0.0) != 0.0);
    CHECK(std::isfinite(hermite(64, 5.0)));
    CHECK_THROWS_AS(hermite(65, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(hermite(-1, 0.0), std::invalid_argument);
  }

  TEST_CASE("Hermite parity and the Cramer bound") {
    for (int k = 0; k <= 20; ++k) {
      const double sign = k % 2 == 0 ? 1.0 : -1.0;
      CHECK(hermite(k, -1.3) == doctest::Approx(sign * hermite(k, 1.3)));
      // |He_k(x)| exp(-x^2/4) <= 1.0865 sqrt(k!)
      for (double x : {-4.0, -1.0, 0.5, 2.5, 6.0}) {
        CHECK(std::fabs(hermite(k, x)) * std::exp(-x * x / 4) <=
              1.0865 * std::sqrt(std::tgamma(k + 1.0)) * (1 + 1e-12));
      }
    }
  }

  TEST_CASE("Gaussian density derivatives") {
    for (double sigma : {0.6, 1.0, 1.4}) {
      for (double x : {-1.1, 0.0, 0.7}) {
        const double phi = normal_pdf(x / sigma) / sigma;
        CHECK(gaussian_density_derivative(0, x, sigma) == doctest::Approx(phi));
        CHECK(gaussian_density_derivative(1, x, sigma) == doctest::Approx(-x / (sigma * sigma) * phi));
      }
    }

    const long double h = 1e-3L;
    const long double x = 0.7L;
    const long double sigma = 0.9L;
    // five-point stencil for the third derivative
    const long double fd3 = (-density_ld(x - 2 * h, sigma) + 2 * density_ld(x - h, sigma) -
                             2 * density_ld(x + h, sigma) + density_ld(x + 2 * h, sigma)) /
                            (2 * h * h * h);
    CHECK(std::fabs(gaussian_density_derivative(3, 0.7, 0.9) - static_cast<double>(fd3)) <= 1e-5);

    const double e = 1e-5;
    for (int s : {2, 5, 9}) {
      const double fd = (gaussian_density_derivative(s, 0.3 + e, 1.2) -
                         gaussian_density_derivative(s, 0.3 - e, 1.2)) /
                        (2 * e);
      CHECK(gaussian_density_derivative(s + 1, 0.3, 1.2) == doctest::Approx(fd).epsilon(1e-6));
    }
    CHECK_THROWS_AS(gaussian_density_derivative(2, 0.0, 0.0), std::invalid_argument);
  }

  TEST_CASE("covering tuples against a brute-force filter") {
    const std::vector<std::size_t> expected{1, 2, 36, 24, 1800, 720};
    for (int k = 1; k <= 6; ++k) {
      CAPTURE(k);
      const int ell = (k + 1) / 2;
      std::set<std::vector<CoveringTupleSet::Pair>> brute;
      std::vector<CoveringTupleSet::Pair> current(ell);
      const int pairs = k * k;
      std::vector<int> digits(ell, 0);
      while (true) {
        std::vector<int> seen(k, 0);
        for (int j = 0; j < ell; ++j) {
          current[j] = {digits[j] / k, digits[j] % k};
          seen[current[j][0]] = 1;
          seen[current[j][1]] = 1;
        }
        if (std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; })) {
          brute.insert(current);
        }
        int pos = 0;
        while (pos < ell && ++digits[pos] == pairs) digits[pos++] = 0;
        if (pos == ell) break;
      }

      const CoveringTupleSet& set = enumerate_covering_tuples(k);
      CHECK(set.alpha_size == k);
      CHECK(set.ell == ell);
      CHECK(set.tuples.size() == expected[k - 1]);
      const std::set<std::vector<CoveringTupleSet::Pair>> fast(set.tuples.begin(), set.tuples.end());
      CHECK(fast.size() == set.tuples.size());
      CHECK(fast == brute);
    }
  }

  TEST_CASE("covering tuple invariants") {
    for (int k = 1; k <= 8; ++k) {
      const CoveringTupleSet& set = enumerate_covering_tuples(k);
      REQUIRE(set.multiplicities.size() == set.tuples.size());
      for (std::size_t t = 0; t < set.tuples.size(); ++t) {
        int total = 0;
        for (int c : set.multiplicities[t]) {
          CHECK(c >= 1);
          total += c;
        }
        CHECK(total == 2 * set.ell);
      }
    }
    CHECK(enumerate_covering_tuples(7).tuples.size() == 141120);
    CHECK(enumerate_covering_tuples(8).tuples.size() == 40320);
    CHECK(&enumerate_covering_tuples(5) == &enumerate_covering_tuples(5));
    CHECK_THROWS_AS(enumerate_covering_tuples(0), std::invalid_argument);
    CHECK_THROWS_AS(enumerate_covering_tuples(9), std::invalid_argument);
  }

  TEST_CASE("leading term for one and two leaves") {
    const Calibration cal = calibrate(0.3, 50);
    const double s = cal.sigma_hat;
    const LatentMatrix one = one_row(50, s * s + 0.04);
    CHECK(leading_term_lambda(one, cal) ==
          doctest::Approx(0.5 * 0.04 * gaussian_density_derivative(1, cal.tau, s)));

    const LatentMatrix two = two_rows(50, s * s + 0.01, s * s - 0.02, 0.05);
    const double phi = gaussian_density_derivative(0, cal.tau, s);
    CHECK(leading_term_lambda(two, cal) == doctest::Approx(0.05 * phi * phi));

    const double phi_std = normal_pdf(cal.tau);
    CHECK(leading_term_lambda(two, cal, false) == doctest::Approx(0.05 * phi_std * phi_std));
  }

  TEST_CASE("leading term vanishes without off-diagonal mass at two leaves") {
    const Calibration cal = calibrate(0.3, 40);
    const LatentMatrix x = two_rows(40, 1.3, 0.7, 0.0);
    CHECK(std::fabs(leading_term_lambda(x, cal)) <= 1e-15);
  }

  TEST_CASE("leading term is rotation invariant") {
    const Calibration cal = calibrate(0.3, 6);
    Rng rng(3);
    for (int size = 1; size <= 5; ++size) {
      const LatentMatrix x = sample_latents(size, 6, rng);
      const Eigen::MatrixXd g = sample_latents(6, 6, rng).values();
      const Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
      const Eigen::MatrixXd q = qr.householderQ();
      const LatentMatrix rotated(Eigen::MatrixXd(x.values() * q));
      const double base = leading_term_lambda(x, cal);
      CHECK(leading_term_lambda(rotated, cal) ==
            doctest::Approx(base).epsilon(1e-9).scale(1e-12));
    }
  }

  TEST_CASE("one-leaf residual is second order in Delta") {
    const int d = 30;
    const Calibration cal = calibrate(0.3, d);
    const double s2 = cal.sigma_hat * cal.sigma_hat;
    auto residual = [&](double eps) {
      const double exact = normal_cdf(cal.tau / std::sqrt(s2 + eps)) - cal.p;
      return exact - leading_term_lambda(one_row(d, s2 + eps), cal);
    };
    const double r1 = residual(0.02);
    const double r2 = residual(0.01);
    CHECK(std::fabs(r1) > 0.0);
    CHECK(r1 / r2 == doctest::Approx(4.0).epsilon(0.05));
  }

  TEST_CASE("two-leaf residual is second order in Delta") {
    const int d = 30;
    const Calibration cal = calibrate(0.3, d);
    const double s2 = cal.sigma_hat * cal.sigma_hat;
    auto residual = [&](double eps) {
      const LatentMatrix x = two_rows(d, s2 + 0.5 * eps, s2 - eps, eps);
      return conditional_star_sw_exact2(x, cal).value - leading_term_lambda(x, cal);
    };
    const double r1 = residual(0.02);
    const double r2 = residual(0.01);
    CHECK(r1 / r2 == doctest::Approx(4.0).epsilon(0.1));
  }

  TEST_CASE("exact two-leaf weight") {
    const Calibration cal = calibrate(0.3, 20);
    const double s2 = cal.sigma_hat * cal.sigma_hat;
    const SignedWeightEstimate at_reference = conditional_star_sw_exact2(two_rows(20, s2, s2, 0.0), cal);
    CHECK(std::fabs(at_reference.value) <= 1e-14);
    CHECK(at_reference.method == EstimateMethod::kExactBivariate);

    const Calibration half = calibrate(0.5, 20);
    LatentMatrix same(2, 20);
    for (int j = 0; j < 20; ++j) same(0, j) = same(1, j) = 0.1 * (j + 1);
    CHECK(conditional_star_sw_exact2(same, half).value == doctest::Approx(0.25).epsilon(1e-12));

    LatentMatrix opposite = same;
    opposite.values().row(1) *= -2.0;
    CHECK(conditional_star_sw_exact2(opposite, half).value == doctest::Approx(-0.25).epsilon(1e-12));

    CHECK_THROWS_AS(conditional_star_sw_exact2(LatentMatrix(3, 20), cal), std::invalid_argument);
    CHECK_THROWS_AS(conditional_star_sw_exact2(LatentMatrix(2, 20), cal), std::invalid_argument);
  }

  TEST_CASE("Monte Carlo agrees with the exact two-leaf weight") {
    const int d = 12;
    const Calibration cal = calibrate(0.3, d);
    Rng rng(9);
    int outside = 0;
    for (int t = 0; t < 50; ++t) {
      const LatentMatrix x = sample_latents(2, d, rng);
      const double exact = conditional_star_sw_exact2(x, cal).value;
      const SignedWeightEstimate mc = conditional_star_sw_mc(x, cal, 200000, StreamSeed(100 + t));
      CHECK(mc.samples == 200000);
      CHECK(mc.std_error > 0.0);
      if (std::fabs(mc.value - exact) > 4.0 * mc.std_error) ++outside;
    }
    CHECK(outside <= 1);
  }

  TEST_CASE("Monte Carlo edge cases") {
    const int d = 8;
    const Calibration cal = calibrate(0.3, d);
    const LatentMatrix x = one_row(d, 1.7);
    const SignedWeightEstimate one = conditional_star_sw_mc(x, cal, 100000, StreamSeed(1));
    CHECK(std::fabs(one.value - (normal_cdf(cal.tau / std::sqrt(1.7)) - 0.3)) <= 4 * one.std_error);

    LatentMatrix rank_one(3, d);
    for (int u = 0; u < 3; ++u) rank_one(u, 0) = 1.0 + u;
    const SignedWeightEstimate degenerate = conditional_star_sw_mc(rank_one, cal, 20000, StreamSeed(2));
    CHECK(std::isfinite(degenerate.value));

    const SignedWeightEstimate a = conditional_star_sw_mc(rank_one, cal, 50000, StreamSeed(3), 1);
    const SignedWeightEstimate b = conditional_star_sw_mc(rank_one, cal, 50000, StreamSeed(3), 4);
    CHECK(a.value == b.value);
    CHECK(a.std_error == b.std_error);

    CHECK_THROWS_AS(conditional_star_sw_mc(x, cal, 999, StreamSeed(1)), std::invalid_argument);
    CHECK(to_json(a).at("method") == "mc");
  }

  TEST_CASE("unconditional star weights: sampled and analytic leaves agree") {
    const StreamSeed seed(5);
    const SignedWeightEstimate sampled =
        unconditional_star_sw_mc(2, 0.3, 10, 1000000, seed, 1, LeafMode::kSampled);
    const SignedWeightEstimate analytic =
        unconditional_star_sw_mc(2, 0.3, 10, 1000000, seed.child(1), 1, LeafMode::kAnalytic);
    CHECK(std::fabs(sampled.value - analytic.value) <=
          4.0 * std::hypot(sampled.std_error, analytic.std_error));
    CHECK(analytic.std_error < sampled.std_error);
  }

  TEST_CASE("one-leaf unconditional star has mean zero") {
    const SignedWeightEstimate e =
        unconditional_star_sw_mc(1, 0.3, 7, 1000000, StreamSeed(6), 1, LeafMode::kAnalytic);
    CHECK(std::fabs(e.value) <= 4.0 * e.std_error);
  }

  TEST_CASE("star leaves integrate to zero at p = 1/2") {
    const SignedWeightEstimate analytic =
        unconditional_star_sw_mc(2, 0.5, 10, 100000, StreamSeed(7), 1, LeafMode::kAnalytic);
    CHECK(analytic.value == 0.0);
    const SignedWeightEstimate sampled =
        unconditional_star_sw_mc(2, 0.5, 10, 400000, StreamSeed(8), 1, LeafMode::kSampled);
    CHECK(std::fabs(sampled.value) <= 4.0 * sampled.std_error);
  }

  TEST_CASE("star decay report") {
    StarOptions options;
    options.p = 0.3;
    options.mode = LeafMode::kAnalytic;
    options.d_values = {20, 80};
    options.trials = 1000000;
    const StarReport r = verify_star_decay(options);
    REQUIRE(r.points.size() == 2);
    REQUIRE(r.step_ratios.size() == 1);
    CHECK(r.step_ratios[0] > 2.5);
    CHECK(r.status == VerificationStatus::kPass);
    const auto json = to_json(r);
    CHECK(json.at("status") == "pass");
    CHECK(json.at("points").size() == 2);
  }

  TEST_CASE("remainder scaling report shape") {
    ScalingOptions options;
    options.d_values = {64, 256};
    options.draws = 10;
    const ScalingReport r = verify_remainder_scaling(options);
    REQUIRE(r.points.size() == 2);
    CHECK(r.slope_limit == doctest::Approx(-0.5));
    CHECK(r.points[0].mean_residual > r.points[1].mean_residual);
    const auto json = to_json(r);
    CHECK(json.contains("slope"));
    CHECK(json.contains("status"));
  }

  TEST_CASE("leaf patterns have zero signed weight at p = 1/2") {
    const ModelParams params{3, 3, 0.5, 1.0, 5};
    const LeafZeroReport r =
        leaf_zero_check(PatternGraph::two_path(), params, 200000, 3.0, StreamSeed(11));
    CHECK(r.pattern_has_leaf);
    REQUIRE(r.rows.size() == 2);
    for (const auto& row : r.rows) {
      CAPTURE(row.variant);
      CHECK(row.within_4_sigma);
    }

    const LeafZeroReport cycle =
        leaf_zero_check(PatternGraph::four_cycle(), params, 20000, 3.0, StreamSeed(12));
    CHECK_FALSE(cycle.pattern_has_leaf);

    const ModelParams off{3, 3, 0.3, 1.0, 5};
    CHECK_THROWS_AS(leaf_zero_check(PatternGraph::two_path(), off, 20000, 3.0, StreamSeed(1)),
                    std::invalid_argument);
  }

  TEST_CASE("names round trip") {
    for (LeafMode mode : {LeafMode::kSampled, LeafMode::kAnalytic}) {
      CHECK(parse_leaf_mode(leaf_mode_name(mode)) == mode);
    }
    CHECK_THROWS_AS(parse_leaf_mode("uniform"), std::invalid_argument);
    CHECK(status_name(VerificationStatus::kInconclusive) == "inconclusive");
  }
}
