#pragma once

#include <cmath>
#include <functional>
#include <span>

namespace maskrgg {

inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

/// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

/// Standard normal density.
inline double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

/// Standard normal quantile; p must lie in (0, 1).
double normal_quantile(double p);

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
  int nodes = 0;
};

/// Adaptive 7/15-point Gauss-Kronrod on [a, b]. Bisects the interval with
/// the largest error estimate until the total estimate drops below
/// max(abs_tol, rel_tol * |value|) or `max_nodes` function evaluations have
/// been spent.
QuadratureResult integrate_adaptive(const std::function<double(double)>& f,
                                    double a, double b, double abs_tol,
                                    double rel_tol, int max_nodes = 2048);

/// Neumaier-compensated sum.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::fabs(sum_) >= std::fabs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  [[nodiscard]] double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Mean and standard error of the mean of a sample.
struct MeanEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  double variance = 0.0;  // unbiased sample variance
  std::size_t count = 0;
};

MeanEstimate mean_estimate(std::span<const double> values);

/// Empirical quantile with linear interpolation between order statistics
/// (Hyndman-Fan type 7). `sorted` must be in ascending order.
double sorted_quantile(std::span<const double> sorted, double level);

/// Least-squares slope of log(y) against log(x).
double log_log_slope(std::span<const double> x, std::span<const double> y);

}  // namespace maskrgg
