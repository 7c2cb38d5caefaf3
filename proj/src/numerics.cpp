#include "maskrgg/numerics.hpp"

#include <algorithm>
#include <array>
#include <queue>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/normal.hpp>

namespace maskrgg {

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::domain_error("normal_quantile: p must lie in (0, 1)");
  }
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

namespace {

// Kronrod abscissae on [0, 1]; odd indices are the embedded Gauss nodes.
constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
  double a;
  double b;
  double value;
  double error;
  bool operator<(const Segment& other) const { return error < other.error; }
};

Segment kronrod15(const std::function<double(double)>& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(center);
  double kronrod = fc * kWgk[7];
  double gauss = fc * kWg[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kXgk[j];
    const double f1 = f(center - dx);
    const double f2 = f(center + dx);
    kronrod += kWgk[j] * (f1 + f2);
    if (j % 2 == 1) gauss += kWg[j / 2] * (f1 + f2);
  }
  return {a, b, kronrod * half, std::fabs((kronrod - gauss) * half)};
}

}  // namespace

QuadratureResult integrate_adaptive(const std::function<double(double)>& f,
                                    double a, double b, double abs_tol,
                                    double rel_tol, int max_nodes) {
  std::priority_queue<Segment> heap;
  Segment first = kronrod15(f, a, b);
  double value = first.value;
  double error = first.error;
  int nodes = 15;
  heap.push(first);
  while (error > std::max(abs_tol, rel_tol * std::fabs(value)) &&
         nodes + 30 <= max_nodes) {
    const Segment worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    const Segment left = kronrod15(f, worst.a, mid);
    const Segment right = kronrod15(f, mid, worst.b);
    nodes += 30;
    value += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
  }
  // Re-sum to shed drift from the incremental updates.
  CompensatedSum total;
  CompensatedSum total_error;
  while (!heap.empty()) {
    total.add(heap.top().value);
    total_error.add(heap.top().error);
    heap.pop();
  }
  return {total.value(), total_error.value(), nodes};
}

MeanEstimate mean_estimate(std::span<const double> values) {
  MeanEstimate out;
  out.count = values.size();
  if (values.empty()) return out;
  CompensatedSum sum;
  for (double v : values) sum.add(v);
  out.mean = sum.value() / static_cast<double>(values.size());
  if (values.size() > 1) {
    CompensatedSum squares;
    for (double v : values) squares.add((v - out.mean) * (v - out.mean));
    out.variance = squares.value() / static_cast<double>(values.size() - 1);
    out.std_error = std::sqrt(out.variance / static_cast<double>(values.size()));
  }
  return out;
}

double sorted_quantile(std::span<const double> sorted, double level) {
  if (sorted.empty()) throw std::invalid_argument("sorted_quantile: empty sample");
  const double h = level * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double log_log_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("log_log_slope: need two or more paired points");
  }
  const auto n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace maskrgg
