#pragma once

#include <vector>

#include "maskrgg/matrix.hpp"
#include "maskrgg/rng.hpp"

namespace maskrgg::testing {

inline BitMatrix random_bits(int n, int m, double density, Rng& rng) {
  BitMatrix out(n, m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) out.set(i, j, rng.uniform() < density);
  }
  return out;
}

inline double brute_wedges(const BitMatrix& a, const BitMatrix* mask, double p) {
  double total = 0.0;
  for (int i = 0; i < a.rows(); ++i) {
    for (int k = 0; k < a.cols(); ++k) {
      for (int l = k + 1; l < a.cols(); ++l) {
        if (mask && !((*mask)(i, k) && (*mask)(i, l))) continue;
        total += (a(i, k) - p) * (a(i, l) - p);
      }
    }
  }
  return total;
}

inline double brute_four_cycles(const BitMatrix& a, const BitMatrix* mask, double p) {
  double total = 0.0;
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = i + 1; j < a.rows(); ++j) {
      for (int k = 0; k < a.cols(); ++k) {
        for (int l = k + 1; l < a.cols(); ++l) {
          if (mask && !((*mask)(i, k) && (*mask)(i, l) && (*mask)(j, k) && (*mask)(j, l))) continue;
          total += (a(i, k) - p) * (a(i, l) - p) * (a(j, k) - p) * (a(j, l) - p);
        }
      }
    }
  }
  return total;
}

}  // namespace maskrgg::testing
