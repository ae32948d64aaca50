#pragma once

#include <cmath>

namespace misfit {

// Recurrence into the asymptotic region followed by the standard series.
inline double digamma(double x) {
  double r = 0.0;
  while (x < 12.0) {
    r -= 1.0 / x;
    x += 1.0;
  }
  double f = 1.0 / (x * x);
  return r + std::log(x) - 0.5 / x -
         f * (1.0 / 12.0 - f * (1.0 / 120.0 - f * (1.0 / 252.0 - f * (1.0 / 240.0 - f / 132.0))));
}

inline double trigamma(double x) {
  double r = 0.0;
  while (x < 12.0) {
    r += 1.0 / (x * x);
    x += 1.0;
  }
  double f = 1.0 / (x * x);
  return r + 1.0 / x + f / 2.0 +
         (f / x) *
             (1.0 / 6.0 - f * (1.0 / 30.0 - f * (1.0 / 42.0 - f * (1.0 / 30.0 - f * 5.0 / 66.0))));
}

}  // namespace misfit
