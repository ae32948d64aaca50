#pragma once

#include <cmath>
#include <vector>

namespace misfit {

struct ProbeBox {
  double lo = 0.0;
  double hi = 1.0;
};

// Deterministic low-discrepancy probes: the additive Kronecker sequence with
// generalized golden-ratio increments, mapped onto the requested box.
inline std::vector<std::vector<double>> probe_grid(const std::vector<ProbeBox>& box, int n) {
  int d = int(box.size());
  // root of x^(d+1) = x + 1
  double phi = 1.5;
  for (int it = 0; it < 64; ++it) phi = std::pow(1.0 + phi, 1.0 / (d + 1));
  std::vector<double> alpha(d);
  double a = 1.0;
  for (int j = 0; j < d; ++j) {
    a /= phi;
    alpha[j] = a;
  }
  std::vector<std::vector<double>> pts(n, std::vector<double>(d));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      double u = std::fmod(0.5 + (i + 1) * alpha[j], 1.0);
      pts[i][j] = box[j].lo + u * (box[j].hi - box[j].lo);
    }
  }
  return pts;
}

}  // namespace misfit
