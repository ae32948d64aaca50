#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

#include "misfit/errors.hpp"

namespace misfit {

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Counter-derived substream: the stream for replication k under a master seed
// depends only on (seed, k), never on thread scheduling, so parallel runs are
// bit-identical for any --threads value. All samplers are hand-rolled on top
// of the raw 64-bit output; std::* distributions are not bit-stable across
// standard libraries.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t stream_index) {
    state_ = master_seed ^ 0x9E3779B97F4A7C15ULL * (stream_index + 1);
    for (int i = 0; i < 4; ++i) splitmix64_next(state_);
  }

  std::uint64_t next_u64() { return splitmix64_next(state_); }

  // uniform on [0, 1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // uniform on (0, 1)
  double uniform_pos() {
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    return u;
  }

  double normal() {
    // Box-Muller, one deviate per pair of uniforms; stateless between calls.
    double u1 = uniform_pos();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  double exponential(double rate) { return -std::log(uniform_pos()) / rate; }

  // Marsaglia-Tsang squeeze for shape >= 1; shapes below 1 are lifted by one
  // and corrected with a power of a uniform (valid boost for shape < 1).
  double gamma(double shape, double rate) {
    if (shape < 1.0) {
      double u = uniform_pos();
      return gamma(shape + 1.0, rate) * std::pow(u, 1.0 / shape);
    }
    double d = shape - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      double u = uniform_pos();
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
        return d * v / rate;
      }
    }
  }

  // Exact: counts unit-exponential arrivals up to `mean`. Cost is O(mean),
  // fine for the stratum sizes simulated here.
  long poisson(double mean) {
    if (mean < 0.0 || !std::isfinite(mean)) throw NumericalError("poisson sampler: bad mean");
    long k = 0;
    double t = exponential(1.0);
    while (t <= mean) {
      ++k;
      t += exponential(1.0);
      if (k > 100000000L) throw NumericalError("poisson sampler: runaway mean");
    }
    return k;
  }

  double lognormal(double mlog, double slog) { return std::exp(mlog + slog * normal()); }

  long negative_binomial(double size, double prob) {
    // gamma-Poisson mixture with rate prob/(1-prob)
    double g = gamma(size, prob / (1.0 - prob));
    return poisson(g);
  }

  // Best-Fisher wrapped-Cauchy envelope; returns an angle in [0, 2*pi)
  double von_mises(double mean_angle, double concentration) {
    double kappa = concentration;
    if (kappa < 1e-8) return uniform() * 6.283185307179586477;
    double tau = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
    double rho = (tau - std::sqrt(2.0 * tau)) / (2.0 * kappa);
    double rr = (1.0 + rho * rho) / (2.0 * rho);
    for (;;) {
      double z = std::cos(3.141592653589793238 * uniform());
      double f = (1.0 + rr * z) / (rr + z);
      double c = kappa * (rr - f);
      double u = uniform_pos();
      if (c * (2.0 - c) - u > 0.0 || std::log(c / u) + 1.0 - c >= 0.0) {
        double sign = uniform() < 0.5 ? -1.0 : 1.0;
        double a = mean_angle + sign * std::acos(f);
        a = std::fmod(a, 6.283185307179586477);
        if (a < 0.0) a += 6.283185307179586477;
        return a;
      }
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace misfit
