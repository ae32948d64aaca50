#pragma once

#include <Eigen/Dense>

namespace misfit {

// Nodes and log-weights of a Gauss rule. Weights that underflow double range
// (far tails of large rules) carry logw = -inf and drop out of accumulation;
// their true contribution is below any tolerance used here.
struct QuadRule {
  Eigen::VectorXd x;
  Eigen::VectorXd logw;
};

// weight exp(-x^2) on (-inf, inf)
const QuadRule& gauss_hermite(int n);

// weight x^alpha exp(-x) on (0, inf), alpha > -1
QuadRule gauss_laguerre(int n, double alpha);

// weight 1 on (-1, 1)
const QuadRule& gauss_legendre(int n);

}  // namespace misfit
