#include <cmath>

#include "doctest.h"
#include "misfit/grid.hpp"
#include "misfit/quadrature.hpp"

using misfit::gauss_hermite;
using misfit::gauss_laguerre;
using misfit::QuadRule;

namespace {

template <typename F>
double integrate(const QuadRule& q, F&& f) {
  double s = 0.0;
  for (long i = 0; i < q.x.size(); ++i) {
    if (std::isinf(q.logw[i])) continue;
    s += std::exp(q.logw[i]) * f(q.x[i]);
  }
  return s;
}

}  // namespace

TEST_CASE("gauss-hermite integrates against exp(-x^2)") {
  const auto& q = gauss_hermite(20);
  CHECK(integrate(q, [](double) { return 1.0; }) ==
        doctest::Approx(1.7724538509055159).epsilon(1e-13));
  CHECK(integrate(q, [](double x) { return x * x; }) ==
        doctest::Approx(0.5 * 1.7724538509055159).epsilon(1e-13));
  CHECK(integrate(q, [](double x) { return x; }) == doctest::Approx(0.0).scale(1.0));
  CHECK(integrate(q, [](double x) { return std::cos(x); }) ==
        doctest::Approx(1.380388447043143).epsilon(1e-12));
}

TEST_CASE("gauss-laguerre integrates against x^a exp(-x)") {
  auto q0 = gauss_laguerre(32, 0.0);
  CHECK(integrate(q0, [](double) { return 1.0; }) == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(integrate(q0, [](double x) { return x; }) == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(integrate(q0, [](double x) { return std::sin(x); }) ==
        doctest::Approx(0.5).epsilon(1e-10));

  // moments of the generalized weight are exact for polynomial integrands
  double alpha = 2.5;
  auto qa = gauss_laguerre(16, alpha);
  double g = 3.323350970447842;  // Gamma(3.5)
  double m = g;
  for (int k = 0; k <= 5; ++k) {
    double got = integrate(qa, [k](double x) { return std::pow(x, k); });
    CHECK(got == doctest::Approx(m).epsilon(1e-12));
    m *= alpha + k + 1.0;
  }
}

TEST_CASE("large rules stay finite in log space") {
  auto q = gauss_laguerre(512, 0.0);
  double lse = -std::numeric_limits<double>::infinity();
  for (long i = 0; i < q.logw.size(); ++i) {
    CHECK(!std::isnan(q.logw[i]));
    double a = std::max(lse, q.logw[i]), b = std::min(lse, q.logw[i]);
    lse = std::isinf(a) ? b : a + std::log1p(std::exp(b - a));
  }
  CHECK(lse == doctest::Approx(0.0).scale(1.0).epsilon(1e-10));
  const auto& h = gauss_hermite(400);
  for (long i = 0; i < h.logw.size(); ++i) CHECK(!std::isnan(h.logw[i]));
}

TEST_CASE("probe grids stay inside the box and are deterministic") {
  std::vector<misfit::ProbeBox> box{{0.3, 3.0}, {2.0, 5.0}};
  auto g1 = misfit::probe_grid(box, 25);
  auto g2 = misfit::probe_grid(box, 25);
  REQUIRE(g1.size() == 25);
  for (size_t i = 0; i < g1.size(); ++i) {
    CHECK(g1[i].size() == 2);
    CHECK(g1[i][0] >= 0.3);
    CHECK(g1[i][0] <= 3.0);
    CHECK(g1[i][1] >= 2.0);
    CHECK(g1[i][1] <= 5.0);
    CHECK(g1[i] == g2[i]);
  }
  // points spread out rather than clump: no two consecutive points coincide
  for (size_t i = 1; i < g1.size(); ++i) {
    CHECK(std::fabs(g1[i][0] - g1[i - 1][0]) + std::fabs(g1[i][1] - g1[i - 1][1]) > 1e-3);
  }
}
