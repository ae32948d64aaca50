#include <cmath>
#include <vector>

#include "doctest.h"
#include "misfit/families.hpp"
#include "misfit/grid.hpp"
#include "misfit/group.hpp"

using namespace misfit;
using namespace misfit::group;

namespace {

GroupAction act(ActionKind k) { return GroupAction{k}; }

Point circ(double angle) { return Point::planar(std::cos(angle), std::sin(angle)); }

double fd_pair_score(const SymmetricPairModel& m, double psi, double gamma, const Point& y1,
                     const Point& y0, double h = 1e-6) {
  auto ll = [&](double p) {
    return arm1_log_density(m, p, gamma, y1) + arm0_log_density(m, p, gamma, y0);
  };
  return (ll(psi + h) - ll(psi - h)) / (2.0 * h);
}

}  // namespace

TEST_CASE("action evaluation at pinned points") {
  CHECK(apply(act(ActionKind::Rate), 2.0, Point::scalar(3.0)).x == doctest::Approx(1.5));
  CHECK(apply(act(ActionKind::Scale), 2.0, Point::scalar(3.0)).x == doctest::Approx(6.0));
  CHECK(apply(act(ActionKind::Location), -1.5, Point::scalar(3.0)).x == doctest::Approx(1.5));
  CHECK(jacobian_magnitude(act(ActionKind::Scale), 2.0, Point::scalar(1.0), Direction::Inverse) ==
        doctest::Approx(0.5));
  CHECK(jacobian_magnitude(act(ActionKind::Scale), 2.0, Point::scalar(1.0), Direction::Forward) ==
        doctest::Approx(2.0));
  CHECK(jacobian_magnitude(act(ActionKind::Rate), 2.0, Point::scalar(1.0), Direction::Forward) ==
        doctest::Approx(0.5));
  Point r = apply(act(ActionKind::Rotation2D), 0.7, circ(0.2));
  CHECK(r.x == doctest::Approx(std::cos(0.9)).epsilon(1e-12));
  CHECK(r.y == doctest::Approx(std::sin(0.9)).epsilon(1e-12));
  Point q = apply(act(ActionKind::Rotation2D), 1.5707963267948966, circ(0.0));
  CHECK(q.x == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK(q.y == doctest::Approx(1.0).epsilon(1e-12));
  Point qi = invert(act(ActionKind::Rotation2D), 1.5707963267948966, q);
  CHECK(qi.x == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("forward and inverse jacobians multiply to one") {
  auto pts = probe_grid({{0.3, 4.0}, {0.2, 3.0}}, 60);
  for (auto k : {ActionKind::Location, ActionKind::Scale, ActionKind::Rate,
                 ActionKind::Rotation2D}) {
    for (const auto& p : pts) {
      Point x = (k == ActionKind::Rotation2D) ? circ(p[1]) : Point::scalar(p[1]);
      double prod = jacobian_magnitude(act(k), p[0], x, Direction::Forward) *
                    jacobian_magnitude(act(k), p[0], x, Direction::Inverse);
      CHECK(prod == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("inverse undoes the action across a probe grid") {
  auto pts = probe_grid({{0.05, 8.0}, {0.2, 4.0}}, 1000);
  for (auto k : {ActionKind::Location, ActionKind::Scale, ActionKind::Rate}) {
    for (const auto& p : pts) {
      double x = p[0], psi = p[1];
      Point fwd = apply(act(k), psi, Point::scalar(x));
      CHECK(invert(act(k), psi, fwd).x == doctest::Approx(x).epsilon(1e-12));
    }
  }
  for (const auto& p : pts) {
    Point z = circ(p[0]);
    Point back = invert(act(ActionKind::Rotation2D), p[1], apply(act(ActionKind::Rotation2D), p[1], z));
    CHECK(back.x == doctest::Approx(z.x).epsilon(1e-10));
    CHECK(back.y == doctest::Approx(z.y).epsilon(1e-10));
  }
}

TEST_CASE("jacobians match forward differences of the maps") {
  double h = 1e-6;
  for (auto k : {ActionKind::Location, ActionKind::Scale, ActionKind::Rate}) {
    for (double psi : {0.4, 1.0, 2.7}) {
      for (double x : {0.5, 1.9}) {
        double fd = (apply(act(k), psi, Point::scalar(x + h)).x -
                     apply(act(k), psi, Point::scalar(x - h)).x) /
                    (2.0 * h);
        CHECK(jacobian_magnitude(act(k), psi, Point::scalar(x), Direction::Forward) ==
              doctest::Approx(std::fabs(fd)).epsilon(1e-8));
        double fdi = (invert(act(k), psi, Point::scalar(x + h)).x -
                      invert(act(k), psi, Point::scalar(x - h)).x) /
                     (2.0 * h);
        CHECK(jacobian_magnitude(act(k), psi, Point::scalar(x), Direction::Inverse) ==
              doctest::Approx(std::fabs(fdi)).epsilon(1e-8));
      }
    }
  }
}

TEST_CASE("domain violations are rejected") {
  CHECK_THROWS_AS(apply(act(ActionKind::Scale), -1.0, Point::scalar(1.0)), std::invalid_argument);
  CHECK_THROWS_AS(apply(act(ActionKind::Rate), 2.0, Point::scalar(-3.0)), std::invalid_argument);
  CHECK_THROWS_AS(apply(act(ActionKind::Rotation2D), 0.5, Point::planar(0.5, 0.2)),
                  std::invalid_argument);
  CHECK_THROWS_AS(apply(act(ActionKind::Scale), 1.0, Point::planar(1.0, 0.0)),
                  std::invalid_argument);
}

TEST_CASE("symmetric pairing leaves no factorization residual") {
  std::vector<SymmetricPairModel> models = {
      {act(ActionKind::Location), DensityFamily::normal(0.0, 1.4)},
      {act(ActionKind::Scale), DensityFamily::gamma(2.1, 1.0)},
      {act(ActionKind::Rate), DensityFamily::exponential(1.0)},
  };
  auto pts = probe_grid({{0.3, 3.0}, {0.3, 2.5}, {0.4, 2.2}, {0.5, 2.0}}, 50);
  for (const auto& m : models) {
    for (const auto& p : pts) {
      double psi = p[0], gamma = p[1];
      CHECK(symmetry_residual(m, psi, gamma, Point::scalar(p[2]), Point::scalar(p[3])) < 1e-12);
    }
  }
  SymmetricPairModel rot{act(ActionKind::Rotation2D), DensityFamily::von_mises(0.0, 1.8)};
  for (const auto& p : pts) {
    CHECK(symmetry_residual(rot, p[0], p[1], circ(p[2]), circ(-p[3])) < 1e-12);
  }
}

TEST_CASE("one-armed placement leaves a visible factorization residual") {
  SymmetricPairModel m{act(ActionKind::Rate), DensityFamily::exponential(1.0),
                       PairMode::NonSymmetric};
  double r = symmetry_residual(m, 2.0, 1.0, Point::scalar(1.0), Point::scalar(1.0));
  CHECK(r == doctest::Approx(0.01748913811182909).epsilon(1e-10));
  CHECK(r > 1e-3);
}

TEST_CASE("antisymmetry values at the pinned probe") {
  SymmetricPairModel m{act(ActionKind::Scale), DensityFamily::gamma(2.0, 1.0)};
  auto [a, c] = antisymmetry_values(m, 2.0, Point::scalar(2.0), Point::scalar(3.0));
  CHECK(a == doctest::Approx(0.5).epsilon(1e-7));
  CHECK(c == doctest::Approx(0.0).scale(1.0).epsilon(1e-7));
  auto [ar, cr] = antisymmetry_conditions(m, 2.0, Point::scalar(2.0), Point::scalar(3.0));
  CHECK(ar < 1e-7);
  CHECK(cr < 1e-7);

  SymmetricPairModel rot{act(ActionKind::Rotation2D), DensityFamily::von_mises(0.0, 1.0)};
  auto [ar2, cr2] =
      antisymmetry_conditions(rot, 0.7853981633974483, circ(0.0), circ(1.5707963267948966));
  CHECK(ar2 < 1e-7);
  CHECK(cr2 < 1e-7);
}

TEST_CASE("antisymmetry conditions hold across actions and fail for controls") {
  auto pts = probe_grid({{0.3, 3.0}, {0.4, 2.6}, {0.5, 2.2}}, 40);
  for (auto k : {ActionKind::Location, ActionKind::Scale, ActionKind::Rate}) {
    SymmetricPairModel m{act(k), DensityFamily::normal(0.0, 1.0)};
    if (k != ActionKind::Location) m.base = DensityFamily::gamma(2.0, 1.0);
    for (const auto& p : pts) {
      auto [ar, cr] = antisymmetry_conditions(m, p[0], Point::scalar(p[1]), Point::scalar(p[2]));
      CHECK(ar < 1e-6);
      CHECK(cr < 1e-6);
    }
  }
  SymmetricPairModel rot{act(ActionKind::Rotation2D), DensityFamily::von_mises(0.0, 1.5)};
  for (const auto& p : pts) {
    auto [ar, cr] = antisymmetry_conditions(rot, p[0], circ(p[1]), circ(p[2] + 0.4));
    CHECK(ar < 1e-6);
    CHECK(cr < 1e-6);
  }

  // mismatched arm factor on the rotation pair: the map derivatives no longer
  // cancel except at antipodal probe pairs, which the grid avoids
  SymmetricPairModel rot_bad = rot;
  rot_bad.arm0_factor = 1.3;
  for (const auto& p : pts) {
    auto [ar, cr] = antisymmetry_conditions(rot_bad, p[0], circ(p[1]), circ(p[2] + 0.4));
    CHECK(std::max(ar, cr) > 1e-3);
  }

  // one-armed placement: both conditions break, the jacobian one by exactly 2
  SymmetricPairModel ns{act(ActionKind::Rate), DensityFamily::exponential(1.0),
                        PairMode::NonSymmetric};
  for (const auto& p : pts) {
    auto [ar, cr] = antisymmetry_conditions(ns, p[0], Point::scalar(p[1]), Point::scalar(p[2]));
    CHECK(ar == doctest::Approx((p[1] + p[2]) / p[0]).epsilon(1e-6));
    CHECK(cr == doctest::Approx(2.0).epsilon(1e-7));
  }
}

TEST_CASE("pair score matches finite differences of the arm log densities") {
  std::vector<SymmetricPairModel> models = {
      {act(ActionKind::Location), DensityFamily::normal(0.0, 1.4)},
      {act(ActionKind::Scale), DensityFamily::normal(0.0, 1.3)},
      {act(ActionKind::Scale), DensityFamily::gamma(2.3, 1.0)},
      {act(ActionKind::Rate), DensityFamily::exponential(1.0)},
      {act(ActionKind::Rate), DensityFamily::exponential(1.0), PairMode::NonSymmetric},
      {act(ActionKind::Location), DensityFamily::normal(0.0, 1.0), PairMode::Symmetric, 1.7},
  };
  auto pts = probe_grid({{0.4, 2.8}, {0.5, 2.0}, {0.3, 1.8}, {0.6, 2.4}}, 30);
  for (const auto& m : models) {
    for (const auto& p : pts) {
      double psi = p[0], gamma = p[1];
      Point y1 = Point::scalar(p[2]), y0 = Point::scalar(p[3]);
      double got = pair_score_psi(m, psi, gamma, y1, y0);
      CHECK(got == doctest::Approx(fd_pair_score(m, psi, gamma, y1, y0)).epsilon(5e-6));
    }
  }
  SymmetricPairModel rot{act(ActionKind::Rotation2D), DensityFamily::von_mises(0.3, 2.0)};
  for (const auto& p : pts) {
    Point y1 = circ(p[2]), y0 = circ(-p[3]);
    double got = pair_score_psi(rot, p[0], p[1], y1, y0);
    CHECK(got == doctest::Approx(fd_pair_score(rot, p[0], p[1], y1, y0)).epsilon(5e-6));
  }
}

TEST_CASE("score antisymmetry holds for proper pairs and fails one-armed") {
  auto pts = probe_grid({{0.4, 2.8}, {0.5, 2.0}, {0.3, 1.8}, {0.6, 2.4}}, 30);
  std::vector<SymmetricPairModel> proper = {
      {act(ActionKind::Location), DensityFamily::normal(0.0, 1.2)},
      {act(ActionKind::Scale), DensityFamily::gamma(1.9, 1.0)},
      {act(ActionKind::Rate), DensityFamily::exponential(1.0)},
  };
  for (const auto& m : proper) {
    for (const auto& p : pts) {
      double r = score_antisymmetry_residual(m, p[0], p[1], Point::scalar(p[2]),
                                             Point::scalar(p[3]));
      CHECK(std::fabs(r) < 1e-10);
    }
  }
  // pinned probe: exponential pairs at psi=1.3, gamma=0.7, u1=1, u0=2
  CHECK(std::fabs(score_antisymmetry_residual(proper[2], 1.3, 0.7, Point::scalar(1.0),
                                              Point::scalar(2.0))) < 1e-10);
  SymmetricPairModel rot{act(ActionKind::Rotation2D), DensityFamily::von_mises(0.0, 1.6)};
  for (const auto& p : pts) {
    double r = score_antisymmetry_residual(rot, p[0], p[1], circ(p[2]), circ(p[3] + 0.5));
    CHECK(std::fabs(r) < 1e-10);
  }
  SymmetricPairModel ns{act(ActionKind::Rate), DensityFamily::exponential(1.0),
                        PairMode::NonSymmetric};
  for (const auto& p : pts) {
    double r = score_antisymmetry_residual(ns, p[0], p[1], Point::scalar(p[2]),
                                           Point::scalar(p[3]));
    // analytic value: 2/psi - gamma (u1 + u0) / psi
    CHECK(r == doctest::Approx((2.0 - p[1] * (p[2] + p[3])) / p[0]).epsilon(1e-8));
  }
}

TEST_CASE("standardization round trip") {
  auto pts = probe_grid({{0.4, 2.8}, {0.3, 2.2}}, 200);
  std::vector<SymmetricPairModel> models = {
      {act(ActionKind::Scale), DensityFamily::gamma(2.0, 1.0)},
      {act(ActionKind::Rate), DensityFamily::exponential(1.0), PairMode::NonSymmetric},
      {act(ActionKind::Location), DensityFamily::normal(0.0, 1.0), PairMode::Symmetric, 1.4},
  };
  for (const auto& m : models) {
    for (const auto& p : pts) {
      Point u = Point::scalar(p[1]);
      CHECK(standardize1(m, p[0], destandardize1(m, p[0], u)).x ==
            doctest::Approx(u.x).epsilon(1e-12));
      CHECK(standardize0(m, p[0], destandardize0(m, p[0], u)).x ==
            doctest::Approx(u.x).epsilon(1e-12));
    }
  }
}
