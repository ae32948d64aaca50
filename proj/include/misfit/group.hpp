#pragma once

#include <utility>

#include "misfit/families.hpp"
#include "misfit/point.hpp"

namespace misfit::group {

enum class ActionKind { Location, Scale, Rate, Rotation2D };
enum class Direction { Forward, Inverse };

struct GroupAction {
  ActionKind kind = ActionKind::Location;
};

// g_psi x. Location adds psi; Scale multiplies by psi; Rate divides by psi;
// Rotation2D rotates by psi counter-clockwise (the result is renormalized to
// the unit circle). Scale and Rate require psi > 0; Rate requires x > 0;
// rotation angles are reduced modulo 2*pi.
Point apply(const GroupAction& a, double psi, const Point& x);

// g_psi^{-1} x
Point invert(const GroupAction& a, double psi, const Point& x);

// |d(g_psi x)/dx| (Forward) or |d(g_psi^{-1} x)/dx| (Inverse)
double jacobian_magnitude(const GroupAction& a, double psi, const Point& x, Direction dir);

enum class PairMode { Symmetric, NonSymmetric };

// Two-arm observation model built from one base density f_U(u; gamma) and a
// group action. In Symmetric mode arm 1 observes g_psi U and arm 0 observes
// g_{arm0_factor * psi}^{-1} U (factor 1 is the proper g/g^{-1} pairing; any
// other value is a deliberately broken control). In NonSymmetric mode arm 1
// observes g_psi U and arm 0 observes U itself, placing the full effect on one
// arm.
struct SymmetricPairModel {
  GroupAction action;
  DensityFamily base = DensityFamily::exponential(1.0);
  PairMode mode = PairMode::Symmetric;
  double arm0_factor = 1.0;
};

// standardized coordinates: u1 = T1^{-1} y1, u0 = T0^{-1} y0 for the model's
// own arm transformations T1, T0
Point standardize1(const SymmetricPairModel& m, double psi, const Point& y1);
Point standardize0(const SymmetricPairModel& m, double psi, const Point& y0);
Point destandardize1(const SymmetricPairModel& m, double psi, const Point& u1);
Point destandardize0(const SymmetricPairModel& m, double psi, const Point& u0);

// log density of each arm's observation given the latent effect
double arm1_log_density(const SymmetricPairModel& m, double psi, double gamma, const Point& y1);
double arm0_log_density(const SymmetricPairModel& m, double psi, double gamma, const Point& y0);

// |f1(y1) f0(y0) - f_U(u1) f_U(u0) J1 J0| with u1 = g^{-1} y1, u0 = g y0 taken
// in the symmetric standardization. Zero (to roundoff) iff the model's joint
// density factorizes through the standardized pair.
double symmetry_residual(const SymmetricPairModel& m, double psi, double gamma, const Point& y1,
                         const Point& y0);

// Raw a(u1, u0) and c(u1, u0): the sum of the psi-derivatives of the
// standardizing maps and the Jacobian cross terms, both by central differences
// of step fd_step. For planar actions the magnitude of the vector is returned.
std::pair<double, double> antisymmetry_values(const SymmetricPairModel& m, double psi,
                                              const Point& u1, const Point& u0,
                                              double fd_step = 1e-6);

// Residuals of the antisymmetry conditions: |a(u1,u0) + a(u0,u1)| and
// |c(u1,u0) + c(u0,u1)|. Both vanish exactly when the two arm transformations
// form a proper g/g^{-1} pair.
std::pair<double, double> antisymmetry_conditions(const SymmetricPairModel& m, double psi,
                                                  const Point& u1, const Point& u0,
                                                  double fd_step = 1e-6);

// grad_psi loglik(psi; gamma, u1, u0) + grad_psi loglik(psi; gamma, u0, u1):
// zero when the conditional pair score is antisymmetric under exchange of the
// standardized observations.
double score_antisymmetry_residual(const SymmetricPairModel& m, double psi, double gamma,
                                   const Point& u1, const Point& u0);

// grad_psi of the conditional pair log likelihood at data (y1, y0)
double pair_score_psi(const SymmetricPairModel& m, double psi, double gamma, const Point& y1,
                      const Point& y0);

}  // namespace misfit::group
