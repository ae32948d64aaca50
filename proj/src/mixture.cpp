#include "misfit/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "misfit/errors.hpp"
#include "misfit/quadrature.hpp"
#include "misfit/special.hpp"

namespace misfit {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kTwoPi = 6.283185307179586477;

using group::ActionKind;
using group::PairMode;
using group::SymmetricPairModel;

bool multiplicative(ActionKind k) { return k == ActionKind::Scale || k == ActionKind::Rate; }

// Exponential-base arms under Scale/Rate actions have conditional rates
// gamma * r_j * c_j(psi); everything downstream needs only c_j and its first
// two psi-derivatives.
struct RateCoeffs {
  double c1, c1p, c1pp;
  double c0, c0p, c0pp;
};

RateCoeffs exp_rate_coeffs(const SymmetricPairModel& gp, double psi) {
  if (!(psi > 0.0)) throw std::invalid_argument("multiplicative action: psi must be positive");
  RateCoeffs rc{};
  double s = gp.arm0_factor;
  bool sym = gp.mode == PairMode::Symmetric;
  if (gp.action.kind == ActionKind::Rate) {
    rc.c1 = psi;
    rc.c1p = 1.0;
    rc.c1pp = 0.0;
    if (sym) {
      rc.c0 = 1.0 / (s * psi);
      rc.c0p = -1.0 / (s * psi * psi);
      rc.c0pp = 2.0 / (s * psi * psi * psi);
    } else {
      rc.c0 = 1.0;
      rc.c0p = rc.c0pp = 0.0;
    }
  } else {  // Scale
    rc.c1 = 1.0 / psi;
    rc.c1p = -1.0 / (psi * psi);
    rc.c1pp = 2.0 / (psi * psi * psi);
    if (sym) {
      rc.c0 = s * psi;
      rc.c0p = s;
      rc.c0pp = 0.0;
    } else {
      rc.c0 = 1.0;
      rc.c0p = rc.c0pp = 0.0;
    }
  }
  return rc;
}

bool exp_fast_path(const PairModel& pm) {
  return pm.kind == PairKind::GroupPair && pm.gp.base.kind() == FamilyKind::Exponential &&
         multiplicative(pm.gp.action.kind);
}

// psi-derivatives of one arm's standardizing map and log-Jacobian, evaluated
// at standardized coordinate u (the angle for Rotation2D)
struct ArmTable {
  double up, upp;      // d u / d psi, d^2 u / d psi^2
  double ljp, ljpp;    // d log J / d psi, d^2 log J / d psi^2
};

ArmTable arm1_table(ActionKind k, double psi, double u) {
  switch (k) {
    case ActionKind::Location: return {-1.0, 0.0, 0.0, 0.0};
    case ActionKind::Scale: return {-u / psi, 2.0 * u / (psi * psi), -1.0 / psi, 1.0 / (psi * psi)};
    case ActionKind::Rate: return {u / psi, 0.0, 1.0 / psi, -1.0 / (psi * psi)};
    case ActionKind::Rotation2D: return {-1.0, 0.0, 0.0, 0.0};
  }
  return {};
}

ArmTable arm0_table(ActionKind k, double psi, double u, double s) {
  switch (k) {
    case ActionKind::Location: return {s, 0.0, 0.0, 0.0};
    case ActionKind::Scale: return {u / psi, 0.0, 1.0 / psi, -1.0 / (psi * psi)};
    case ActionKind::Rate: return {-u / psi, 2.0 * u / (psi * psi), -1.0 / psi, 1.0 / (psi * psi)};
    case ActionKind::Rotation2D: return {s, 0.0, 0.0, 0.0};
  }
  return {};
}

double family_coord(const SymmetricPairModel& gp, const Point& u) {
  return gp.action.kind == ActionKind::Rotation2D ? u.angle() : u.x;
}

}  // namespace

CondEval eval_conditional(const PairModel& pm, double psi, double gamma, const PairRecord& rec,
                          bool with_derivs) {
  CondEval ce;
  if (pm.kind == PairKind::PoissonStratum) {
    if (!(gamma > 0.0)) throw std::invalid_argument("poisson stratum: gamma must be positive");
    double s1 = rec.y1.x, s0 = rec.y0.x;
    double mu1 = rec.r1 * gamma * std::exp(psi);
    double mu0 = rec.r0 * gamma * std::exp(-psi);
    ce.logc = s1 * std::log(mu1) - mu1 - std::lgamma(s1 + 1.0) + s0 * std::log(mu0) - mu0 -
              std::lgamma(s0 + 1.0);
    if (with_derivs) {
      ce.dpsi = (s1 - mu1) - (s0 - mu0);
      ce.d2psi = -mu1 - mu0;
      ce.dgamma = (s1 + s0 - mu1 - mu0) / gamma;
      ce.d2gamma = -(s1 + s0) / (gamma * gamma);
      ce.dpsi_dgamma = (-mu1 + mu0) / gamma;
    }
    return ce;
  }

  const SymmetricPairModel& gp = pm.gp;
  if (exp_fast_path(pm)) {
    if (!(gamma > 0.0)) throw std::invalid_argument("exponential pair: gamma must be positive");
    RateCoeffs rc = exp_rate_coeffs(gp, psi);
    double m1 = rec.r1 * rc.c1, m0 = rec.r0 * rc.c0;
    double y1 = rec.y1.x, y0 = rec.y0.x;
    if (y1 < 0.0 || y0 < 0.0) {
      ce.logc = kNegInf;
      return ce;
    }
    ce.logc = std::log(gamma * m1) - gamma * m1 * y1 + std::log(gamma * m0) - gamma * m0 * y0;
    if (with_derivs) {
      double a = rec.r1 * rc.c1p * y1 + rec.r0 * rc.c0p * y0;
      double ap = rec.r1 * rc.c1pp * y1 + rec.r0 * rc.c0pp * y0;
      ce.dpsi = rc.c1p / rc.c1 + rc.c0p / rc.c0 - gamma * a;
      ce.d2psi = rc.c1pp / rc.c1 - (rc.c1p / rc.c1) * (rc.c1p / rc.c1) + rc.c0pp / rc.c0 -
                 (rc.c0p / rc.c0) * (rc.c0p / rc.c0) - gamma * ap;
      ce.dgamma = 2.0 / gamma - (m1 * y1 + m0 * y0);
      ce.d2gamma = -2.0 / (gamma * gamma);
      ce.dpsi_dgamma = -a;
    }
    return ce;
  }

  if (rec.r1 != 1.0 || rec.r0 != 1.0)
    throw std::invalid_argument("replication counts require an exponential or Poisson model");
  double ld1 = group::arm1_log_density(gp, psi, gamma, rec.y1);
  double ld0 = group::arm0_log_density(gp, psi, gamma, rec.y0);
  ce.logc = ld1 + ld0;
  if (!with_derivs || !std::isfinite(ce.logc)) return ce;

  DensityFamily f = gp.base.with_nuisance(gamma);
  int slot = gp.base.nuisance_slot();
  double u1 = family_coord(gp, group::standardize1(gp, psi, rec.y1));
  double u0 = family_coord(gp, group::standardize0(gp, psi, rec.y0));
  ArmTable t1 = arm1_table(gp.action.kind, psi, u1);
  ArmTable t0{};
  bool arm0_active = gp.mode == PairMode::Symmetric;
  if (arm0_active) t0 = arm0_table(gp.action.kind, psi, u0, gp.arm0_factor);

  double b1 = f.dlogf_dy(u1), b1p = f.d2logf_dy2(u1);
  ce.dpsi = b1 * t1.up + t1.ljp;
  ce.d2psi = b1p * t1.up * t1.up + b1 * t1.upp + t1.ljpp;
  ce.dgamma = f.score(u1)[slot];
  ce.d2gamma = f.param_hessian(u1)(slot, slot);
  ce.dpsi_dgamma = f.dscore_dy(u1)[slot] * t1.up;
  if (arm0_active) {
    double b0 = f.dlogf_dy(u0), b0p = f.d2logf_dy2(u0);
    ce.dpsi += b0 * t0.up + t0.ljp;
    ce.d2psi += b0p * t0.up * t0.up + b0 * t0.upp + t0.ljpp;
    ce.dpsi_dgamma += f.dscore_dy(u0)[slot] * t0.up;
  }
  ce.dgamma += f.score(u0)[slot];
  ce.d2gamma += f.param_hessian(u0)(slot, slot);
  return ce;
}

PairRecord sample_conditional(const PairModel& pm, double psi, double gamma,
                              const PairRecord& proto, RngStream& rng) {
  PairRecord rec = proto;
  if (pm.kind == PairKind::PoissonStratum) {
    rec.y1 = Point::scalar(double(rng.poisson(proto.r1 * gamma * std::exp(psi))));
    rec.y0 = Point::scalar(double(rng.poisson(proto.r0 * gamma * std::exp(-psi))));
    return rec;
  }
  const SymmetricPairModel& gp = pm.gp;
  if (exp_fast_path(pm)) {
    RateCoeffs rc = exp_rate_coeffs(gp, psi);
    rec.y1 = Point::scalar(rng.exponential(gamma * proto.r1 * rc.c1));
    rec.y0 = Point::scalar(rng.exponential(gamma * proto.r0 * rc.c0));
    return rec;
  }
  if (proto.r1 != 1.0 || proto.r0 != 1.0)
    throw std::invalid_argument("replication counts require an exponential or Poisson model");
  DensityFamily f = gp.base.with_nuisance(gamma);
  auto draw = [&]() {
    double v = f.sample(rng);
    return gp.action.kind == ActionKind::Rotation2D
               ? Point::planar(std::cos(v), std::sin(v))
               : Point::scalar(v);
  };
  rec.y1 = group::destandardize1(gp, psi, draw());
  rec.y0 = group::destandardize0(gp, psi, draw());
  return rec;
}

// ---------------------------------------------------------------------------
// assumed-model plumbing

ClosedForm AssumedModel::closed_form() const {
  if (force_quadrature) return ClosedForm::None;
  if (mixing.kind() != FamilyKind::Gamma) return ClosedForm::None;
  if (pair.kind == PairKind::PoissonStratum) return ClosedForm::PoissonGamma;
  if (exp_fast_path(pair)) return ClosedForm::ExponentialGamma;
  return ClosedForm::None;
}

int AssumedModel::lambda_dim() const { return int(mixing.param_dim()); }

Eigen::VectorXd AssumedModel::lambda() const {
  Eigen::VectorXd nat = mixing.params();
  if (style == MixingParamStyle::NuOmega) {
    if (mixing.kind() != FamilyKind::Gamma)
      throw std::invalid_argument("NuOmega style requires gamma mixing");
    Eigen::VectorXd v(2);
    v[1] = nat[0];           // omega = shape
    v[0] = nat[1] / nat[0];  // nu = rate / shape
    return v;
  }
  return nat;
}

DensityFamily AssumedModel::mixing_at(const Eigen::VectorXd& lambda) const {
  DensityFamily f = mixing;
  if (style == MixingParamStyle::NuOmega) {
    if (lambda.size() != 2) throw std::invalid_argument("NuOmega lambda must be (nu, omega)");
    Eigen::VectorXd nat(2);
    nat[0] = lambda[1];              // shape
    nat[1] = lambda[0] * lambda[1];  // rate
    f.set_params(nat);
    return f;
  }
  f.set_params(lambda);
  return f;
}

std::vector<bool> AssumedModel::lambda_log_scale() const {
  switch (mixing.kind()) {
    case FamilyKind::Gamma:
      return {true, true};  // same for Natural (shape, rate) and NuOmega (nu, omega)
    case FamilyKind::LogNormal:
      return {false, true};
    case FamilyKind::PointMass: {
      bool positive = pair.kind == PairKind::PoissonStratum ||
                      pm_base_positive();
      return {positive};
    }
    case FamilyKind::DiscreteAtoms:
      return std::vector<bool>(size_t(lambda_dim()), true);
    default:
      return std::vector<bool>(size_t(lambda_dim()), false);
  }
}

bool AssumedModel::pm_base_positive() const {
  if (pair.kind != PairKind::GroupPair) return true;
  switch (pair.gp.base.kind()) {
    case FamilyKind::Exponential:
    case FamilyKind::Gamma:
      return true;
    default:
      return false;
  }
}

// ---------------------------------------------------------------------------
// closed forms, in the mixing family's natural (shape, rate) coordinates;
// parameter order of the returned derivatives is (psi, shape, rate)

namespace {

PairDerivs gamma_mixture_closed(double lp_const, double a_coef, double ap_coef, double lc1,
                                double lc0, double shape2_shift, double shape, double rate,
                                double Q, double dQdpsi, double d2Qdpsi2, DerivOrder order) {
  // shared skeleton of both closed forms:
  //   loglik = lp_const + lc1 + lc0 + lgamma(shape + k) - lgamma(shape)
  //            + shape*log(rate) - (shape + k)*log(Q)
  // with k = shape2_shift, Q containing `rate` additively and dQ/dpsi given.
  double k = shape2_shift;
  PairDerivs pd;
  pd.loglik = lp_const + lc1 + lc0 + std::lgamma(shape + k) - std::lgamma(shape) +
              shape * std::log(rate) - (shape + k) * std::log(Q);
  pd.gradient.resize(3);
  pd.gradient[0] = a_coef - (shape + k) * dQdpsi / Q;
  pd.gradient[1] = digamma(shape + k) - digamma(shape) + std::log(rate) - std::log(Q);
  pd.gradient[2] = shape / rate - (shape + k) / Q;
  if (order == DerivOrder::Hessian) {
    pd.hessian.resize(3, 3);
    pd.hessian(0, 0) = ap_coef - (shape + k) * (d2Qdpsi2 * Q - dQdpsi * dQdpsi) / (Q * Q);
    pd.hessian(1, 1) = trigamma(shape + k) - trigamma(shape);
    pd.hessian(2, 2) = -shape / (rate * rate) + (shape + k) / (Q * Q);
    pd.hessian(0, 1) = pd.hessian(1, 0) = -dQdpsi / Q;
    pd.hessian(0, 2) = pd.hessian(2, 0) = (shape + k) * dQdpsi / (Q * Q);
    pd.hessian(1, 2) = pd.hessian(2, 1) = 1.0 / rate - 1.0 / Q;
  }
  return pd;
}

PairDerivs expgamma_closed(const AssumedModel& am, double psi, const DensityFamily& mix,
                           const PairRecord& rec, DerivOrder order) {
  RateCoeffs rc = exp_rate_coeffs(am.pair.gp, psi);
  double shape = mix.params()[0], rate = mix.params()[1];
  double m1 = rec.r1 * rc.c1, m0 = rec.r0 * rc.c0;
  double Q = m1 * rec.y1.x + m0 * rec.y0.x + rate;
  double dQ = rec.r1 * rc.c1p * rec.y1.x + rec.r0 * rc.c0p * rec.y0.x;
  double d2Q = rec.r1 * rc.c1pp * rec.y1.x + rec.r0 * rc.c0pp * rec.y0.x;
  double a_coef = rc.c1p / rc.c1 + rc.c0p / rc.c0;
  double ap_coef = rc.c1pp / rc.c1 - (rc.c1p / rc.c1) * (rc.c1p / rc.c1) + rc.c0pp / rc.c0 -
                   (rc.c0p / rc.c0) * (rc.c0p / rc.c0);
  return gamma_mixture_closed(0.0, a_coef, ap_coef, std::log(m1), std::log(m0), 2.0, shape, rate,
                              Q, dQ, d2Q, order);
}

PairDerivs poissongamma_closed(double theta, const DensityFamily& mix, const PairRecord& rec,
                               DerivOrder order) {
  double shape = mix.params()[0], rate = mix.params()[1];
  double s1 = rec.y1.x, s0 = rec.y0.x, s = s1 + s0, d = s1 - s0;
  double e1 = rec.r1 * std::exp(theta), e0 = rec.r0 * std::exp(-theta);
  double r = e1 + e0, rp = e1 - e0;
  double Q = r + rate;
  double lp = theta * d + s1 * std::log(rec.r1) + s0 * std::log(rec.r0) - std::lgamma(s1 + 1.0) -
              std::lgamma(s0 + 1.0);
  // a_coef carries the psi-derivative of the Q-free part: d/dtheta (theta d) = d
  PairDerivs pd = gamma_mixture_closed(lp, d, 0.0, 0.0, 0.0, s, shape, rate, Q, rp, r, order);
  return pd;
}

// pullback of gradient/hessian from natural (psi, shape, rate) coordinates to
// (psi, nu, omega) with shape = omega, rate = nu*omega
PairDerivs to_nu_omega(PairDerivs pd, const Eigen::VectorXd& lambda) {
  double nu = lambda[0], omega = lambda[1];
  Eigen::Matrix3d J = Eigen::Matrix3d::Zero();
  J(0, 0) = 1.0;
  J(1, 2) = 1.0;    // d shape / d omega
  J(2, 1) = omega;  // d rate / d nu
  J(2, 2) = nu;     // d rate / d omega
  Eigen::Vector3d g = pd.gradient;
  pd.gradient = J.transpose() * g;
  if (pd.hessian.size() > 0) {
    Eigen::Matrix3d h = J.transpose() * pd.hessian * J;
    h(1, 2) += g[2];  // second derivative of rate = nu*omega
    h(2, 1) += g[2];
    pd.hessian = h;
  }
  return pd;
}

}  // namespace

// ---------------------------------------------------------------------------
// quadrature-backed marginal

namespace {

struct MixRule {
  std::vector<double> gamma;
  std::vector<double> lognu;
  bool exact = false;
};

// Trapezoid rule for a Gamma(a, b) density in t = log(gamma), where the
// density is exp(a t - b e^t) b^a / Gamma(a): entire in t, so the rule
// converges geometrically even for integrands carrying log(gamma) factors
// (the mixing score), which defeat Gauss-Laguerre at the gamma = 0 endpoint.
// decay >= 0 is the integrand's own exponential decay rate in gamma and only
// narrows the window on the right.
MixRule gamma_log_rule(double a, double b, int n, double decay) {
  double big = b + std::max(decay, 0.0);
  double tstar = std::log(a / big);
  const double drop = 60.0;
  double t_lo = tstar - (drop + a) / a;
  double t_hi = tstar + 3.0;
  for (int it = 0; it < 40; ++it)
    t_hi = std::log((drop + a + a * std::max(t_hi - tstar, 0.0)) / big);
  MixRule mr;
  double step = (t_hi - t_lo) / (n - 1);
  double lead = std::log(step) + a * std::log(b) - std::lgamma(a);
  for (int i = 0; i < n; ++i) {
    double t = t_lo + i * step;
    double g = std::exp(t);
    mr.gamma.push_back(g);
    mr.lognu.push_back(lead + a * t - b * g);
  }
  return mr;
}

MixRule mixing_rule(const DensityFamily& mix, int n, double tau) {
  MixRule mr;
  switch (mix.kind()) {
    case FamilyKind::Gamma: {
      double a = mix.params()[0], b = mix.params()[1];
      double beta = b + std::max(tau, 0.0);
      auto q = gauss_laguerre(n, a - 1.0);
      double lead = a * std::log(b / beta) - std::lgamma(a);
      for (long i = 0; i < q.x.size(); ++i) {
        if (std::isinf(q.logw[i])) continue;
        double g = q.x[i] / beta;
        mr.gamma.push_back(g);
        mr.lognu.push_back(q.logw[i] + (beta - b) * g + lead);
      }
      return mr;
    }
    case FamilyKind::LogNormal: {
      double m = mix.params()[0], s = mix.params()[1];
      const auto& q = gauss_hermite(n);
      double lead = -0.5 * std::log(3.141592653589793238);
      for (long i = 0; i < q.x.size(); ++i) {
        if (std::isinf(q.logw[i])) continue;
        mr.gamma.push_back(std::exp(m + std::sqrt(2.0) * s * q.x[i]));
        mr.lognu.push_back(q.logw[i] + lead);
      }
      return mr;
    }
    case FamilyKind::DiscreteAtoms: {
      const auto& pts = mix.atom_points();
      Eigen::VectorXd w = mix.params();
      for (size_t j = 0; j < pts.size(); ++j) {
        mr.gamma.push_back(pts[j]);
        mr.lognu.push_back(std::log(w[long(j)]));
      }
      mr.exact = true;
      return mr;
    }
    case FamilyKind::PointMass:
      mr.gamma.push_back(mix.params()[0]);
      mr.lognu.push_back(0.0);
      mr.exact = true;
      return mr;
    default:
      throw std::invalid_argument("unsupported mixing family");
  }
}

struct MarginalEval {
  PairDerivs pd;
  bool finite = true;
};

// one fixed-rule evaluation of the marginal and its derivatives; mixing-side
// lambda derivatives enter through the mixing family's own score/hessian at
// the nodes, interest-side ones through the conditional derivatives
MarginalEval marginal_at_level(const AssumedModel& am, double psi, const DensityFamily& mix,
                               const PairRecord& rec, DerivOrder order, bool want_derivs, int n) {
  bool point_mass = mix.kind() == FamilyKind::PointMass;
  double tau = 0.0;
  if (mix.kind() == FamilyKind::Gamma) {
    double gbar = mix.params()[0] / mix.params()[1];
    tau = std::max(0.0, -eval_conditional(am.pair, psi, gbar, rec, true).dgamma);
  }
  // The gamma-mixing score carries a log(gamma) term that ruins Gauss-Laguerre
  // convergence at the origin whenever the conditional density does not vanish
  // there, so the derivative path integrates in log space instead.
  MixRule mr = want_derivs && mix.kind() == FamilyKind::Gamma
                   ? gamma_log_rule(mix.params()[0], mix.params()[1], n, tau)
                   : mixing_rule(mix, n, tau);
  size_t m = mr.gamma.size();
  std::vector<CondEval> ce(m);
  std::vector<double> logt(m);
  double logM = kNegInf;
  for (size_t k = 0; k < m; ++k) {
    ce[k] = eval_conditional(am.pair, psi, mr.gamma[k], rec, want_derivs);
    logt[k] = mr.lognu[k] + ce[k].logc;
    if (logt[k] > logM) logM = logt[k];
  }
  MarginalEval me;
  if (std::isinf(logM)) {
    me.finite = false;
    me.pd.loglik = kNegInf;
    return me;
  }
  double acc = 0.0;
  for (size_t k = 0; k < m; ++k) acc += std::exp(logt[k] - logM);
  logM += std::log(acc);
  me.pd.loglik = logM;
  if (!want_derivs) return me;

  int p = 1 + (point_mass ? 1 : int(mix.param_dim()));
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd hraw = Eigen::MatrixXd::Zero(p, p);
  for (size_t k = 0; k < m; ++k) {
    double t = std::exp(logt[k] - logM);
    if (t == 0.0) continue;
    Eigen::VectorXd d(p);
    d[0] = ce[k].dpsi;
    Eigen::MatrixXd dd = Eigen::MatrixXd::Zero(p, p);
    dd(0, 0) = ce[k].d2psi;
    if (point_mass) {
      d[1] = ce[k].dgamma;
      dd(1, 1) = ce[k].d2gamma;
      dd(0, 1) = dd(1, 0) = ce[k].dpsi_dgamma;
    } else {
      Eigen::VectorXd s = mix.score(mr.gamma[k]);
      Eigen::MatrixXd hs = mix.param_hessian(mr.gamma[k]);
      d.tail(p - 1) = s;
      dd.bottomRightCorner(p - 1, p - 1) = hs;
    }
    grad += t * d;
    hraw += t * (dd + d * d.transpose());
  }
  me.pd.gradient = grad;
  if (order == DerivOrder::Hessian) me.pd.hessian = hraw - grad * grad.transpose();
  return me;
}

PairDerivs quad_marginal(const AssumedModel& am, double psi, const DensityFamily& mix,
                         const PairRecord& rec, DerivOrder order, bool want_derivs) {
  bool exact = mix.kind() == FamilyKind::PointMass || mix.kind() == FamilyKind::DiscreteAtoms;
  int n = am.quad.initial_nodes;
  MarginalEval prev = marginal_at_level(am, psi, mix, rec, order, want_derivs, n);
  if (!prev.finite) throw NumericalError("marginal density vanished at every quadrature node");
  if (exact) return prev.pd;
  double resid = std::numeric_limits<double>::infinity();
  while (n < am.quad.max_nodes) {
    n *= 2;
    MarginalEval cur = marginal_at_level(am, psi, mix, rec, order, want_derivs, n);
    if (!cur.finite) throw NumericalError("marginal density vanished at every quadrature node");
    resid = std::fabs(cur.pd.loglik - prev.pd.loglik) /
            std::max(1.0, std::fabs(cur.pd.loglik));
    if (want_derivs) {
      for (long i = 0; i < cur.pd.gradient.size(); ++i) {
        double d = std::fabs(cur.pd.gradient[i] - prev.pd.gradient[i]) /
                   std::max(1.0, std::fabs(cur.pd.gradient[i]));
        resid = std::max(resid, d);
      }
      if (order == DerivOrder::Hessian) {
        for (long i = 0; i < cur.pd.hessian.size(); ++i) {
          double d = std::fabs(cur.pd.hessian(i) - prev.pd.hessian(i)) /
                     std::max(1.0, std::fabs(cur.pd.hessian(i)));
          resid = std::max(resid, d);
        }
      }
    }
    prev = cur;
    if (resid < am.quad.rel_tol) return prev.pd;
  }
  throw NumericalError("marginal quadrature did not converge; last relative change " +
                       std::to_string(resid));
}

}  // namespace

double pair_loglik(const AssumedModel& am, double psi, const Eigen::VectorXd& lambda,
                   const PairRecord& rec) {
  DensityFamily mix = am.mixing_at(lambda);
  switch (am.closed_form()) {
    case ClosedForm::ExponentialGamma:
      return expgamma_closed(am, psi, mix, rec, DerivOrder::Gradient).loglik;
    case ClosedForm::PoissonGamma:
      return poissongamma_closed(psi, mix, rec, DerivOrder::Gradient).loglik;
    case ClosedForm::None:
      return quad_marginal(am, psi, mix, rec, DerivOrder::Gradient, false).loglik;
  }
  return kNegInf;
}

PairDerivs pair_loglik_grad(const AssumedModel& am, double psi, const Eigen::VectorXd& lambda,
                            const PairRecord& rec, DerivOrder order) {
  DensityFamily mix = am.mixing_at(lambda);
  PairDerivs pd;
  switch (am.closed_form()) {
    case ClosedForm::ExponentialGamma:
      pd = expgamma_closed(am, psi, mix, rec, order);
      break;
    case ClosedForm::PoissonGamma:
      pd = poissongamma_closed(psi, mix, rec, order);
      break;
    case ClosedForm::None:
      pd = quad_marginal(am, psi, mix, rec, order, true);
      break;
  }
  if (am.style == MixingParamStyle::NuOmega) pd = to_nu_omega(std::move(pd), lambda);
  return pd;
}

// ---------------------------------------------------------------------------
// expectations under the true model

namespace {

struct ArmRule {
  std::vector<Point> y;
  std::vector<double> lognu;
  bool exact = false;
};

ArmRule exp_stat_rule(double rate, int n) {
  ArmRule ar;
  auto q = gauss_laguerre(n, 0.0);
  for (long i = 0; i < q.x.size(); ++i) {
    if (std::isinf(q.logw[i])) continue;
    ar.y.push_back(Point::scalar(q.x[i] / rate));
    ar.lognu.push_back(q.logw[i]);
  }
  return ar;
}

ArmRule poisson_rule(double mean) {
  ArmRule ar;
  ar.exact = true;
  double lp = -mean;  // log pmf at 0
  double mass = 0.0;
  long k = 0;
  while (mass < 1.0 - 1e-12) {
    ar.y.push_back(Point::scalar(double(k)));
    ar.lognu.push_back(lp);
    mass += std::exp(lp);
    ++k;
    lp += std::log(mean) - std::log(double(k));
    if (k > 2000000) throw NumericalError("poisson series truncation ran away");
  }
  return ar;
}

// expectation rule for one arm's observation: family-matched nodes in the
// standardized coordinate, pushed through the arm's map
ArmRule group_arm_rule(const SymmetricPairModel& gp, int arm, double psi, double gamma, int n) {
  DensityFamily f = gp.base.with_nuisance(gamma);
  ArmRule ar;
  auto push = [&](double u_coord, double lw) {
    Point u = gp.action.kind == ActionKind::Rotation2D
                  ? Point::planar(std::cos(u_coord), std::sin(u_coord))
                  : Point::scalar(u_coord);
    ar.y.push_back(arm == 1 ? group::destandardize1(gp, psi, u)
                            : group::destandardize0(gp, psi, u));
    ar.lognu.push_back(lw);
  };
  switch (f.kind()) {
    case FamilyKind::Exponential: {
      auto q = gauss_laguerre(n, 0.0);
      double rate = f.params()[0];
      for (long i = 0; i < q.x.size(); ++i)
        if (!std::isinf(q.logw[i])) push(q.x[i] / rate, q.logw[i]);
      return ar;
    }
    case FamilyKind::Gamma: {
      double a = f.params()[0], b = f.params()[1];
      auto q = gauss_laguerre(n, a - 1.0);
      for (long i = 0; i < q.x.size(); ++i)
        if (!std::isinf(q.logw[i])) push(q.x[i] / b, q.logw[i] - std::lgamma(a));
      return ar;
    }
    case FamilyKind::Normal: {
      double mu = f.params()[0], v = f.params()[1];
      const auto& q = gauss_hermite(n);
      double lead = -0.5 * std::log(3.141592653589793238);
      for (long i = 0; i < q.x.size(); ++i)
        if (!std::isinf(q.logw[i])) push(mu + std::sqrt(2.0 * v) * q.x[i], q.logw[i] + lead);
      return ar;
    }
    case FamilyKind::VonMises: {
      // trapezoid on the circle: spectrally accurate for periodic integrands
      double step = kTwoPi / n;
      for (int i = 0; i < n; ++i) {
        double th = i * step;
        push(th, std::log(step) + f.log_density(th));
      }
      return ar;
    }
    default:
      throw std::invalid_argument("no expectation rule for this base family");
  }
}

Eigen::VectorXd conditional_expectation(const std::function<Eigen::VectorXd(const PairRecord&)>& f,
                                        int dim, const PairModel& pm, double psi, double gamma,
                                        const PairRecord& proto, int n, bool& exact) {
  ArmRule a1, a0;
  if (pm.kind == PairKind::PoissonStratum) {
    a1 = poisson_rule(proto.r1 * gamma * std::exp(psi));
    a0 = poisson_rule(proto.r0 * gamma * std::exp(-psi));
  } else if (exp_fast_path(pm)) {
    RateCoeffs rc = exp_rate_coeffs(pm.gp, psi);
    a1 = exp_stat_rule(gamma * proto.r1 * rc.c1, n);
    a0 = exp_stat_rule(gamma * proto.r0 * rc.c0, n);
  } else {
    a1 = group_arm_rule(pm.gp, 1, psi, gamma, n);
    a0 = group_arm_rule(pm.gp, 0, psi, gamma, n);
  }
  exact = a1.exact && a0.exact;
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(dim);
  PairRecord rec = proto;
  for (size_t i = 0; i < a1.y.size(); ++i) {
    for (size_t j = 0; j < a0.y.size(); ++j) {
      double w = std::exp(a1.lognu[i] + a0.lognu[j]);
      if (w == 0.0) continue;
      rec.y1 = a1.y[i];
      rec.y0 = a0.y[j];
      acc += w * f(rec);
    }
  }
  return acc;
}

Eigen::VectorXd block_expectation_at_level(
    const std::function<Eigen::VectorXd(const PairRecord&)>& f, int dim, const TrueModel& tm,
    int n, bool& exact) {
  Eigen::VectorXd total = Eigen::VectorXd::Zero(dim);
  exact = true;
  for (const auto& [r1, r0] : tm.strata) {
    PairRecord proto;
    proto.r1 = r1;
    proto.r0 = r0;
    // log-space rule for gamma truths: expectation integrands routinely carry
    // log(gamma) through assumed-model scores
    MixRule mr = tm.true_mixing.kind() == FamilyKind::Gamma
                     ? gamma_log_rule(tm.true_mixing.params()[0], tm.true_mixing.params()[1], n,
                                      0.0)
                     : mixing_rule(tm.true_mixing, n, 0.0);
    Eigen::VectorXd stratum = Eigen::VectorXd::Zero(dim);
    bool inner_exact_all = true;
    for (size_t k = 0; k < mr.gamma.size(); ++k) {
      bool inner_exact = false;
      Eigen::VectorXd inner = conditional_expectation(f, dim, tm.pair, tm.psi_star, mr.gamma[k],
                                                      proto, n, inner_exact);
      inner_exact_all = inner_exact_all && inner_exact;
      stratum += std::exp(mr.lognu[k]) * inner;
    }
    total += stratum;
    exact = exact && mr.exact && inner_exact_all;
  }
  return total;
}

}  // namespace

PairRecord TrueModel::sample_block_record(size_t j, RngStream& rng) const {
  if (j >= strata.size()) throw std::invalid_argument("stratum index out of range");
  double g = true_mixing.sample(rng);
  PairRecord proto;
  proto.r1 = strata[j].first;
  proto.r0 = strata[j].second;
  return sample_conditional(pair, psi_star, g, proto, rng);
}

ExpectVecResult expect_vec_under_true(const std::function<Eigen::VectorXd(const PairRecord&)>& f,
                                      int dim, const TrueModel& tm, const ExpectOptions& opts) {
  if (dim <= 0) throw std::invalid_argument("expectation dimension must be positive");
  ExpectVecResult res;
  if (opts.method == ExpectOptions::Method::MonteCarlo) {
    if (opts.mc_n <= 0) throw std::invalid_argument("MonteCarlo draws must be positive");
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd sum2 = Eigen::VectorXd::Zero(dim);
    for (long i = 0; i < opts.mc_n; ++i) {
      RngStream rng(opts.mc_seed, std::uint64_t(i));
      Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
      for (size_t j = 0; j < tm.strata.size(); ++j) v += f(tm.sample_block_record(j, rng));
      sum += v;
      sum2 += v.cwiseProduct(v);
    }
    res.value = sum / double(opts.mc_n);
    Eigen::VectorXd var =
        (sum2 / double(opts.mc_n) - res.value.cwiseProduct(res.value)).cwiseMax(0.0);
    res.error = (var / double(opts.mc_n)).cwiseSqrt();
    return res;
  }

  int n = opts.initial_nodes;
  bool exact = false;
  Eigen::VectorXd prev = block_expectation_at_level(f, dim, tm, n, exact);
  if (exact) {
    res.value = prev;
    res.error = Eigen::VectorXd::Zero(dim);
    return res;
  }
  Eigen::VectorXd err = Eigen::VectorXd::Constant(dim, std::numeric_limits<double>::infinity());
  while (n < opts.max_nodes) {
    n *= 2;
    Eigen::VectorXd cur = block_expectation_at_level(f, dim, tm, n, exact);
    err = (cur - prev).cwiseAbs();
    prev = cur;
    bool ok = true;
    for (int i = 0; i < dim; ++i) {
      if (err[i] > opts.rel_tol * std::max(1.0, std::fabs(cur[i]))) ok = false;
    }
    if (ok) {
      res.value = prev;
      res.error = err;
      return res;
    }
  }
  throw NumericalError("nested expectation did not converge; worst remaining change " +
                       std::to_string(err.maxCoeff()));
}

ExpectResult expect_under_true(const std::function<double(const PairRecord&)>& f,
                               const TrueModel& tm, const ExpectOptions& opts) {
  auto fv = [&](const PairRecord& r) {
    Eigen::VectorXd v(1);
    v[0] = f(r);
    return v;
  };
  ExpectVecResult vr = expect_vec_under_true(fv, 1, tm, opts);
  return {vr.value[0], vr.error[0]};
}

}  // namespace misfit
