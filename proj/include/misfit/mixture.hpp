#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "misfit/families.hpp"
#include "misfit/group.hpp"
#include "misfit/rng.hpp"

namespace misfit {

// One observed unit: a pair (y1, y0), with replication counts for stratum
// problems where y_j is the sufficient statistic of r_j underlying
// observations (minimum of r_j exponentials, sum of r_j Poisson counts).
// Plain matched pairs use r1 = r0 = 1.
struct PairRecord {
  Point y1;
  Point y0;
  double r1 = 1.0;
  double r0 = 1.0;

  static PairRecord scalars(double a, double b, double c1 = 1.0, double c0 = 1.0) {
    return {Point::scalar(a), Point::scalar(b), c1, c0};
  }
};

enum class PairKind {
  GroupPair,       // arms generated by a SymmetricPairModel acting on f_U
  PoissonStratum,  // counts s1 ~ Poi(r1*gamma*e^theta), s0 ~ Poi(r0*gamma*e^-theta)
};

// Conditional model of one record given the latent effect gamma; the interest
// parameter is psi (called theta in the Poisson stratum problem).
struct PairModel {
  PairKind kind = PairKind::GroupPair;
  group::SymmetricPairModel gp;  // GroupPair only
};

// Conditional log density and its derivatives at one record.
struct CondEval {
  double logc = 0.0;
  double dpsi = 0.0;
  double d2psi = 0.0;
  double dgamma = 0.0;
  double d2gamma = 0.0;
  double dpsi_dgamma = 0.0;
};

// with_derivs = false fills logc only
CondEval eval_conditional(const PairModel& pm, double psi, double gamma, const PairRecord& rec,
                          bool with_derivs = true);

// draw one record given gamma (counts taken from proto.r1/r0)
PairRecord sample_conditional(const PairModel& pm, double psi, double gamma,
                              const PairRecord& proto, RngStream& rng);

enum class ClosedForm { ExponentialGamma, PoissonGamma, None };

// How the mixing family's parameters appear as the lambda vector. Natural
// exposes the family's own slots. NuOmega applies to gamma mixing only and
// exposes (nu, omega) with shape = omega, rate = nu*omega, so the mixing mean
// is 1/nu for every omega.
enum class MixingParamStyle { Natural, NuOmega };

struct QuadOptions {
  int initial_nodes = 64;
  int max_nodes = 1024;
  double rel_tol = 1e-9;
};

// The fitted (possibly misspecified) marginal model: conditional pair model
// plus a parametric mixing family over gamma indexed by lambda.
struct AssumedModel {
  PairModel pair;
  DensityFamily mixing = DensityFamily::gamma(1.0, 1.0);
  MixingParamStyle style = MixingParamStyle::Natural;
  bool force_quadrature = false;
  QuadOptions quad;

  ClosedForm closed_form() const;
  int lambda_dim() const;
  Eigen::VectorXd lambda() const;                  // current mixing parameters, in style coords
  DensityFamily mixing_at(const Eigen::VectorXd& lambda) const;
  // true = the coordinate is positive and is optimized on log scale
  std::vector<bool> lambda_log_scale() const;

 private:
  bool pm_base_positive() const;
};

// The data-generating law: the same conditional structure at psi_star with an
// arbitrary mixing law, independent across the records of one block. strata
// lists the replication-count profile of one block; matched pairs use the
// default single (1,1) entry.
struct TrueModel {
  PairModel pair;
  double psi_star = 1.0;
  DensityFamily true_mixing = DensityFamily::lognormal(0.0, 1.0);
  std::vector<std::pair<double, double>> strata = {{1.0, 1.0}};

  PairRecord sample_block_record(size_t j, RngStream& rng) const;  // stratum j of one block
};

// log of the record's marginal (random-effects-integrated) density
double pair_loglik(const AssumedModel& am, double psi, const Eigen::VectorXd& lambda,
                   const PairRecord& rec);

enum class DerivOrder { Gradient, Hessian };

// derivatives of pair_loglik in (psi, lambda); hessian has size 0 unless
// order == Hessian
struct PairDerivs {
  double loglik = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

PairDerivs pair_loglik_grad(const AssumedModel& am, double psi, const Eigen::VectorXd& lambda,
                            const PairRecord& rec, DerivOrder order);

struct ExpectOptions {
  enum class Method { Quadrature, MonteCarlo } method = Method::Quadrature;
  long mc_n = 0;
  std::uint64_t mc_seed = 0;
  int initial_nodes = 16;
  int max_nodes = 1024;
  double rel_tol = 1e-9;

  static ExpectOptions quadrature() { return {}; }
  static ExpectOptions monte_carlo(long n, std::uint64_t seed) {
    ExpectOptions o;
    o.method = Method::MonteCarlo;
    o.mc_n = n;
    o.mc_seed = seed;
    return o;
  }
};

struct ExpectResult {
  double value = 0.0;
  double error = 0.0;
};

struct ExpectVecResult {
  Eigen::VectorXd value;
  Eigen::VectorXd error;
};

// E_m[ sum over block records of f(record) ] with the expectation taken under
// the true model. Quadrature: nested rules (outer over gamma by the mixing
// family's natural rule, inner per arm) doubled until successive levels agree
// to rel_tol; the error field reports the last inter-level change. Monte
// Carlo: mc_n independent blocks with a standard-error estimate.
ExpectResult expect_under_true(const std::function<double(const PairRecord&)>& f,
                               const TrueModel& tm, const ExpectOptions& opts);

// vector version, one sweep for all components
ExpectVecResult expect_vec_under_true(const std::function<Eigen::VectorXd(const PairRecord&)>& f,
                                      int dim, const TrueModel& tm, const ExpectOptions& opts);

}  // namespace misfit
