#pragma once

#include <Eigen/Dense>
#include <vector>

#include "misfit/rng.hpp"

namespace misfit {

enum class FamilyKind {
  Exponential,               // {rate}
  Normal,                    // {mean, var}
  Gamma,                     // {shape, rate}
  Poisson,                   // {mean}
  LogNormal,                 // {mlog, slog}
  NegativeBinomialMarginal,  // {size, prob}
  DiscreteAtoms,             // params are the atom weights; support fixed
  PointMass,                 // {location}
  VonMises,                  // {mean_angle, concentration}; observations are angles
};

// One-dimensional density with a named parameter vector. Continuous densities
// are with respect to Lebesgue measure (arc length for VonMises), discrete
// ones with respect to counting measure. The nuisance slot marks which
// parameter plays the role of the latent pair effect when the family is used
// as the base density of a pair model.
class DensityFamily {
 public:
  static DensityFamily exponential(double rate);
  static DensityFamily normal(double mean, double var);
  static DensityFamily gamma(double shape, double rate);
  static DensityFamily poisson(double mean);
  static DensityFamily lognormal(double mlog, double slog);
  static DensityFamily negative_binomial(double size, double prob);
  static DensityFamily discrete_atoms(std::vector<double> points, std::vector<double> weights);
  static DensityFamily point_mass(double location);
  static DensityFamily von_mises(double mean_angle, double concentration);

  FamilyKind kind() const { return kind_; }
  int param_dim() const { return int(par_.size()); }
  Eigen::VectorXd params() const;
  void set_params(const Eigen::VectorXd& p);
  const std::vector<double>& atom_points() const { return atoms_; }

  bool is_discrete() const;

  // index of the latent-effect parameter, -1 if the family has none
  int nuisance_slot() const;
  DensityFamily with_nuisance(double gamma) const;

  double log_density(double y) const;
  Eigen::VectorXd score(double y) const;
  Eigen::MatrixXd param_hessian(double y) const;

  // observation derivatives (continuous families only)
  double dlogf_dy(double y) const;
  double d2logf_dy2(double y) const;
  Eigen::VectorXd dscore_dy(double y) const;

  double sample(RngStream& rng) const;

  double mean() const;
  double variance() const;

 private:
  DensityFamily(FamilyKind kind, std::vector<double> par, std::vector<double> atoms = {});
  void validate() const;

  FamilyKind kind_;
  std::vector<double> par_;
  std::vector<double> atoms_;
};

}  // namespace misfit
