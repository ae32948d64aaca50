#include "misfit/families.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "misfit/special.hpp"

namespace misfit {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kTwoPi = 6.283185307179586477;

double bessel_ratio(double kappa) {
  // A(kappa) = I1/I0
  return std::cyl_bessel_i(1.0, kappa) / std::cyl_bessel_i(0.0, kappa);
}

bool near(double a, double b) { return std::fabs(a - b) <= 1e-12 * (1.0 + std::fabs(b)); }

}  // namespace

DensityFamily::DensityFamily(FamilyKind kind, std::vector<double> par, std::vector<double> atoms)
    : kind_(kind), par_(std::move(par)), atoms_(std::move(atoms)) {
  validate();
}

DensityFamily DensityFamily::exponential(double rate) { return {FamilyKind::Exponential, {rate}}; }
DensityFamily DensityFamily::normal(double mean, double var) { return {FamilyKind::Normal, {mean, var}}; }
DensityFamily DensityFamily::gamma(double shape, double rate) { return {FamilyKind::Gamma, {shape, rate}}; }
DensityFamily DensityFamily::poisson(double mean) { return {FamilyKind::Poisson, {mean}}; }
DensityFamily DensityFamily::lognormal(double mlog, double slog) { return {FamilyKind::LogNormal, {mlog, slog}}; }
DensityFamily DensityFamily::negative_binomial(double size, double prob) {
  return {FamilyKind::NegativeBinomialMarginal, {size, prob}};
}
DensityFamily DensityFamily::discrete_atoms(std::vector<double> points, std::vector<double> weights) {
  return {FamilyKind::DiscreteAtoms, std::move(weights), std::move(points)};
}
DensityFamily DensityFamily::point_mass(double location) { return {FamilyKind::PointMass, {location}}; }
DensityFamily DensityFamily::von_mises(double mean_angle, double concentration) {
  return {FamilyKind::VonMises, {mean_angle, concentration}};
}

void DensityFamily::validate() const {
  for (double p : par_) {
    if (!std::isfinite(p)) throw std::invalid_argument("family parameter not finite");
  }
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0)) throw std::invalid_argument(std::string(what) + " must be positive");
  };
  switch (kind_) {
    case FamilyKind::Exponential:
      positive(par_[0], "exponential rate");
      break;
    case FamilyKind::Normal:
      positive(par_[1], "normal variance");
      break;
    case FamilyKind::Gamma:
      positive(par_[0], "gamma shape");
      positive(par_[1], "gamma rate");
      break;
    case FamilyKind::Poisson:
      positive(par_[0], "poisson mean");
      break;
    case FamilyKind::LogNormal:
      positive(par_[1], "lognormal log-sd");
      break;
    case FamilyKind::NegativeBinomialMarginal:
      positive(par_[0], "negative binomial size");
      if (!(par_[1] > 0.0 && par_[1] < 1.0))
        throw std::invalid_argument("negative binomial prob must lie in (0,1)");
      break;
    case FamilyKind::DiscreteAtoms: {
      if (atoms_.empty() || atoms_.size() != par_.size())
        throw std::invalid_argument("discrete atoms: points and weights must match");
      double total = 0.0;
      for (double w : par_) {
        positive(w, "atom weight");
        total += w;
      }
      if (std::fabs(total - 1.0) > 1e-9)
        throw std::invalid_argument("discrete atoms: weights must sum to 1");
      break;
    }
    case FamilyKind::PointMass:
      break;
    case FamilyKind::VonMises:
      positive(par_[1], "von Mises concentration");
      break;
  }
}

Eigen::VectorXd DensityFamily::params() const {
  return Eigen::Map<const Eigen::VectorXd>(par_.data(), long(par_.size()));
}

void DensityFamily::set_params(const Eigen::VectorXd& p) {
  if (p.size() != long(par_.size())) throw std::invalid_argument("parameter dimension mismatch");
  for (long i = 0; i < p.size(); ++i) par_[size_t(i)] = p[i];
  validate();
}

bool DensityFamily::is_discrete() const {
  switch (kind_) {
    case FamilyKind::Poisson:
    case FamilyKind::NegativeBinomialMarginal:
    case FamilyKind::DiscreteAtoms:
    case FamilyKind::PointMass:
      return true;
    default:
      return false;
  }
}

int DensityFamily::nuisance_slot() const {
  switch (kind_) {
    case FamilyKind::Exponential: return 0;  // rate
    case FamilyKind::Normal: return 0;       // mean
    case FamilyKind::Gamma: return 1;        // rate
    case FamilyKind::VonMises: return 0;     // mean angle
    default: return -1;
  }
}

DensityFamily DensityFamily::with_nuisance(double gamma) const {
  int slot = nuisance_slot();
  if (slot < 0) throw std::invalid_argument("family has no nuisance slot");
  DensityFamily f = *this;
  f.par_[size_t(slot)] = gamma;
  f.validate();
  return f;
}

double DensityFamily::log_density(double y) const {
  switch (kind_) {
    case FamilyKind::Exponential: {
      double r = par_[0];
      return y < 0.0 ? kNegInf : std::log(r) - r * y;
    }
    case FamilyKind::Normal: {
      double d = y - par_[0];
      return -0.5 * std::log(kTwoPi * par_[1]) - d * d / (2.0 * par_[1]);
    }
    case FamilyKind::Gamma: {
      double k = par_[0], r = par_[1];
      if (y <= 0.0) return kNegInf;
      return k * std::log(r) - std::lgamma(k) + (k - 1.0) * std::log(y) - r * y;
    }
    case FamilyKind::Poisson: {
      double mu = par_[0];
      if (y < 0.0 || near(y, std::round(y)) == false) return kNegInf;
      return y * std::log(mu) - mu - std::lgamma(y + 1.0);
    }
    case FamilyKind::LogNormal: {
      if (y <= 0.0) return kNegInf;
      double s = par_[1], d = std::log(y) - par_[0];
      return -std::log(y) - std::log(s) - 0.5 * std::log(kTwoPi) - d * d / (2.0 * s * s);
    }
    case FamilyKind::NegativeBinomialMarginal: {
      double n = par_[0], p = par_[1];
      if (y < 0.0 || near(y, std::round(y)) == false) return kNegInf;
      return std::lgamma(y + n) - std::lgamma(n) - std::lgamma(y + 1.0) + n * std::log(p) +
             y * std::log1p(-p);
    }
    case FamilyKind::DiscreteAtoms: {
      for (size_t j = 0; j < atoms_.size(); ++j) {
        if (near(y, atoms_[j])) return std::log(par_[j]);
      }
      return kNegInf;
    }
    case FamilyKind::PointMass:
      return near(y, par_[0]) ? 0.0 : kNegInf;
    case FamilyKind::VonMises: {
      double k = par_[1];
      return k * std::cos(y - par_[0]) - std::log(kTwoPi * std::cyl_bessel_i(0.0, k));
    }
  }
  return kNegInf;
}

Eigen::VectorXd DensityFamily::score(double y) const {
  Eigen::VectorXd g(param_dim());
  switch (kind_) {
    case FamilyKind::Exponential:
      g[0] = 1.0 / par_[0] - y;
      break;
    case FamilyKind::Normal: {
      double v = par_[1], d = y - par_[0];
      g[0] = d / v;
      g[1] = -0.5 / v + d * d / (2.0 * v * v);
      break;
    }
    case FamilyKind::Gamma: {
      double k = par_[0], r = par_[1];
      g[0] = std::log(r) - digamma(k) + std::log(y);
      g[1] = k / r - y;
      break;
    }
    case FamilyKind::Poisson:
      g[0] = y / par_[0] - 1.0;
      break;
    case FamilyKind::LogNormal: {
      double s = par_[1], d = std::log(y) - par_[0];
      g[0] = d / (s * s);
      g[1] = -1.0 / s + d * d / (s * s * s);
      break;
    }
    case FamilyKind::NegativeBinomialMarginal: {
      double n = par_[0], p = par_[1];
      g[0] = digamma(y + n) - digamma(n) + std::log(p);
      g[1] = n / p - y / (1.0 - p);
      break;
    }
    case FamilyKind::DiscreteAtoms: {
      g.setZero();
      for (size_t j = 0; j < atoms_.size(); ++j) {
        if (near(y, atoms_[j])) g[long(j)] = 1.0 / par_[j];
      }
      break;
    }
    case FamilyKind::PointMass:
      g[0] = 0.0;
      break;
    case FamilyKind::VonMises: {
      double k = par_[1], d = y - par_[0];
      g[0] = k * std::sin(d);
      g[1] = std::cos(d) - bessel_ratio(k);
      break;
    }
  }
  return g;
}

Eigen::MatrixXd DensityFamily::param_hessian(double y) const {
  int p = param_dim();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(p, p);
  switch (kind_) {
    case FamilyKind::Exponential:
      h(0, 0) = -1.0 / (par_[0] * par_[0]);
      break;
    case FamilyKind::Normal: {
      double v = par_[1], d = y - par_[0];
      h(0, 0) = -1.0 / v;
      h(0, 1) = h(1, 0) = -d / (v * v);
      h(1, 1) = 0.5 / (v * v) - d * d / (v * v * v);
      break;
    }
    case FamilyKind::Gamma: {
      double k = par_[0], r = par_[1];
      h(0, 0) = -trigamma(k);
      h(0, 1) = h(1, 0) = 1.0 / r;
      h(1, 1) = -k / (r * r);
      break;
    }
    case FamilyKind::Poisson:
      h(0, 0) = -y / (par_[0] * par_[0]);
      break;
    case FamilyKind::LogNormal: {
      double s = par_[1], d = std::log(y) - par_[0];
      h(0, 0) = -1.0 / (s * s);
      h(0, 1) = h(1, 0) = -2.0 * d / (s * s * s);
      h(1, 1) = 1.0 / (s * s) - 3.0 * d * d / (s * s * s * s);
      break;
    }
    case FamilyKind::NegativeBinomialMarginal: {
      double n = par_[0], p2 = par_[1];
      h(0, 0) = trigamma(y + n) - trigamma(n);
      h(0, 1) = h(1, 0) = 1.0 / p2;
      h(1, 1) = -n / (p2 * p2) - y / ((1.0 - p2) * (1.0 - p2));
      break;
    }
    case FamilyKind::DiscreteAtoms: {
      for (size_t j = 0; j < atoms_.size(); ++j) {
        if (near(y, atoms_[j])) h(long(j), long(j)) = -1.0 / (par_[j] * par_[j]);
      }
      break;
    }
    case FamilyKind::PointMass:
      break;
    case FamilyKind::VonMises: {
      double k = par_[1], d = y - par_[0];
      double A = bessel_ratio(k);
      h(0, 0) = -k * std::cos(d);
      h(0, 1) = h(1, 0) = std::sin(d);
      h(1, 1) = -(1.0 - A / k - A * A);
      break;
    }
  }
  return h;
}

double DensityFamily::dlogf_dy(double y) const {
  switch (kind_) {
    case FamilyKind::Exponential:
      return -par_[0];
    case FamilyKind::Normal:
      return -(y - par_[0]) / par_[1];
    case FamilyKind::Gamma:
      return (par_[0] - 1.0) / y - par_[1];
    case FamilyKind::LogNormal: {
      double s = par_[1], d = std::log(y) - par_[0];
      return -1.0 / y - d / (s * s * y);
    }
    case FamilyKind::VonMises:
      return -par_[1] * std::sin(y - par_[0]);
    default:
      throw std::invalid_argument("observation derivative undefined for discrete family");
  }
}

double DensityFamily::d2logf_dy2(double y) const {
  switch (kind_) {
    case FamilyKind::Exponential:
      return 0.0;
    case FamilyKind::Normal:
      return -1.0 / par_[1];
    case FamilyKind::Gamma:
      return -(par_[0] - 1.0) / (y * y);
    case FamilyKind::LogNormal: {
      double s = par_[1], d = std::log(y) - par_[0];
      return 1.0 / (y * y) + d / (s * s * y * y) - 1.0 / (s * s * y * y);
    }
    case FamilyKind::VonMises:
      return -par_[1] * std::cos(y - par_[0]);
    default:
      throw std::invalid_argument("observation derivative undefined for discrete family");
  }
}

Eigen::VectorXd DensityFamily::dscore_dy(double y) const {
  Eigen::VectorXd g(param_dim());
  switch (kind_) {
    case FamilyKind::Exponential:
      g[0] = -1.0;
      break;
    case FamilyKind::Normal: {
      double v = par_[1];
      g[0] = 1.0 / v;
      g[1] = (y - par_[0]) / (v * v);
      break;
    }
    case FamilyKind::Gamma:
      g[0] = 1.0 / y;
      g[1] = -1.0;
      break;
    case FamilyKind::LogNormal: {
      double s = par_[1], d = std::log(y) - par_[0];
      g[0] = 1.0 / (s * s * y);
      g[1] = 2.0 * d / (s * s * s * y);
      break;
    }
    case FamilyKind::VonMises: {
      double k = par_[1], d = y - par_[0];
      g[0] = k * std::cos(d);
      g[1] = -std::sin(d);
      break;
    }
    default:
      throw std::invalid_argument("observation derivative undefined for discrete family");
  }
  return g;
}

double DensityFamily::sample(RngStream& rng) const {
  switch (kind_) {
    case FamilyKind::Exponential:
      return rng.exponential(par_[0]);
    case FamilyKind::Normal:
      return par_[0] + std::sqrt(par_[1]) * rng.normal();
    case FamilyKind::Gamma:
      return rng.gamma(par_[0], par_[1]);
    case FamilyKind::Poisson:
      return double(rng.poisson(par_[0]));
    case FamilyKind::LogNormal:
      return rng.lognormal(par_[0], par_[1]);
    case FamilyKind::NegativeBinomialMarginal:
      return double(rng.negative_binomial(par_[0], par_[1]));
    case FamilyKind::DiscreteAtoms: {
      double u = rng.uniform();
      double acc = 0.0;
      for (size_t j = 0; j < atoms_.size(); ++j) {
        acc += par_[j];
        if (u < acc) return atoms_[j];
      }
      return atoms_.back();
    }
    case FamilyKind::PointMass:
      return par_[0];
    case FamilyKind::VonMises:
      return rng.von_mises(par_[0], par_[1]);
  }
  return 0.0;
}

double DensityFamily::mean() const {
  switch (kind_) {
    case FamilyKind::Exponential:
      return 1.0 / par_[0];
    case FamilyKind::Normal:
      return par_[0];
    case FamilyKind::Gamma:
      return par_[0] / par_[1];
    case FamilyKind::Poisson:
      return par_[0];
    case FamilyKind::LogNormal:
      return std::exp(par_[0] + 0.5 * par_[1] * par_[1]);
    case FamilyKind::NegativeBinomialMarginal:
      return par_[0] * (1.0 - par_[1]) / par_[1];
    case FamilyKind::DiscreteAtoms: {
      double m = 0.0;
      for (size_t j = 0; j < atoms_.size(); ++j) m += par_[j] * atoms_[j];
      return m;
    }
    case FamilyKind::PointMass:
      return par_[0];
    case FamilyKind::VonMises:
      return par_[0];  // circular mean
  }
  return 0.0;
}

double DensityFamily::variance() const {
  switch (kind_) {
    case FamilyKind::Exponential:
      return 1.0 / (par_[0] * par_[0]);
    case FamilyKind::Normal:
      return par_[1];
    case FamilyKind::Gamma:
      return par_[0] / (par_[1] * par_[1]);
    case FamilyKind::Poisson:
      return par_[0];
    case FamilyKind::LogNormal: {
      double s2 = par_[1] * par_[1];
      return (std::exp(s2) - 1.0) * std::exp(2.0 * par_[0] + s2);
    }
    case FamilyKind::NegativeBinomialMarginal:
      return par_[0] * (1.0 - par_[1]) / (par_[1] * par_[1]);
    case FamilyKind::DiscreteAtoms: {
      double m = mean(), v = 0.0;
      for (size_t j = 0; j < atoms_.size(); ++j) v += par_[j] * (atoms_[j] - m) * (atoms_[j] - m);
      return v;
    }
    case FamilyKind::PointMass:
      return 0.0;
    case FamilyKind::VonMises:
      return 1.0 - bessel_ratio(par_[1]);  // circular variance
  }
  return 0.0;
}

}  // namespace misfit
