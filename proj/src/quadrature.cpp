#include "misfit/quadrature.hpp"

#include <cmath>
#include <cstring>
#include <map>
#include <mutex>
#include <stdexcept>

namespace misfit {

namespace {

// Golub-Welsch on the symmetric tridiagonal Jacobi matrix. mu0 is the total
// mass of the weight function, supplied as a log. Nodes come from an
// eigenvalues-only solve; weights from the Christoffel identity
// w_i = mu0 / sum_k p_k(x_i)^2 with the orthonormal three-term recurrence,
// accumulated in long double because far-tail sums overflow double range.
QuadRule golub_welsch(const Eigen::VectorXd& diag, const Eigen::VectorXd& sub, double log_mu0) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw std::runtime_error("quadrature: eigen solve failed");
  int n = int(diag.size());
  QuadRule r;
  r.x = es.eigenvalues();
  r.logw.resize(n);
  for (int i = 0; i < n; ++i) {
    long double x = r.x[i];
    long double pm1 = 0.0L, p = 1.0L, sum = 1.0L;
    for (int k = 0; k < n - 1; ++k) {
      long double pn = ((x - diag[k]) * p - (k > 0 ? sub[k - 1] * pm1 : 0.0L)) / sub[k];
      pm1 = p;
      p = pn;
      sum += p * p;
    }
    r.logw[i] = log_mu0 - double(std::log(sum));
  }
  return r;
}

std::mutex cache_mutex;

}  // namespace

const QuadRule& gauss_hermite(int n) {
  static std::map<int, QuadRule> cache;
  std::lock_guard<std::mutex> lock(cache_mutex);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sub(n - 1);
  for (int k = 1; k < n; ++k) sub[k - 1] = std::sqrt(k / 2.0);
  // mu0 = sqrt(pi)
  auto rule = golub_welsch(diag, sub, 0.5 * std::log(3.141592653589793238));
  return cache.emplace(n, std::move(rule)).first->second;
}

const QuadRule& gauss_legendre(int n) {
  static std::map<int, QuadRule> cache;
  std::lock_guard<std::mutex> lock(cache_mutex);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sub(n - 1);
  for (int k = 1; k < n; ++k) sub[k - 1] = k / std::sqrt(4.0 * k * k - 1.0);
  auto rule = golub_welsch(diag, sub, std::log(2.0));
  return cache.emplace(n, std::move(rule)).first->second;
}

QuadRule gauss_laguerre(int n, double alpha) {
  if (!(alpha > -1.0)) throw std::invalid_argument("gauss_laguerre: alpha must exceed -1");
  static std::map<std::pair<int, std::uint64_t>, QuadRule> cache;
  std::uint64_t key;
  std::memcpy(&key, &alpha, sizeof key);
  {
    std::lock_guard<std::mutex> lock(cache_mutex);
    auto it = cache.find({n, key});
    if (it != cache.end()) return it->second;
  }
  Eigen::VectorXd diag(n), sub(n - 1);
  for (int k = 0; k < n; ++k) diag[k] = 2.0 * k + alpha + 1.0;
  for (int k = 1; k < n; ++k) sub[k - 1] = std::sqrt(k * (k + alpha));
  auto rule = golub_welsch(diag, sub, std::lgamma(alpha + 1.0));
  std::lock_guard<std::mutex> lock(cache_mutex);
  if (cache.size() > 512) cache.clear();
  return cache.emplace(std::make_pair(n, key), std::move(rule)).first->second;
}

}  // namespace misfit
