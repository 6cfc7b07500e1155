#pragma once

// Independent reference computations used only by tests. None of these call
// into the filtering or sampling code they are compared against.

#include <Eigen/Dense>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace oracle {

inline double digamma(double x) { return boost::math::digamma(x); }
inline double trigamma(double x) { return boost::math::trigamma(x); }

// Inverts trigamma by bisection on log r.
inline double inverse_trigamma(double q) {
  double lo = std::log(1e-10);
  double hi = std::log(1e12);
  for (int i = 0; i < 300; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (trigamma(std::exp(mid)) > q) lo = mid;
    else hi = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

inline double log_poisson(std::int64_t x, double mean) {
  return static_cast<double>(x) * std::log(mean) - mean - std::lgamma(static_cast<double>(x) + 1.0);
}

// E[phi | x] for log phi ~ N(mu, var), x ~ Poisson(m phi), by quadrature on a
// fine uniform grid over +-12 standard deviations.
inline double grid_posterior_mean(double mu, double var, std::int64_t x, double m) {
  const double sd = std::sqrt(var);
  const int n = 200001;
  const double lo = mu - 12 * sd;
  const double step = 24 * sd / (n - 1);
  std::vector<double> logw(n);
  double peak = -1e300;
  for (int k = 0; k < n; ++k) {
    const double lam = lo + k * step;
    const double z = (lam - mu) / sd;
    logw[k] = -0.5 * z * z + log_poisson(x, m * std::exp(lam));
    peak = std::max(peak, logw[k]);
  }
  double num = 0.0, den = 0.0;
  for (int k = 0; k < n; ++k) {
    const double w = std::exp(logw[k] - peak);
    num += w * std::exp(lo + k * step);
    den += w;
  }
  return num / den;
}

// Bootstrap particle filter for log phi_t = log phi_{t-1} + N(0, W_t),
// log phi_0 ~ N(m0, C0), x_t ~ Poisson(m_t phi_t). Returns E[phi_t | D_t].
inline std::vector<double> particle_filter_mean(double m0, double c0, const std::vector<double>& evolution_var,
                                                const std::vector<std::int64_t>& counts,
                                                const std::vector<double>& exposure, std::size_t particles,
                                                std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> lam(particles), next(particles), logw(particles), cum(particles);
  for (auto& l : lam) l = m0 + std::sqrt(c0) * normal(eng);
  std::vector<double> means;
  for (std::size_t t = 0; t < counts.size(); ++t) {
    const double sd = std::sqrt(evolution_var[t]);
    double peak = -1e300;
    for (std::size_t k = 0; k < particles; ++k) {
      lam[k] += sd * normal(eng);
      logw[k] = log_poisson(counts[t], exposure[t] * std::exp(lam[k]));
      peak = std::max(peak, logw[k]);
    }
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < particles; ++k) {
      const double w = std::exp(logw[k] - peak);
      num += w * std::exp(lam[k]);
      den += w;
      cum[k] = den;
    }
    means.push_back(num / den);
    // systematic resampling
    const double u0 = unif(eng) / static_cast<double>(particles);
    std::size_t j = 0;
    for (std::size_t k = 0; k < particles; ++k) {
      const double target = (u0 + static_cast<double>(k) / static_cast<double>(particles)) * den;
      while (j + 1 < particles && cum[j] < target) ++j;
      next[k] = lam[j];
    }
    lam.swap(next);
  }
  return means;
}

// Closed-form mean of the single-discount backward sampler:
// a_T = m_T, a_t = (1 - delta) m_t + delta G^{-1} a_{t+1}.
inline std::vector<Eigen::VectorXd> backward_mean(const std::vector<Eigen::VectorXd>& filtered_means,
                                                  const Eigen::MatrixXd& G, double delta) {
  const Eigen::MatrixXd g_inv = G.inverse();
  std::vector<Eigen::VectorXd> out(filtered_means.size());
  out.back() = filtered_means.back();
  for (std::size_t t = filtered_means.size() - 1; t-- > 0;)
    out[t] = (1.0 - delta) * filtered_means[t] + delta * g_inv * out[t + 1];
  return out;
}

}  // namespace oracle
