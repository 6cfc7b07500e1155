#pragma once

// Poisson dynamic generalized linear model: one count series x_t with
// x_t ~ Poisson(m_t * phi_t), log phi_t = F' theta_t, theta_t = G theta_{t-1} + w_t.
// Evolution variance is implied by a single discount factor, so W_t is never
// formed explicitly: R_t = G C_{t-1} G' / delta.
//
// Filtering cycle per time step:
//   evolve_state        (m, C)   -> (a, R)
//   predictor_moments   (a, R)   -> (f, q)          moments of log phi_t
//   gamma_match         (f, q)   -> Ga(r, c)        log-moment matched prior
//   conjugate_update    Ga(r, c) -> Ga(r + x, c + m), (f*, q*)
//   linear_bayes_update (a, R, f, q, f*, q*) -> (m, C)

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "netflow/error.hpp"
#include "netflow/special.hpp"

namespace netflow {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

enum class ModelForm { level, llgm, quadratic };

template <typename Scalar>
struct ModelSpec {
  Vector<Scalar> F;
  Matrix<Scalar> G;
  Scalar delta = Scalar(0.9);
  Vector<Scalar> prior_mean;
  Matrix<Scalar> prior_cov;

  Eigen::Index dim() const { return F.size(); }
};

template <typename Scalar>
struct StateBelief {
  Vector<Scalar> mean;
  Matrix<Scalar> cov;
  int time_index = 0;
};

// Prior mean and variance of the log rate.
template <typename Scalar>
struct PredictorMoments {
  Scalar f;
  Scalar q;
};

// Ga(r, c) with shape r and rate c.
template <typename Scalar>
struct GammaBelief {
  Scalar r;
  Scalar c;

  Scalar mean() const { return r / c; }
  Scalar variance() const { return r / (c * c); }
};

using ModelSpecd = ModelSpec<double>;
using StateBeliefd = StateBelief<double>;
using PredictorMomentsd = PredictorMoments<double>;
using GammaBeliefd = GammaBelief<double>;

namespace detail {

inline double log_gamma(double x) {
#if defined(__GLIBC__)
  int sign = 0;
  return ::lgamma_r(x, &sign);
#else
  return std::lgamma(x);
#endif
}

template <typename Scalar>
Scalar log_gamma(Scalar x) {
  using std::lgamma;
  return lgamma(x);
}

template <typename Scalar>
Matrix<Scalar> symmetrized(const Matrix<Scalar>& m) {
  return (m + m.transpose()) * Scalar(0.5);
}

template <typename Scalar>
Scalar covariance_scale(const Matrix<Scalar>& m) {
  using std::abs;
  return std::max(Scalar(1), abs(m.trace()));
}

// True when cov is symmetric and has no eigenvalue below -tol * scale.
template <typename Scalar>
bool is_psd(const Matrix<Scalar>& cov, Scalar tol) {
  if (cov.rows() != cov.cols()) return false;
  if (!cov.allFinite()) return false;
  const Scalar scale = covariance_scale(cov);
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > tol * scale) return false;
  Eigen::LLT<Matrix<Scalar>> llt(cov);
  if (llt.info() == Eigen::Success) return true;
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(cov, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff() >= -tol * scale;
}

}  // namespace detail

template <typename Scalar = double>
ModelSpec<Scalar> make_model(ModelForm form, Scalar delta = Scalar(0.9),
                             Scalar level_mean = Scalar(0),
                             Scalar prior_variance = Scalar(0.1)) {
  Eigen::Index p = 1;
  switch (form) {
    case ModelForm::level: p = 1; break;
    case ModelForm::llgm: p = 2; break;
    case ModelForm::quadratic: p = 3; break;
  }
  ModelSpec<Scalar> spec;
  spec.F = Vector<Scalar>::Zero(p);
  spec.F(0) = Scalar(1);
  // Upper bidiagonal of ones: level += growth, growth += curvature.
  spec.G = Matrix<Scalar>::Identity(p, p);
  for (Eigen::Index k = 0; k + 1 < p; ++k) spec.G(k, k + 1) = Scalar(1);
  spec.delta = delta;
  spec.prior_mean = Vector<Scalar>::Zero(p);
  spec.prior_mean(0) = level_mean;
  spec.prior_cov = Matrix<Scalar>::Identity(p, p) * prior_variance;
  return spec;
}

// Throws ConfigError when dimensions disagree, delta is outside (0, 1] or the
// prior covariance is not symmetric PSD.
template <typename Scalar>
void validate(const ModelSpec<Scalar>& spec) {
  const auto p = spec.dim();
  if (p < 1) throw ConfigError("model: empty regression vector");
  if (spec.G.rows() != p || spec.G.cols() != p)
    throw ConfigError("model: G must be " + std::to_string(p) + "x" + std::to_string(p));
  if (spec.prior_mean.size() != p || spec.prior_cov.rows() != p || spec.prior_cov.cols() != p)
    throw ConfigError("model: prior dimensions disagree with F");
  if (!(spec.delta > Scalar(0) && spec.delta <= Scalar(1)))
    throw ConfigError("model: discount must lie in (0, 1]");
  if (!spec.F.allFinite() || !spec.G.allFinite() || !spec.prior_mean.allFinite())
    throw ConfigError("model: non-finite entries");
  if (!detail::is_psd(spec.prior_cov, Scalar(1e-10)))
    throw ConfigError("model: prior covariance is not symmetric PSD");
}

template <typename Scalar>
StateBelief<Scalar> initial_belief(const ModelSpec<Scalar>& spec) {
  return {spec.prior_mean, spec.prior_cov, 0};
}

// a_t = G m_{t-1},  R_t = G C_{t-1} G' / delta.
template <typename Scalar>
StateBelief<Scalar> evolve_state(const StateBelief<Scalar>& post, const ModelSpec<Scalar>& spec) {
  if (!(spec.delta > Scalar(0) && spec.delta <= Scalar(1)))
    throw ConfigError("evolve_state: discount must lie in (0, 1]");
  if (!detail::is_psd(post.cov, Scalar(1e-10)))
    throw NumericalError(NumericalFault::invalid_state,
                         "evolve_state: posterior covariance is not symmetric PSD");
  StateBelief<Scalar> prior;
  prior.mean = spec.G * post.mean;
  prior.cov = detail::symmetrized<Scalar>(spec.G * post.cov * spec.G.transpose() / spec.delta);
  prior.time_index = post.time_index + 1;
  return prior;
}

template <typename Scalar>
PredictorMoments<Scalar> predictor_moments(const StateBelief<Scalar>& prior,
                                           const ModelSpec<Scalar>& spec) {
  const Scalar f = spec.F.dot(prior.mean);
  const Scalar q = spec.F.dot(prior.cov * spec.F);
  if (!(q > Scalar(0)) || !std::isfinite(static_cast<double>(f)))
    throw NumericalError(NumericalFault::degenerate_prior,
                         "predictor_moments: log-rate prior variance is not positive");
  return {f, q};
}

inline constexpr double kMinGammaShape = 1e-8;
inline constexpr int kGammaMatchMaxIterations = 100;

// Solves digamma(r) - log c = f, trigamma(r) = q. Newton on log r against the
// strictly decreasing trigamma, started from the inverse of the two-term
// asymptotic trigamma(r) ~ 1/r + 1/(2 r^2).
template <typename Scalar>
GammaBelief<Scalar> gamma_match(const PredictorMoments<Scalar>& fm) {
  using std::exp;
  using std::log;
  using std::sqrt;
  using std::abs;
  const Scalar q = fm.q;
  if (!(q > Scalar(0)))
    throw NumericalError(NumericalFault::degenerate_prior, "gamma_match: q must be positive");
  const Scalar log_r_min = log(Scalar(kMinGammaShape));
  if (!(q < trigamma(Scalar(kMinGammaShape))))
    throw NumericalError(NumericalFault::out_of_range,
                         "gamma_match: q exceeds trigamma range for representable shape");

  Scalar u = log((Scalar(1) + sqrt(Scalar(1) + Scalar(4) * q)) / (Scalar(2) * q));
  u = std::max(u, log_r_min);
  // Newton can rattle at the rounding floor; the residual check below decides.
  for (int iter = 0; iter < kGammaMatchMaxIterations; ++iter) {
    const Scalar r = exp(u);
    const Scalar resid = trigamma(r) - q;
    if (resid == Scalar(0)) break;
    const Scalar slope = tetragamma(r) * r;
    Scalar step = resid / slope;
    Scalar next = u - step;
    if (next < log_r_min) next = Scalar(0.5) * (u + log_r_min);
    step = u - next;
    u = next;
    if (abs(step) <= Scalar(4) * std::numeric_limits<Scalar>::epsilon() * std::max(Scalar(1), abs(u))) break;
  }
  const Scalar r = exp(u);
  if (!std::isfinite(static_cast<double>(r)) || abs(trigamma(r) - q) > Scalar(1e-10) * std::max(Scalar(1), q))
    throw NumericalError(NumericalFault::no_convergence, "gamma_match: Newton iteration did not converge");
  const Scalar c = exp(digamma(r) - fm.f);
  if (!(c > Scalar(0)) || !std::isfinite(static_cast<double>(c)))
    throw NumericalError(NumericalFault::out_of_range, "gamma_match: rate not representable");
  return {r, c};
}

// Negative binomial predictive for x ~ Poisson(m * phi), phi ~ Ga(r, c):
// r successes with success probability p = c / (c + m).
template <typename Scalar>
class NegativeBinomial {
 public:
  NegativeBinomial(GammaBelief<Scalar> g, Scalar exposure)
      : r_(g.r), c_(g.c), m_(exposure) {
    using std::log;
    log_p_ = log(c_) - log(c_ + m_);
    log_q_ = log(m_) - log(c_ + m_);
  }

  Scalar shape() const { return r_; }
  Scalar rate() const { return c_; }
  Scalar exposure() const { return m_; }
  Scalar success_probability() const { return c_ / (c_ + m_); }

  Scalar mean() const { return r_ * m_ / c_; }
  Scalar variance() const { return r_ * m_ * (c_ + m_) / (c_ * c_); }

  Scalar log_pmf(std::int64_t x) const {
    if (x < 0) return -std::numeric_limits<Scalar>::infinity();
    const Scalar xs = static_cast<Scalar>(x);
    return detail::log_gamma(xs + r_) - detail::log_gamma(r_) - detail::log_gamma(xs + Scalar(1)) +
           r_ * log_p_ + xs * log_q_;
  }

  Scalar pmf(std::int64_t x) const {
    using std::exp;
    return exp(log_pmf(x));
  }

  Scalar cdf(std::int64_t x) const {
    using std::exp;
    using std::log;
    if (x < 0) return Scalar(0);
    Scalar lp = r_ * log_p_;
    Scalar total(0);
    for (std::int64_t k = 0; k <= x; ++k) {
      total += exp(lp);
      const Scalar ks = static_cast<Scalar>(k);
      lp += log(ks + r_) - log(ks + Scalar(1)) + log_q_;
    }
    return std::min(total, Scalar(1));
  }

  // Smallest x with cdf(x) >= level.
  std::int64_t quantile(Scalar level) const {
    using std::exp;
    using std::log;
    if (!(level > Scalar(0))) return 0;
    const Scalar mode = mean();
    Scalar lp = r_ * log_p_;
    Scalar total(0);
    for (std::int64_t k = 0;; ++k) {
      const Scalar term = exp(lp);
      total += term;
      if (total >= level) return k;
      // Past the mode the remaining tail is below the rounding of total.
      if (static_cast<Scalar>(k) > mode && term <= std::numeric_limits<Scalar>::epsilon() * total * Scalar(1e-3))
        return k;
      const Scalar ks = static_cast<Scalar>(k);
      lp += log(ks + r_) - log(ks + Scalar(1)) + log_q_;
    }
  }

 private:
  Scalar r_;
  Scalar c_;
  Scalar m_;
  Scalar log_p_;
  Scalar log_q_;
};

template <typename Scalar>
NegativeBinomial<Scalar> forecast_negbin(const GammaBelief<Scalar>& g, Scalar exposure) {
  return NegativeBinomial<Scalar>(g, exposure);
}

template <typename Scalar>
struct ConjugateUpdate {
  GammaBelief<Scalar> posterior;
  PredictorMoments<Scalar> log_rate;  // (f*, q*)
};

template <typename Scalar>
ConjugateUpdate<Scalar> conjugate_update(const GammaBelief<Scalar>& g, std::int64_t count,
                                         Scalar exposure) {
  using std::log;
  const Scalar shape = g.r + static_cast<Scalar>(count);
  const Scalar rate = g.c + exposure;
  return {{shape, rate}, {digamma(shape) - log(rate), trigamma(shape)}};
}

// Linear Bayes correction of the state moments given the shift in log-rate
// moments from (f, q) to (f*, q*):
//   A = R F / q,  m = a + A (f* - f),  C = R - A A' (q - q*).
// Small negative eigenvalues of C (above -1e-8 trace) are clipped to zero and
// counted in *repairs; anything worse raises.
template <typename Scalar>
StateBelief<Scalar> linear_bayes_update(const StateBelief<Scalar>& prior, const ModelSpec<Scalar>& spec,
                                        const PredictorMoments<Scalar>& fm,
                                        const PredictorMoments<Scalar>& post_lm, int* repairs = nullptr) {
  const Vector<Scalar> gain = prior.cov * spec.F / fm.q;
  StateBelief<Scalar> post;
  post.mean = prior.mean + gain * (post_lm.f - fm.f);
  post.cov = detail::symmetrized<Scalar>(prior.cov - gain * gain.transpose() * (fm.q - post_lm.q));
  post.time_index = prior.time_index;

  Eigen::LLT<Matrix<Scalar>> llt(post.cov);
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(post.cov);
    const Scalar lowest = eig.eigenvalues().minCoeff();
    if (lowest < Scalar(0)) {
      if (lowest < Scalar(-1e-8) * detail::covariance_scale(post.cov))
        throw NumericalError(NumericalFault::indefinite_covariance,
                             "linear_bayes_update: posterior covariance is indefinite");
      const Vector<Scalar> clipped = eig.eigenvalues().cwiseMax(Scalar(0));
      post.cov = detail::symmetrized<Scalar>(eig.eigenvectors() * clipped.asDiagonal() *
                                             eig.eigenvectors().transpose());
      if (repairs) ++*repairs;
    }
  }
  return post;
}

struct Observation {
  std::int64_t count = 0;
  double exposure = 1.0;
};

template <typename Scalar>
struct FilterStep {
  StateBelief<Scalar> prior;
  StateBelief<Scalar> posterior;
  PredictorMoments<Scalar> prior_moments;
  PredictorMoments<Scalar> posterior_moments;
  GammaBelief<Scalar> prior_gamma;
  GammaBelief<Scalar> posterior_gamma;
  std::int64_t count = 0;
  Scalar exposure = Scalar(1);
  Scalar log_predictive = Scalar(0);  // log p(x_t | D_{t-1})
};

template <typename Scalar>
struct FilterOutput {
  std::vector<FilterStep<Scalar>> steps;  // steps[t-1] holds time t
  int covariance_repairs = 0;

  std::size_t length() const { return steps.size(); }
  NegativeBinomial<Scalar> forecast(std::size_t index) const {
    return {steps[index].prior_gamma, steps[index].exposure};
  }
};

using FilterOutputd = FilterOutput<double>;

template <typename Scalar>
FilterOutput<Scalar> filter_series(const ModelSpec<Scalar>& spec, std::span<const Observation> data) {
  validate(spec);
  if (data.empty()) throw ConfigError("filter_series: empty series");
  FilterOutput<Scalar> out;
  out.steps.reserve(data.size());
  StateBelief<Scalar> post = initial_belief(spec);
  for (std::size_t k = 0; k < data.size(); ++k) {
    const Observation& obs = data[k];
    const auto t = std::to_string(k + 1);
    if (!(obs.exposure > 0.0) || obs.count < 0)
      throw ConfigError("filter_series: invalid observation at t=" + t);
    try {
      FilterStep<Scalar> step;
      step.count = obs.count;
      step.exposure = static_cast<Scalar>(obs.exposure);
      step.prior = evolve_state(post, spec);
      step.prior_moments = predictor_moments(step.prior, spec);
      step.prior_gamma = gamma_match(step.prior_moments);
      step.log_predictive = forecast_negbin(step.prior_gamma, step.exposure).log_pmf(obs.count);
      const auto upd = conjugate_update(step.prior_gamma, obs.count, step.exposure);
      step.posterior_gamma = upd.posterior;
      step.posterior_moments = upd.log_rate;
      step.posterior = linear_bayes_update(step.prior, spec, step.prior_moments, step.posterior_moments,
                                           &out.covariance_repairs);
      post = step.posterior;
      out.steps.push_back(std::move(step));
    } catch (const NumericalError& e) {
      throw NumericalError(e.fault(), std::string(e.what()) + " at t=" + t);
    }
  }
  return out;
}

}  // namespace netflow
