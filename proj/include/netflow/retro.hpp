#pragma once

// Retrospective trajectory sampling for single-discount DGLMs.
//
// theta_T ~ N(m_T, C_T) and, backwards for t = T-1..1,
//   theta_t | theta_{t+1} ~ N((1 - delta) m_t + delta G^{-1} theta_{t+1}, (1 - delta) C_t).

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "netflow/dglm.hpp"
#include "netflow/error.hpp"
#include "netflow/rng.hpp"
#include "netflow/stats.hpp"

namespace netflow {

template <typename Scalar>
struct TrajectorySample {
  Matrix<Scalar> states;  // T x p, row t-1 holds theta_t
  std::uint64_t seed = 0;
  std::uint64_t series_id = 0;
  std::size_t sample_index = 0;
};

template <typename Scalar>
struct TrajectoryEnsemble {
  std::vector<TrajectorySample<Scalar>> samples;

  std::size_t size() const { return samples.size(); }
  Eigen::Index length() const { return samples.empty() ? 0 : samples.front().states.rows(); }
  Eigen::Index dim() const { return samples.empty() ? 0 : samples.front().states.cols(); }

  // T x p per-time sample mean.
  Matrix<Scalar> mean() const {
    Matrix<Scalar> acc = Matrix<Scalar>::Zero(length(), dim());
    for (const auto& s : samples) acc += s.states;
    return acc / static_cast<Scalar>(samples.size());
  }

  // T x p per-time, per-component sample quantile.
  Matrix<Scalar> quantile(double level) const {
    Matrix<Scalar> out(length(), dim());
    std::vector<Scalar> buf(samples.size());
    for (Eigen::Index t = 0; t < length(); ++t) {
      for (Eigen::Index k = 0; k < dim(); ++k) {
        for (std::size_t s = 0; s < samples.size(); ++s) buf[s] = samples[s].states(t, k);
        out(t, k) = sample_quantile(buf, level);
      }
    }
    return out;
  }

  // samples x T matrix of F' theta_t.
  Matrix<Scalar> linear_predictor(const Vector<Scalar>& F) const {
    Matrix<Scalar> out(static_cast<Eigen::Index>(samples.size()), length());
    for (std::size_t s = 0; s < samples.size(); ++s)
      out.row(static_cast<Eigen::Index>(s)) = (samples[s].states * F).transpose();
    return out;
  }
};

using TrajectoryEnsembled = TrajectoryEnsemble<double>;

inline constexpr double kMaxConditionNumber = 1e12;

namespace detail {

// Lower factor L with L L' = cov. Falls back to a clipped symmetric
// eigendecomposition when Cholesky fails on a (near-)singular matrix.
template <typename Scalar>
Matrix<Scalar> covariance_factor(const Matrix<Scalar>& cov) {
  if (cov.isZero(Scalar(0))) return Matrix<Scalar>::Zero(cov.rows(), cov.cols());
  Eigen::LLT<Matrix<Scalar>> llt(cov);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(cov);
  const Scalar lowest = eig.eigenvalues().minCoeff();
  if (lowest < Scalar(-1e-8) * covariance_scale(cov))
    throw NumericalError(NumericalFault::indefinite_covariance,
                         "backward_sample: filtered covariance is indefinite");
  const Vector<Scalar> root = eig.eigenvalues().cwiseMax(Scalar(0)).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal();
}

template <typename Scalar>
Matrix<Scalar> checked_inverse(const Matrix<Scalar>& G) {
  Eigen::JacobiSVD<Matrix<Scalar>> svd(G);
  const auto& sv = svd.singularValues();
  const Scalar smallest = sv(sv.size() - 1);
  if (!(smallest > Scalar(0)) || sv(0) / smallest >= Scalar(kMaxConditionNumber))
    throw NumericalError(NumericalFault::unsupported_model,
                         "backward_sample: evolution matrix G is singular or ill-conditioned");
  return G.inverse();
}

}  // namespace detail

// Draws samples [first, first + count) of the retrospective ensemble. Sample k
// always uses the stream keyed by (seed, series_id, k), so any partition of
// the index range reproduces the same draws.
template <typename Scalar>
std::vector<TrajectorySample<Scalar>> backward_sample_range(const FilterOutput<Scalar>& filtered,
                                                            const ModelSpec<Scalar>& spec, std::size_t first,
                                                            std::size_t count, std::uint64_t seed,
                                                            std::uint64_t series_id = 0) {
  const Scalar delta = spec.delta;
  if (!(delta >= Scalar(0) && delta <= Scalar(1)))
    throw ConfigError("backward_sample: discount must lie in [0, 1]");
  const std::size_t T = filtered.length();
  if (T == 0) throw ConfigError("backward_sample: empty filter output");
  const Eigen::Index p = spec.dim();
  const Matrix<Scalar> g_inv = detail::checked_inverse(spec.G);

  std::vector<Matrix<Scalar>> factors(T);
  for (std::size_t t = 0; t < T; ++t) {
    const auto& cov = filtered.steps[t].posterior.cov;
    factors[t] = detail::covariance_factor<Scalar>(t + 1 == T ? cov : Matrix<Scalar>(cov * (Scalar(1) - delta)));
  }

  std::vector<TrajectorySample<Scalar>> out;
  out.reserve(count);
  Vector<Scalar> z(p);
  for (std::size_t k = first; k < first + count; ++k) {
    Engine eng = stream(seed, {series_id, static_cast<std::uint64_t>(k)});
    std::normal_distribution<double> normal;
    auto draw = [&] {
      for (Eigen::Index i = 0; i < p; ++i) z(i) = static_cast<Scalar>(normal(eng));
    };
    TrajectorySample<Scalar> sample;
    sample.seed = seed;
    sample.series_id = series_id;
    sample.sample_index = k;
    sample.states.resize(static_cast<Eigen::Index>(T), p);
    draw();
    Vector<Scalar> theta = filtered.steps[T - 1].posterior.mean + factors[T - 1] * z;
    sample.states.row(static_cast<Eigen::Index>(T - 1)) = theta.transpose();
    for (std::size_t t = T - 1; t-- > 0;) {
      draw();
      theta = (Scalar(1) - delta) * filtered.steps[t].posterior.mean + delta * (g_inv * theta) + factors[t] * z;
      sample.states.row(static_cast<Eigen::Index>(t)) = theta.transpose();
    }
    out.push_back(std::move(sample));
  }
  return out;
}

template <typename Scalar>
TrajectoryEnsemble<Scalar> backward_sample(const FilterOutput<Scalar>& filtered, const ModelSpec<Scalar>& spec,
                                           std::size_t n_samples, std::uint64_t seed,
                                           std::uint64_t series_id = 0) {
  if (n_samples < 1) throw ConfigError("backward_sample: need at least one sample");
  return {backward_sample_range(filtered, spec, 0, n_samples, seed, series_id)};
}

inline constexpr double kLogRateClamp = 700.0;

template <typename Scalar>
struct RateSamples {
  Matrix<Scalar> rates;  // samples x T, phi_t = exp(F' theta_t)
  int clamped = 0;       // entries whose log rate exceeded +-700
};

template <typename Scalar>
RateSamples<Scalar> exp_clamped(Matrix<Scalar> log_rates) {
  RateSamples<Scalar> out;
  for (Eigen::Index i = 0; i < log_rates.size(); ++i) {
    Scalar& v = log_rates.data()[i];
    if (v > Scalar(kLogRateClamp)) {
      v = Scalar(kLogRateClamp);
      ++out.clamped;
    } else if (v < Scalar(-kLogRateClamp)) {
      v = Scalar(-kLogRateClamp);
      ++out.clamped;
    }
  }
  out.rates = log_rates.array().exp().matrix();
  return out;
}

template <typename Scalar>
RateSamples<Scalar> rate_trajectories(const TrajectoryEnsemble<Scalar>& ens, const ModelSpec<Scalar>& spec) {
  return exp_clamped<Scalar>(ens.linear_predictor(spec.F));
}

}  // namespace netflow
