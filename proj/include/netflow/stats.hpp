#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace netflow {

inline constexpr double kBandLow = 0.025;
inline constexpr double kBandMid = 0.5;
inline constexpr double kBandHigh = 0.975;

// Inverse of the empirical CDF: the smallest order statistic x_(k) with
// k / n >= level. Commutes with monotone increasing transforms.
template <typename Scalar>
Scalar sample_quantile_sorted(std::span<const Scalar> sorted, double level) {
  if (sorted.empty()) return Scalar(0);
  const double n = static_cast<double>(sorted.size());
  const double rank = std::ceil(std::clamp(level, 0.0, 1.0) * n - 1e-9);
  const auto k = static_cast<std::size_t>(std::clamp(rank, 1.0, n)) - 1;
  return sorted[k];
}

template <typename Scalar>
Scalar sample_quantile(std::vector<Scalar> values, double level) {
  std::sort(values.begin(), values.end());
  return sample_quantile_sorted<Scalar>(values, level);
}

// Column-wise mean and 2.5/50/97.5 percent quantiles of a samples-by-time matrix.
struct ColumnSummary {
  Eigen::VectorXd mean;
  Eigen::VectorXd lo;
  Eigen::VectorXd median;
  Eigen::VectorXd hi;
};

inline ColumnSummary summarize_columns(const Eigen::MatrixXd& samples) {
  const auto cols = samples.cols();
  ColumnSummary s{Eigen::VectorXd(cols), Eigen::VectorXd(cols), Eigen::VectorXd(cols),
                  Eigen::VectorXd(cols)};
  std::vector<double> buf(static_cast<std::size_t>(samples.rows()));
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < samples.rows(); ++r) buf[static_cast<std::size_t>(r)] = samples(r, c);
    std::sort(buf.begin(), buf.end());
    double sum = 0.0;
    for (double v : buf) sum += v;
    s.mean(c) = sum / static_cast<double>(buf.size());
    s.lo(c) = sample_quantile_sorted<double>(buf, kBandLow);
    s.median(c) = sample_quantile_sorted<double>(buf, kBandMid);
    s.hi(c) = sample_quantile_sorted<double>(buf, kBandHigh);
  }
  return s;
}

}  // namespace netflow
