#include "netflow/gravity.hpp"

#include <algorithm>
#include <cmath>

#include "netflow/error.hpp"
#include "netflow/parallel.hpp"

namespace netflow {

GravityDecomposition decompose_ensemble(const NetworkPosterior& post, int workers, bool strict) {
  if (post.samples == 0) throw DependencyError("decompose_ensemble: network posterior has not been smoothed");
  const int I = post.nodes;
  const int T = post.length;
  const auto S = static_cast<Eigen::Index>(post.samples);

  GravityDecomposition dec;
  dec.nodes = I;
  dec.samples = post.samples;
  dec.h.assign(static_cast<std::size_t>(T), Eigen::VectorXd(S));
  dec.a.assign(static_cast<std::size_t>(T), Eigen::MatrixXd(S, I));
  dec.b.assign(static_cast<std::size_t>(T), Eigen::MatrixXd(S, I + 1));
  dec.g.assign(static_cast<std::size_t>(T), Eigen::MatrixXd(S, I * (I + 1)));

  parallel_for(static_cast<std::size_t>(T), workers, [&](std::size_t k) {
    const int t = static_cast<int>(k) + 1;
    for (Eigen::Index s = 0; s < S; ++s) {
      const auto slice = decompose(log_rate_array(post, static_cast<std::size_t>(s), t, strict));
      dec.h[k](s) = slice.h;
      dec.a[k].row(s) = slice.a.transpose();
      dec.b[k].row(s) = slice.b.transpose();
      for (int i = 0; i < I; ++i)
        dec.g[k].row(s).segment(i * (I + 1), I + 1) = slice.g.row(i);
    }
  });
  return dec;
}

namespace {

ComponentSummary summarize_log_samples(const Eigen::Ref<const Eigen::VectorXd>& log_samples, int t, char component,
                                       int i, int j) {
  std::vector<double> v(static_cast<std::size_t>(log_samples.size()));
  for (Eigen::Index s = 0; s < log_samples.size(); ++s) v[static_cast<std::size_t>(s)] = std::exp(log_samples(s));
  std::sort(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  return {t, component, i, j, sum / static_cast<double>(v.size()), sample_quantile_sorted<double>(v, kBandLow),
          sample_quantile_sorted<double>(v, kBandHigh)};
}

}  // namespace

std::vector<ComponentSummary> summarize(const GravityDecomposition& dec) {
  const int I = dec.nodes;
  std::vector<ComponentSummary> rows;
  for (int k = 0; k < dec.length(); ++k) {
    const int t = k + 1;
    rows.push_back(summarize_log_samples(dec.h[static_cast<std::size_t>(k)], t, 'h', 0, 0));
    for (int i = 1; i <= I; ++i)
      rows.push_back(summarize_log_samples(dec.a[static_cast<std::size_t>(k)].col(i - 1), t, 'a', i, 0));
    for (int j = 0; j <= I; ++j)
      rows.push_back(summarize_log_samples(dec.b[static_cast<std::size_t>(k)].col(j), t, 'b', 0, j));
    for (int i = 1; i <= I; ++i)
      for (int j = 0; j <= I; ++j)
        rows.push_back(summarize_log_samples(
            dec.g[static_cast<std::size_t>(k)].col(GravityDecomposition::affinity_column(I, i, j)), t, 'g', i, j));
  }
  return rows;
}

double credible_value(const Eigen::Ref<const Eigen::VectorXd>& log_affinity) {
  const auto n = static_cast<double>(log_affinity.size());
  if (n == 0) return 1.0;
  const double above = static_cast<double>((log_affinity.array() > 0.0).count()) / n;
  const double below = static_cast<double>((log_affinity.array() < 0.0).count()) / n;
  return std::min(1.0, 2.0 * std::min(above, below));
}

std::vector<double> credible_values(const GravityDecomposition& dec, EdgeKey edge) {
  if (edge.origin < 1 || edge.origin > dec.nodes || edge.destination < 0 || edge.destination > dec.nodes)
    throw ConfigError("credible_values: affinities exist only for internal origins");
  const auto col = GravityDecomposition::affinity_column(dec.nodes, edge.origin, edge.destination);
  std::vector<double> cv;
  cv.reserve(dec.g.size());
  for (const auto& g : dec.g) cv.push_back(credible_value(g.col(col)));
  return cv;
}

}  // namespace netflow
