#include "netflow/network.hpp"

#include <algorithm>
#include <cmath>

#include "netflow/error.hpp"
#include "netflow/parallel.hpp"
#include "netflow/retro.hpp"

namespace netflow {

std::vector<EdgeKey> edge_universe(int nodes) {
  std::vector<EdgeKey> keys;
  keys.reserve(static_cast<std::size_t>((nodes + 1) * (nodes + 1) - 1));
  for (int i = 0; i <= nodes; ++i)
    for (int j = 0; j <= nodes; ++j)
      if (i != 0 || j != 0) keys.push_back({i, j});
  return keys;
}

FlowPanel::FlowPanel(int nodes, int length)
    : nodes_(nodes),
      length_(length),
      counts_(static_cast<std::size_t>((nodes + 1) * (nodes + 1)) * static_cast<std::size_t>(length), 0),
      occupancy_(static_cast<std::size_t>(nodes + 1) * static_cast<std::size_t>(length + 2), -1) {
  if (nodes < 1 || length < 1) throw ConfigError("panel: need at least one node and one time point");
}

std::size_t FlowPanel::flow_index(int origin, int destination, int t) const {
  if (origin < 0 || origin > nodes_ || destination < 0 || destination > nodes_ || t < 1 || t > length_)
    throw ConfigError("panel: flow index out of range");
  return (static_cast<std::size_t>(origin) * static_cast<std::size_t>(nodes_ + 1) +
          static_cast<std::size_t>(destination)) *
             static_cast<std::size_t>(length_) +
         static_cast<std::size_t>(t - 1);
}

std::size_t FlowPanel::occupancy_index(int node, int t) const {
  if (node < 1 || node > nodes_ || t < -1 || t > length_) throw ConfigError("panel: occupancy index out of range");
  return static_cast<std::size_t>(node) * static_cast<std::size_t>(length_ + 2) + static_cast<std::size_t>(t + 1);
}

void FlowPanel::set_count(int origin, int destination, int t, std::int64_t value) {
  if (value < 0) throw ConfigError("panel: negative count");
  if (origin == 0 && destination == 0) throw ConfigError("panel: edge (0,0) is not part of the network");
  counts_[flow_index(origin, destination, t)] = value;
}

std::int64_t FlowPanel::edge_total(EdgeKey key) const {
  const std::size_t base = flow_index(key.origin, key.destination, 1);
  std::int64_t total = 0;
  for (int t = 0; t < length_; ++t) total += counts_[base + static_cast<std::size_t>(t)];
  return total;
}

std::optional<std::int64_t> FlowPanel::occupancy(int node, int t) const {
  const auto v = occupancy_[occupancy_index(node, t)];
  if (v < 0) return std::nullopt;
  return v;
}

void FlowPanel::set_occupancy(int node, int t, std::int64_t value) {
  if (value < 0) throw ConfigError("panel: negative occupancy");
  occupancy_[occupancy_index(node, t)] = value;
}

Eigen::MatrixXd resolved_occupancy(const FlowPanel& panel) {
  const int I = panel.nodes();
  const int T = panel.length();
  Eigen::MatrixXd n = Eigen::MatrixXd::Zero(I + 1, T + 2);
  for (int i = 1; i <= I; ++i) {
    for (int t = 1; t <= T; ++t) {
      if (auto v = panel.occupancy(i, t)) {
        n(i, t + 1) = static_cast<double>(*v);
      } else {
        std::int64_t arrivals = 0;
        for (int k = 0; k <= I; ++k) arrivals += panel.count(k, i, t);
        n(i, t + 1) = static_cast<double>(arrivals);
      }
    }
    const auto n0 = panel.occupancy(i, 0);
    n(i, 1) = n0 ? static_cast<double>(*n0) : n(i, 2);
    const auto nm1 = panel.occupancy(i, -1);
    n(i, 0) = nm1 ? static_cast<double>(*nm1) : n(i, 1);
  }
  return n;
}

OccupancyRatios occupancy_ratios(const FlowPanel& panel) {
  const int I = panel.nodes();
  const int T = panel.length();
  const Eigen::MatrixXd n = resolved_occupancy(panel);
  Eigen::MatrixXd m = Eigen::MatrixXd::Ones(I + 1, T);
  for (int i = 1; i <= I; ++i) {
    for (int t = 1; t <= T; ++t) {
      // column index of time s is s + 1
      const double before = n(i, t - 1);  // n_{i,t-2}
      const double last = n(i, t);        // n_{i,t-1}
      if (before > 0.0) m(i, t - 1) = std::max(last / before, kMinExposure);
    }
  }
  return OccupancyRatios(std::move(m));
}

std::vector<Observation> edge_series(const FlowPanel& panel, const OccupancyRatios& ratios, EdgeKey key) {
  std::vector<Observation> out(static_cast<std::size_t>(panel.length()));
  for (int t = 1; t <= panel.length(); ++t)
    out[static_cast<std::size_t>(t - 1)] = {panel.count(key.origin, key.destination, t),
                                            key.is_inflow() ? 1.0 : ratios.at(key.origin, t)};
  return out;
}

ModelSpecd default_edge_spec(const NetworkModelConfig& cfg, std::span<const Observation> series) {
  const std::size_t window =
      std::min<std::size_t>(series.size(), static_cast<std::size_t>(std::max(cfg.prior_window, 1)));
  double sum = 0.0;
  for (std::size_t t = 0; t < window; ++t) sum += static_cast<double>(series[t].count) / series[t].exposure;
  const double avg = window ? sum / static_cast<double>(window) : 0.0;
  return make_model<double>(cfg.form, cfg.discount, std::log(std::max(avg, cfg.level_floor)), cfg.prior_variance);
}

Eigen::VectorXd prior_log_rate_path(const ModelSpecd& spec, int length) {
  Eigen::VectorXd path(length);
  Eigen::VectorXd state = spec.prior_mean;
  for (int t = 0; t < length; ++t) {
    state = spec.G * state;
    path(t) = spec.F.dot(state);
  }
  return path;
}

namespace {

template <typename Edge>
const Edge* find_sorted(const std::vector<Edge>& edges, EdgeKey key) {
  auto it = std::lower_bound(edges.begin(), edges.end(), key,
                             [](const Edge& e, const EdgeKey& k) { return e.key < k; });
  return (it != edges.end() && it->key == key) ? &*it : nullptr;
}

}  // namespace

const EdgePosterior* NetworkPosterior::find(EdgeKey key) const { return find_sorted(edges, key); }
const ImputedEdge* NetworkPosterior::find_imputed(EdgeKey key) const { return find_sorted(imputed, key); }

NetworkPosterior filter_network(const FlowPanel& panel, const NetworkModelConfig& cfg, int workers,
                                const std::map<EdgeKey, ModelSpecd>& overrides) {
  NetworkPosterior post;
  post.nodes = panel.nodes();
  post.length = panel.length();
  post.ratios = occupancy_ratios(panel);

  struct Task {
    EdgeKey key;
    std::vector<Observation> series;
    ModelSpecd spec;
    bool dropped = false;
    FilterOutputd filtered;
    std::string error;
  };
  const auto universe = edge_universe(panel.nodes());
  std::vector<Task> tasks(universe.size());
  for (std::size_t k = 0; k < universe.size(); ++k) {
    Task& task = tasks[k];
    task.key = universe[k];
    task.series = edge_series(panel, post.ratios, task.key);
    auto it = overrides.find(task.key);
    task.spec = it != overrides.end() ? it->second : default_edge_spec(cfg, task.series);
    task.dropped = panel.edge_total(task.key) < cfg.traffic_threshold;
  }

  parallel_for(tasks.size(), workers, [&](std::size_t k) {
    Task& task = tasks[k];
    if (task.dropped) return;
    try {
      task.filtered = filter_series<double>(task.spec, task.series);
    } catch (const Error& e) {
      task.error = e.what();
    }
  });

  for (auto& task : tasks) {
    if (task.dropped || !task.error.empty()) {
      if (!task.error.empty()) post.failures.push_back({task.key, task.error});
      post.imputed.push_back({task.key, prior_log_rate_path(task.spec, post.length), !task.error.empty()});
      continue;
    }
    EdgePosterior edge;
    edge.key = task.key;
    edge.spec = std::move(task.spec);
    edge.filtered = std::move(task.filtered);
    post.edges.push_back(std::move(edge));
  }
  return post;
}

void smooth_network(NetworkPosterior& post, std::size_t n_samples, std::uint64_t seed, int workers) {
  if (n_samples < 1) throw ConfigError("smooth_network: need at least one sample");
  const int I = post.nodes;
  parallel_for(post.edges.size(), workers, [&](std::size_t k) {
    EdgePosterior& edge = post.edges[k];
    const auto ens = backward_sample(edge.filtered, edge.spec, n_samples, seed, edge.key.id(I));
    edge.log_rate_samples = ens.linear_predictor(edge.spec.F);
    edge.clamped = static_cast<int>((edge.log_rate_samples.array().abs() > kLogRateClamp).count());
    edge.state_summaries.clear();
    Eigen::MatrixXd component(static_cast<Eigen::Index>(n_samples), ens.length());
    for (Eigen::Index c = 0; c < ens.dim(); ++c) {
      for (std::size_t s = 0; s < n_samples; ++s)
        component.row(static_cast<Eigen::Index>(s)) = ens.samples[s].states.col(c).transpose();
      edge.state_summaries.push_back(summarize_columns(component));
    }
  });
  post.samples = n_samples;
  post.seed = seed;
}

Eigen::MatrixXd recouple_multinomial(const Eigen::MatrixXd& rates) {
  Eigen::MatrixXd theta(rates.rows(), rates.cols());
  for (Eigen::Index r = 0; r < rates.rows(); ++r) {
    const double total = rates.row(r).sum();
    if (!(total > 0.0) || !std::isfinite(total))
      throw NumericalError(NumericalFault::invalid_state, "recouple_multinomial: row without positive mass");
    theta.row(r) = rates.row(r) / total;
  }
  return theta;
}

namespace {

double edge_log_rate(const NetworkPosterior& post, EdgeKey key, std::size_t sample, int t, bool strict) {
  if (const auto* edge = post.find(key)) return edge->log_rate_samples(static_cast<Eigen::Index>(sample), t - 1);
  const auto* imp = post.find_imputed(key);
  if (!imp) throw ConfigError("network posterior has no record of an edge");
  if (strict)
    throw ConfigError("strict mode: edge (" + std::to_string(key.origin) + "," + std::to_string(key.destination) +
                      ") has no posterior");
  return imp->log_rate(t - 1);
}

void require_samples(const NetworkPosterior& post, std::size_t sample, int t) {
  if (post.samples == 0) throw DependencyError("network posterior has not been smoothed");
  if (sample >= post.samples || t < 1 || t > post.length) throw ConfigError("sample or time index out of range");
}

}  // namespace

Eigen::MatrixXd log_rate_array(const NetworkPosterior& post, std::size_t sample, int t, bool strict) {
  require_samples(post, sample, t);
  const int I = post.nodes;
  Eigen::MatrixXd f(I, I + 1);
  for (int i = 1; i <= I; ++i)
    for (int j = 0; j <= I; ++j) f(i - 1, j) = edge_log_rate(post, {i, j}, sample, t, strict);
  return f;
}

Eigen::MatrixXd transition_samples(const NetworkPosterior& post, int origin, int t, bool strict) {
  require_samples(post, 0, t);
  if (origin < 1 || origin > post.nodes) throw ConfigError("transition_samples: origin must be internal");
  const int I = post.nodes;
  Eigen::MatrixXd rates(static_cast<Eigen::Index>(post.samples), I + 1);
  for (std::size_t s = 0; s < post.samples; ++s)
    for (int j = 0; j <= I; ++j) {
      const double f = std::clamp(edge_log_rate(post, {origin, j}, s, t, strict), -kLogRateClamp, kLogRateClamp);
      rates(static_cast<Eigen::Index>(s), j) = std::exp(f);
    }
  return recouple_multinomial(rates);
}

}  // namespace netflow
