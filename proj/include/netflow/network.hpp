#pragma once

// Network data model and the decouple/recouple orchestration.
//
// Nodes 1..I are internal, node 0 is the outside world. Edge (0, j) carries
// inflows to j, edge (i, 0) carries exits from i. Each edge is filtered as an
// independent Poisson DGLM with exposure m_it = n_{i,t-1} / n_{i,t-2}
// (m = 1 for inflows), and sampled rates are recombined afterwards.

#include <Eigen/Dense>

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "netflow/dglm.hpp"
#include "netflow/stats.hpp"

namespace netflow {

struct EdgeKey {
  int origin = 0;
  int destination = 0;

  auto operator<=>(const EdgeKey&) const = default;

  bool valid(int nodes) const {
    return origin >= 0 && origin <= nodes && destination >= 0 && destination <= nodes &&
           !(origin == 0 && destination == 0);
  }
  bool is_inflow() const { return origin == 0; }
  std::uint64_t id(int nodes) const {
    return static_cast<std::uint64_t>(origin) * static_cast<std::uint64_t>(nodes + 1) +
           static_cast<std::uint64_t>(destination);
  }
};

// All inflow, transition and exit edges in (origin, destination) order.
std::vector<EdgeKey> edge_universe(int nodes);

class FlowPanel {
 public:
  FlowPanel() = default;
  FlowPanel(int nodes, int length);

  int nodes() const { return nodes_; }
  int length() const { return length_; }

  // t in 1..T
  std::int64_t count(int origin, int destination, int t) const { return counts_[flow_index(origin, destination, t)]; }
  void set_count(int origin, int destination, int t, std::int64_t value);
  std::int64_t edge_total(EdgeKey key) const;

  // Occupancy n_it for node 1..I, t in -1..T; nullopt when not provided.
  std::optional<std::int64_t> occupancy(int node, int t) const;
  void set_occupancy(int node, int t, std::int64_t value);

  bool operator==(const FlowPanel&) const = default;

 private:
  std::size_t flow_index(int origin, int destination, int t) const;
  std::size_t occupancy_index(int node, int t) const;

  int nodes_ = 0;
  int length_ = 0;
  std::vector<std::int64_t> counts_;
  std::vector<std::int64_t> occupancy_;  // -1 marks "not provided"
};

class OccupancyRatios {
 public:
  OccupancyRatios() = default;
  explicit OccupancyRatios(Eigen::MatrixXd ratios) : ratios_(std::move(ratios)) {}

  // Exposure for edges leaving `origin` at t in 1..T (1 for origin 0).
  double at(int origin, int t) const { return ratios_(origin, t - 1); }
  const Eigen::MatrixXd& matrix() const { return ratios_; }

 private:
  Eigen::MatrixXd ratios_;  // (I+1) x T, row 0 fixed at 1
};

inline constexpr double kMinExposure = 1e-6;

// m_it = n_{i,t-1} / n_{i,t-2}, with m = 1 when n_{i,t-2} = 0 and a floor of
// kMinExposure when a node empties. Missing occupancies for t >= 1 are
// rebuilt from the flows (n_jt = inflow + transfers in); missing pre-series
// values are set so that m = 1 at t = 1, 2.
OccupancyRatios occupancy_ratios(const FlowPanel& panel);

// Occupancy path n_it for t = -1..T after the fallbacks above ((I+1) x (T+2),
// column 0 is t = -1, row 0 unused).
Eigen::MatrixXd resolved_occupancy(const FlowPanel& panel);

std::vector<Observation> edge_series(const FlowPanel& panel, const OccupancyRatios& ratios, EdgeKey key);

struct NetworkModelConfig {
  ModelForm form = ModelForm::llgm;
  double discount = 0.9;
  double prior_variance = 0.1;
  double level_floor = 0.5;     // prior level mean = log(max(window mean, floor))
  int prior_window = 3;         // leading time points averaged for the prior level
  std::int64_t traffic_threshold = 1;  // edges with total count below this are dropped
};

// Default per-edge spec built from the leading window of the edge's data.
ModelSpecd default_edge_spec(const NetworkModelConfig& cfg, std::span<const Observation> series);

struct EdgePosterior {
  EdgeKey key;
  ModelSpecd spec;
  FilterOutputd filtered;
  // Filled by smooth_network.
  Eigen::MatrixXd log_rate_samples;             // samples x T
  std::vector<ColumnSummary> state_summaries;   // one per state component
  int clamped = 0;
};

struct EdgeFailure {
  EdgeKey key;
  std::string message;
};

// Edge without a posterior (dropped or failed); carries its prior mean log
// rate F' G^t m_0 for t = 1..T.
struct ImputedEdge {
  EdgeKey key;
  Eigen::VectorXd log_rate;
  bool failed = false;
};

// Prior mean log rate F' G^t m_0 for t = 1..length.
Eigen::VectorXd prior_log_rate_path(const ModelSpecd& spec, int length);

struct NetworkPosterior {
  int nodes = 0;
  int length = 0;
  OccupancyRatios ratios;
  std::vector<EdgePosterior> edges;  // filtered edges, canonical order
  std::vector<ImputedEdge> imputed;  // dropped or failed edges, canonical order
  std::vector<EdgeFailure> failures;
  std::size_t samples = 0;
  std::uint64_t seed = 0;

  const EdgePosterior* find(EdgeKey key) const;
  const ImputedEdge* find_imputed(EdgeKey key) const;
};

// Filters every edge independently on up to `workers` threads. Results are
// identical for any worker count. Per-edge numerical failures are collected
// in `failures` rather than aborting the run.
NetworkPosterior filter_network(const FlowPanel& panel, const NetworkModelConfig& cfg, int workers,
                                const std::map<EdgeKey, ModelSpecd>& overrides = {});

// Retrospective sampling of every filtered edge. Sample s of every edge is
// drawn from the stream keyed by (seed, edge id, s).
void smooth_network(NetworkPosterior& post, std::size_t n_samples, std::uint64_t seed, int workers);

// Row-normalizes positive rates: theta_ij = phi_ij / sum_j phi_ij.
Eigen::MatrixXd recouple_multinomial(const Eigen::MatrixXd& rates);

// Log-rate array f_ij (i = 1..I rows, j = 0..I columns) for one sample and
// time. Dropped edges use the prior mean F' G^t m_0 of their spec; in strict
// mode a dropped or failed edge raises ConfigError.
Eigen::MatrixXd log_rate_array(const NetworkPosterior& post, std::size_t sample, int t, bool strict = false);

// samples x (I+1) transition probabilities out of `origin` at time t.
Eigen::MatrixXd transition_samples(const NetworkPosterior& post, int origin, int t, bool strict = false);

}  // namespace netflow
