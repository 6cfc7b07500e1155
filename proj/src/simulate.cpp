#include "netflow/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "netflow/error.hpp"

namespace netflow {

ScenarioSpec default_scenario(int nodes, int length, std::uint64_t seed) {
  ScenarioSpec s;
  s.nodes = nodes;
  s.length = length;
  s.period = static_cast<double>(length);
  s.seed = seed;
  s.origin_effects.resize(static_cast<std::size_t>(nodes));
  s.destination_effects.resize(static_cast<std::size_t>(nodes + 1));
  for (int i = 0; i < nodes; ++i) {
    const double spread = nodes > 1 ? static_cast<double>(i) / (nodes - 1) - 0.5 : 0.0;
    s.origin_effects[static_cast<std::size_t>(i)] = 0.3 * spread;
    s.destination_effects[static_cast<std::size_t>(i + 1)] = -0.4 * spread;
  }
  // Exits dominate, as with web sessions ending after a page or two. The
  // exit share must stay roughly constant as nodes are added, otherwise
  // inflow balancing runs out of room on large networks.
  s.destination_effects[0] = 2.0 + std::max(0.0, std::log(nodes / 10.0));
  s.effect_amplitude = 0.1;
  const int second = std::min(3, nodes);
  s.bumps = {{1, 1, 1.0, length / 3.0, length / 24.0},
             {second, std::min(second + 1, nodes), 0.8, 2.0 * length / 3.0, length / 24.0}};
  return s;
}

namespace {

double log_baseline(const ScenarioSpec& s, double t) {
  const double base = std::log(s.baseline_level);
  switch (s.baseline) {
    case BaselineShape::constant:
      return base;
    case BaselineShape::sinusoid:
      return base + s.baseline_amplitude * std::sin(2.0 * std::numbers::pi * t / s.period + s.phase);
    case BaselineShape::piecewise: {
      const auto& k = s.baseline_knots;
      if (k.empty()) return base;
      if (t <= k.front().first) return k.front().second;
      if (t >= k.back().first) return k.back().second;
      for (std::size_t i = 1; i < k.size(); ++i) {
        if (t <= k[i].first) {
          const double w = (t - k[i - 1].first) / (k[i].first - k[i - 1].first);
          return k[i - 1].second + w * (k[i].second - k[i - 1].second);
        }
      }
      return k.back().second;
    }
  }
  return base;
}

// Raw I x (I+1) log-rate array before identification.
Eigen::MatrixXd raw_log_rates(const ScenarioSpec& s, int t) {
  const int I = s.nodes;
  const double tt = static_cast<double>(t);
  const double w = 2.0 * std::numbers::pi * tt / s.period;
  Eigen::MatrixXd f(I, I + 1);
  const double h = log_baseline(s, tt);
  for (int i = 1; i <= I; ++i) {
    const double a = (s.origin_effects.empty() ? 0.0 : s.origin_effects[static_cast<std::size_t>(i - 1)]) +
                     s.effect_amplitude * std::sin(w + 2.0 * std::numbers::pi * i / I);
    for (int j = 0; j <= I; ++j) {
      const double b = (s.destination_effects.empty() ? 0.0 : s.destination_effects[static_cast<std::size_t>(j)]) +
                       s.effect_amplitude * std::cos(w + 2.0 * std::numbers::pi * j / (I + 1));
      f(i - 1, j) = h + a + b;
    }
  }
  for (const auto& bump : s.bumps) {
    const double z = (tt - bump.center) / bump.width;
    f(bump.origin - 1, bump.destination) += bump.height * std::exp(-0.5 * z * z);
  }
  return f;
}

void check_scenario(const ScenarioSpec& s) {
  if (s.nodes < 1 || s.length < 1) throw ConfigError("scenario: need at least one node and one time point");
  if (!(s.baseline_level > 0.0)) throw ConfigError("scenario: baseline level must be positive");
  if (!(s.period > 0.0)) throw ConfigError("scenario: period must be positive");
  if (!s.origin_effects.empty() && s.origin_effects.size() != static_cast<std::size_t>(s.nodes))
    throw ConfigError("scenario: origin_effects must have one entry per node");
  if (!s.destination_effects.empty() && s.destination_effects.size() != static_cast<std::size_t>(s.nodes + 1))
    throw ConfigError("scenario: destination_effects must have one entry per node plus exit");
  for (const auto& b : s.bumps)
    if (b.origin < 1 || b.origin > s.nodes || b.destination < 0 || b.destination > s.nodes || !(b.width > 0.0))
      throw ConfigError("scenario: invalid affinity bump");
}

}  // namespace

GroundTruth build_truth(const ScenarioSpec& spec) {
  check_scenario(spec);
  const int I = spec.nodes;
  const int T = spec.length;

  // Internal rates for t = 1..T+2; the two extra points fix the occupancy
  // targets at the end of the series.
  std::vector<Eigen::MatrixXd> internal(static_cast<std::size_t>(T + 2));
  GroundTruth truth;
  truth.nodes = I;
  truth.length = T;
  for (int t = 1; t <= T + 2; ++t) {
    const Eigen::MatrixXd raw = raw_log_rates(spec, t);
    if (!raw.allFinite()) throw ConfigError("scenario: non-finite component path at t=" + std::to_string(t));
    auto slice = decompose(raw);
    const Eigen::MatrixXd f = compose(slice);
    internal[static_cast<std::size_t>(t - 1)] = f.array().exp().matrix();
    if (t <= T) truth.components.push_back(std::move(slice));
  }

  // Mean occupancy: nbar_{i,s} = phi_{i+, s+2}, s = -1..T.
  truth.mean_occupancy = Eigen::MatrixXd::Zero(I + 1, T + 2);
  for (int s = -1; s <= T; ++s) {
    const int source = s + 2;  // 1..T+2
    const Eigen::VectorXd totals = internal[static_cast<std::size_t>(source - 1)].rowwise().sum();
    truth.mean_occupancy.block(1, s + 1, I, 1) = totals;
  }

  truth.rates.reserve(static_cast<std::size_t>(T));
  for (int t = 1; t <= T; ++t) {
    Eigen::MatrixXd rates = Eigen::MatrixXd::Zero(I + 1, I + 1);
    const Eigen::MatrixXd& phi = internal[static_cast<std::size_t>(t - 1)];
    rates.bottomRows(I) = phi;
    const Eigen::VectorXd totals = phi.rowwise().sum();
    for (int j = 1; j <= I; ++j) {
      double transfers = 0.0;
      for (int i = 1; i <= I; ++i) transfers += truth.mean_occupancy(i, t) * phi(i - 1, j) / totals(i - 1);
      const double inflow = truth.mean_occupancy(j, t + 1) - transfers;
      if (!(inflow > 0.0))
        throw ConfigError("scenario: occupancy balance needs a non-positive inflow rate at node " +
                          std::to_string(j) + ", t=" + std::to_string(t) + "; raise exit share");
      rates(0, j) = inflow;
    }
    truth.rates.push_back(std::move(rates));
  }
  return truth;
}

std::vector<std::int64_t> draw_multinomial(Engine& eng, std::int64_t trials, std::span<const double> probs) {
  std::vector<std::int64_t> out(probs.size(), 0);
  double mass = 0.0;
  for (double p : probs) mass += p;
  std::int64_t left = trials;
  for (std::size_t k = 0; k < probs.size() && left > 0; ++k) {
    if (k + 1 == probs.size() || !(mass > probs[k])) {
      out[k] = left;
      break;
    }
    const double p = std::clamp(probs[k] / mass, 0.0, 1.0);
    std::binomial_distribution<std::int64_t> binom(left, p);
    out[k] = binom(eng);
    left -= out[k];
    mass -= probs[k];
  }
  return out;
}

SimulatedTruth simulate_panel(GroundTruth truth, std::uint64_t seed) {
  const int I = truth.nodes;
  const int T = truth.length;
  FlowPanel panel(I, T);
  Engine eng = stream(seed, {0x53494D55ULL});

  std::vector<std::int64_t> occ(static_cast<std::size_t>(I + 1), 0);
  for (int i = 1; i <= I; ++i) {
    const auto before = static_cast<std::int64_t>(std::llround(truth.mean_occupancy(i, 0)));
    occ[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(std::llround(truth.mean_occupancy(i, 1)));
    panel.set_occupancy(i, -1, before);
    panel.set_occupancy(i, 0, occ[static_cast<std::size_t>(i)]);
  }

  std::vector<double> probs(static_cast<std::size_t>(I + 1));
  for (int t = 1; t <= T; ++t) {
    const Eigen::MatrixXd& rates = truth.rates[static_cast<std::size_t>(t - 1)];
    std::vector<std::int64_t> next(static_cast<std::size_t>(I + 1), 0);
    for (int j = 1; j <= I; ++j) {
      std::int64_t x = 0;
      if (rates(0, j) > 0.0) x = std::poisson_distribution<std::int64_t>(rates(0, j))(eng);
      panel.set_count(0, j, t, x);
      next[static_cast<std::size_t>(j)] += x;
    }
    for (int i = 1; i <= I; ++i) {
      const double total = rates.row(i).sum();
      for (int j = 0; j <= I; ++j) probs[static_cast<std::size_t>(j)] = rates(i, j) / total;
      const auto moves = draw_multinomial(eng, occ[static_cast<std::size_t>(i)], probs);
      for (int j = 0; j <= I; ++j) {
        panel.set_count(i, j, t, moves[static_cast<std::size_t>(j)]);
        if (j > 0) next[static_cast<std::size_t>(j)] += moves[static_cast<std::size_t>(j)];
      }
    }
    occ = std::move(next);
    for (int i = 1; i <= I; ++i) panel.set_occupancy(i, t, occ[static_cast<std::size_t>(i)]);
  }
  return {std::move(panel), std::move(truth)};
}

SimulatedTruth simulate(const ScenarioSpec& spec) { return simulate_panel(build_truth(spec), spec.seed); }

}  // namespace netflow
