#pragma once

// Synthetic panels from a known dynamic gravity model.
//
// Internal rates phi_ijt = exp(h_t + a_it + b_jt + g_ijt) come straight from
// the scenario paths. Visitors leave node i at t by a multinomial draw over
// n_{i,t-1} occupants with theta_it proportional to phi_i.t. Inflow rates are
// not part of the gravity model; they are derived so that the expected
// occupancy satisfies E[n_{i,t-2}] = phi_{i+,t}. Under that balance the
// decoupled Poisson mean m_it phi_ijt matches the multinomial mean
// n_{i,t-1} theta_ijt, so phi is the quantity the edge filters estimate.

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "netflow/gravity.hpp"
#include "netflow/network.hpp"
#include "netflow/rng.hpp"

namespace netflow {

enum class BaselineShape { constant, sinusoid, piecewise };

// Gaussian-shaped bump in log affinity g_ij.
struct AffinityBump {
  int origin = 1;
  int destination = 1;
  double height = 1.0;
  double center = 0.0;
  double width = 10.0;
};

struct ScenarioSpec {
  int nodes = 10;
  int length = 288;
  BaselineShape baseline = BaselineShape::sinusoid;
  double baseline_level = 6.0;      // mu at zero log-scale deviation
  double baseline_amplitude = 0.5;  // log-scale sinusoid amplitude
  double period = 288.0;
  double phase = 0.0;
  std::vector<std::pair<double, double>> baseline_knots;  // (t, log mu), piecewise linear
  std::vector<double> origin_effects;       // log alpha_i, size I (empty = 0)
  std::vector<double> destination_effects;  // log beta_j, size I+1 (empty = 0)
  double effect_amplitude = 0.0;            // per-node sinusoidal drift of a and b
  std::vector<AffinityBump> bumps;
  std::uint64_t seed = 1;
};

// Case-study shaped default: diurnal baseline, a strong exit destination,
// mild node heterogeneity and two affinity bumps.
ScenarioSpec default_scenario(int nodes = 10, int length = 288, std::uint64_t seed = 1);

struct GroundTruth {
  int nodes = 0;
  int length = 0;
  std::vector<GravitySlice<double>> components;  // [t-1], zero-sum
  std::vector<Eigen::MatrixXd> rates;            // [t-1], (I+1)x(I+1); row 0 inflows, (0,0) unused
  Eigen::MatrixXd mean_occupancy;                // (I+1) x (T+2), column s+1 holds t = s

  double rate(EdgeKey key, int t) const { return rates[static_cast<std::size_t>(t - 1)](key.origin, key.destination); }
};

GroundTruth build_truth(const ScenarioSpec& spec);

struct SimulatedTruth {
  FlowPanel panel;
  GroundTruth truth;
};

SimulatedTruth simulate_panel(GroundTruth truth, std::uint64_t seed);
SimulatedTruth simulate(const ScenarioSpec& spec);

// Multinomial(trials, probs) by sequential conditional binomials.
std::vector<std::int64_t> draw_multinomial(Engine& eng, std::int64_t trials, std::span<const double> probs);

}  // namespace netflow
