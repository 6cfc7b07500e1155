#pragma once

// One-step-ahead forecast scoring, plus a power-discounted gamma steady model
// used as the simple-smoothing comparison baseline.

#include <cstdint>
#include <span>
#include <vector>

#include "netflow/dglm.hpp"

namespace netflow {

struct ForecastRecord {
  int t = 0;
  double mean = 0.0;
  double lo = 0.0;  // lower predictive quantile
  double hi = 0.0;  // upper predictive quantile
  std::int64_t observed = 0;
  double log_predictive = 0.0;
};

// Steady model: Ga(r, c) evolves to Ga(delta r, delta c) and updates to
// Ga(delta r + x, delta c + m). Evolution keeps the mean and inflates the
// variance by 1/delta.
struct BaselineSpec {
  double discount = 0.9;
  GammaBeliefd initial{1.0, 1.0};
};

struct BaselineStep {
  GammaBeliefd prior;
  GammaBeliefd posterior;
  std::int64_t count = 0;
  double exposure = 1.0;
  double log_predictive = 0.0;
};

struct BaselineOutput {
  std::vector<BaselineStep> steps;
  NegativeBinomial<double> forecast(std::size_t index) const {
    return {steps[index].prior, steps[index].exposure};
  }
};

BaselineOutput baseline_filter(const BaselineSpec& spec, std::span<const Observation> data);

// Baseline prior matched to a DGLM's initial level moments.
BaselineSpec matched_baseline(const ModelSpecd& spec, double discount);

// Records at every t from `first_t` on, with central `level` predictive intervals.
std::vector<ForecastRecord> forecast_records(const FilterOutputd& out, int first_t = 1, double level = 0.95);
std::vector<ForecastRecord> forecast_records(const BaselineOutput& out, int first_t = 1, double level = 0.95);

struct MapeResult {
  double value = 0.0;
  std::size_t scored = 0;
  std::size_t excluded = 0;      // records with x_t = 0
  std::vector<double> running;   // running MAPE after each record (NaN until first scored)
};

// Mean of |x_t - mean_t| / x_t over records with x_t > 0. Throws ConfigError
// when every observation is zero.
MapeResult mape(std::span<const ForecastRecord> records);

// Fraction of records whose observation lies in [lo, hi].
double coverage(std::span<const ForecastRecord> records);

double total_log_predictive(std::span<const ForecastRecord> records);

}  // namespace netflow
