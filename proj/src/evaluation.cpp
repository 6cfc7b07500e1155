#include "netflow/evaluation.hpp"

#include <cmath>
#include <limits>

#include "netflow/error.hpp"

namespace netflow {

BaselineOutput baseline_filter(const BaselineSpec& spec, std::span<const Observation> data) {
  if (!(spec.discount > 0.0 && spec.discount <= 1.0)) throw ConfigError("baseline: discount must lie in (0, 1]");
  if (!(spec.initial.r > 0.0 && spec.initial.c > 0.0)) throw ConfigError("baseline: initial gamma must be positive");
  BaselineOutput out;
  out.steps.reserve(data.size());
  GammaBeliefd post = spec.initial;
  for (const auto& obs : data) {
    BaselineStep step;
    step.count = obs.count;
    step.exposure = obs.exposure;
    step.prior = {spec.discount * post.r, spec.discount * post.c};
    step.log_predictive = forecast_negbin(step.prior, obs.exposure).log_pmf(obs.count);
    step.posterior = conjugate_update(step.prior, obs.count, obs.exposure).posterior;
    post = step.posterior;
    out.steps.push_back(step);
  }
  return out;
}

BaselineSpec matched_baseline(const ModelSpecd& spec, double discount) {
  const PredictorMomentsd level{spec.F.dot(spec.prior_mean), spec.F.dot(spec.prior_cov * spec.F)};
  return {discount, gamma_match(level)};
}

namespace {

template <typename Output>
std::vector<ForecastRecord> records_from(const Output& out, int first_t, double level) {
  const double tail = 0.5 * (1.0 - level);
  std::vector<ForecastRecord> records;
  for (std::size_t k = 0; k < out.steps.size(); ++k) {
    const int t = static_cast<int>(k) + 1;
    if (t < first_t) continue;
    const auto nb = out.forecast(k);
    records.push_back({t, nb.mean(), static_cast<double>(nb.quantile(tail)),
                       static_cast<double>(nb.quantile(1.0 - tail)), out.steps[k].count,
                       out.steps[k].log_predictive});
  }
  return records;
}

}  // namespace

std::vector<ForecastRecord> forecast_records(const FilterOutputd& out, int first_t, double level) {
  return records_from(out, first_t, level);
}

std::vector<ForecastRecord> forecast_records(const BaselineOutput& out, int first_t, double level) {
  return records_from(out, first_t, level);
}

MapeResult mape(std::span<const ForecastRecord> records) {
  if (records.empty()) throw ConfigError("mape: no forecast records");
  MapeResult res;
  res.running.reserve(records.size());
  double sum = 0.0;
  for (const auto& r : records) {
    if (r.observed == 0) {
      ++res.excluded;
    } else {
      const auto x = static_cast<double>(r.observed);
      sum += std::abs(x - r.mean) / x;
      ++res.scored;
    }
    res.running.push_back(res.scored ? sum / static_cast<double>(res.scored)
                                     : std::numeric_limits<double>::quiet_NaN());
  }
  if (res.scored == 0) throw ConfigError("mape: undefined when every observation is zero");
  res.value = sum / static_cast<double>(res.scored);
  return res;
}

double coverage(std::span<const ForecastRecord> records) {
  if (records.empty()) return 0.0;
  std::size_t inside = 0;
  for (const auto& r : records) {
    const auto x = static_cast<double>(r.observed);
    if (x >= r.lo && x <= r.hi) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(records.size());
}

double total_log_predictive(std::span<const ForecastRecord> records) {
  double sum = 0.0;
  for (const auto& r : records) sum += r.log_predictive;
  return sum;
}

}  // namespace netflow
