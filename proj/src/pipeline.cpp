#include "netflow/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "netflow/error.hpp"
#include "netflow/evaluation.hpp"
#include "netflow/gravity.hpp"
#include "netflow/io.hpp"
#include "netflow/parallel.hpp"
#include "netflow/retro.hpp"
#include "netflow/stats.hpp"

namespace netflow {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kZ975 = 1.959963984540054;

const char* const kStageNames[] = {"simulate", "filter", "smooth", "gravity", "evaluate", "report"};

// ---- config -------------------------------------------------------------

const char* form_name(ModelForm f) {
  switch (f) {
    case ModelForm::level: return "level";
    case ModelForm::llgm: return "llgm";
    case ModelForm::quadratic: return "quadratic";
  }
  return "llgm";
}

ModelForm parse_form(const std::string& s) {
  if (s == "level") return ModelForm::level;
  if (s == "llgm") return ModelForm::llgm;
  if (s == "quadratic") return ModelForm::quadratic;
  throw ConfigError("config: model must be level, llgm or quadratic (got '" + s + "')");
}

const char* shape_name(BaselineShape b) {
  switch (b) {
    case BaselineShape::constant: return "constant";
    case BaselineShape::sinusoid: return "sinusoid";
    case BaselineShape::piecewise: return "piecewise";
  }
  return "sinusoid";
}

BaselineShape parse_shape(const std::string& s) {
  if (s == "constant") return BaselineShape::constant;
  if (s == "sinusoid") return BaselineShape::sinusoid;
  if (s == "piecewise") return BaselineShape::piecewise;
  throw ConfigError("config: scenario.baseline must be constant, sinusoid or piecewise (got '" + s + "')");
}

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw ConfigError("config: unknown key '" + where + key + "'");
  }
}

template <typename T>
void read_key(const json& obj, const char* key, T& target, const std::string& where = "") {
  if (!obj.contains(key)) return;
  try {
    target = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: '" + where + key + "' has the wrong type");
  }
}

ScenarioSpec parse_scenario(const json& j, int nodes, int length, std::uint64_t seed) {
  if (!j.is_object()) throw ConfigError("config: scenario must be an object");
  reject_unknown(j,
                 {"nodes", "length", "baseline", "baseline_level", "baseline_amplitude", "period", "phase", "knots",
                  "origin_effects", "destination_effects", "effect_amplitude", "bumps"},
                 "scenario.");
  read_key(j, "nodes", nodes, "scenario.");
  read_key(j, "length", length, "scenario.");
  if (nodes < 1 || length < 1) throw ConfigError("config: scenario needs nodes >= 1 and length >= 1");
  ScenarioSpec s = default_scenario(nodes, length, seed);
  std::string shape = shape_name(s.baseline);
  read_key(j, "baseline", shape, "scenario.");
  s.baseline = parse_shape(shape);
  read_key(j, "baseline_level", s.baseline_level, "scenario.");
  read_key(j, "baseline_amplitude", s.baseline_amplitude, "scenario.");
  read_key(j, "period", s.period, "scenario.");
  read_key(j, "phase", s.phase, "scenario.");
  read_key(j, "knots", s.baseline_knots, "scenario.");
  read_key(j, "origin_effects", s.origin_effects, "scenario.");
  read_key(j, "destination_effects", s.destination_effects, "scenario.");
  read_key(j, "effect_amplitude", s.effect_amplitude, "scenario.");
  if (j.contains("bumps")) {
    if (!j["bumps"].is_array()) throw ConfigError("config: scenario.bumps must be an array");
    s.bumps.clear();
    for (const auto& b : j["bumps"]) {
      reject_unknown(b, {"origin", "destination", "height", "center", "width"}, "scenario.bumps[].");
      AffinityBump bump;
      read_key(b, "origin", bump.origin);
      read_key(b, "destination", bump.destination);
      read_key(b, "height", bump.height);
      read_key(b, "center", bump.center);
      read_key(b, "width", bump.width);
      s.bumps.push_back(bump);
    }
  }
  return s;
}

json scenario_json(const ScenarioSpec& s) {
  json bumps = json::array();
  for (const auto& b : s.bumps)
    bumps.push_back({{"origin", b.origin}, {"destination", b.destination}, {"height", b.height},
                     {"center", b.center}, {"width", b.width}});
  return {{"nodes", s.nodes},
          {"length", s.length},
          {"baseline", shape_name(s.baseline)},
          {"baseline_level", s.baseline_level},
          {"baseline_amplitude", s.baseline_amplitude},
          {"period", s.period},
          {"phase", s.phase},
          {"knots", s.baseline_knots},
          {"origin_effects", s.origin_effects},
          {"destination_effects", s.destination_effects},
          {"effect_amplitude", s.effect_amplitude},
          {"bumps", bumps}};
}

ScenarioSpec effective_scenario(const RunConfig& cfg) {
  ScenarioSpec s = cfg.scenario ? *cfg.scenario
                                : default_scenario(cfg.nodes.value_or(10), cfg.length.value_or(288), cfg.seed);
  s.seed = cfg.seed;
  return s;
}

// ---- tables -------------------------------------------------------------

std::string num(double v) { return io::format_double(v); }

class Table {
 public:
  explicit Table(std::string_view header) : text_(header) { text_ += '\n'; }

  template <typename... Fields>
  void row(const Fields&... fields) {
    bool first = true;
    ((append(fields, first)), ...);
    text_ += '\n';
  }
  const std::string& text() const { return text_; }

 private:
  void sep(bool& first) {
    if (!first) text_ += ',';
    first = false;
  }
  void append(double v, bool& first) {
    sep(first);
    text_ += num(v);
  }
  void append(const std::string& v, bool& first) {
    sep(first);
    text_ += v;
  }
  void append(const char* v, bool& first) {
    sep(first);
    text_ += v;
  }
  void append(char v, bool& first) {
    sep(first);
    text_ += v;
  }
  template <typename Int>
    requires std::is_integral_v<Int>
  void append(Int v, bool& first) {
    sep(first);
    text_ += std::to_string(v);
  }

  std::string text_;
};

std::vector<io::CsvRow> read_table(const fs::path& path, std::string_view header) {
  std::istringstream in(io::read_file(path));
  try {
    return io::read_csv(in, header);
  } catch (const ParseError& e) {
    throw ParseError(path.filename().string() + ": " + e.what());
  }
}

// ---- stage context ------------------------------------------------------

struct PanelInput {
  FlowPanel panel;
  std::string hash;
};

class StageRun {
 public:
  StageRun(Stage stage, const RunConfig& cfg)
      : stage_(stage), cfg_(cfg), dir_(cfg.out), config_hash_(io::hex64(io::fnv1a(canonical_config(cfg)))) {}

  const RunConfig& cfg() const { return cfg_; }
  const fs::path& dir() const { return dir_; }

  PanelInput& input() {
    if (!input_) input_ = load_input();
    return *input_;
  }

  // Throws DependencyError unless `upstream` ran with this config and input.
  void require(Stage upstream) {
    const std::string name(stage_name(upstream));
    const fs::path path = dir_ / ("manifest_" + name + ".json");
    if (!fs::exists(path))
      throw DependencyError("no `" + name + "` outputs in " + dir_.string() + "; run `netflow " + name + "` first");
    json m;
    try {
      m = json::parse(io::read_file(path));
    } catch (const json::exception&) {
      throw DependencyError(path.string() + " is unreadable; rerun `netflow " + name + "`");
    }
    const std::string input_hash = upstream == Stage::simulate ? io::hex64(io::fnv1a("")) : input().hash;
    if (m.value("config_hash", "") != config_hash_ || m.value("input_hash", "") != input_hash)
      throw DependencyError("`" + name + "` outputs in " + dir_.string() +
                            " were produced from a different config or input; rerun `netflow " + name + "`");
  }

  void write(const std::string& name, const std::string& contents) {
    io::write_file(dir_ / name, contents);
    outputs_[name] = io::hex64(io::fnv1a(contents));
  }

  void finish() {
    json m;
    m["stage"] = std::string(stage_name(stage_));
    m["config_hash"] = config_hash_;
    m["input_hash"] = stage_ == Stage::simulate ? io::hex64(io::fnv1a("")) : input().hash;
    m["seed"] = cfg_.seed;
    m["samples"] = cfg_.samples;
    m["outputs"] = outputs_;
    io::write_file(dir_ / ("manifest_" + std::string(stage_name(stage_)) + ".json"), m.dump(2) + "\n");
  }

 private:
  PanelInput load_input() const {
    fs::path flows, occupancy;
    bool has_occupancy = false;
    if (cfg_.flows) {
      flows = *cfg_.flows;
      if (cfg_.occupancy) {
        occupancy = *cfg_.occupancy;
        has_occupancy = true;
      }
    } else if (fs::exists(dir_ / "panel_flows.csv")) {
      flows = dir_ / "panel_flows.csv";
      occupancy = dir_ / "panel_occupancy.csv";
      has_occupancy = fs::exists(occupancy);
    } else {
      throw DependencyError("no input panel: set \"flows\" in the config, pass --flows, or run `netflow simulate` first");
    }
    const std::string flow_bytes = io::read_file(flows);
    const std::string occ_bytes = has_occupancy ? io::read_file(occupancy) : std::string();
    std::uint64_t h = io::fnv1a(flow_bytes);
    h = io::fnv1a(has_occupancy ? "\x1e" : "\x1f", h);
    h = io::fnv1a(occ_bytes, h);

    io::PanelShape shape{cfg_.nodes, cfg_.length};
    std::istringstream f(flow_bytes);
    std::istringstream o(occ_bytes);
    auto wrap = [&](const ParseError& e, const fs::path& p) { return ParseError(p.filename().string() + ": " + e.what()); };
    try {
      return {io::parse_panel(f, has_occupancy ? &o : nullptr, shape), io::hex64(h)};
    } catch (const ParseError& e) {
      throw wrap(e, flows);
    }
  }

  Stage stage_;
  const RunConfig& cfg_;
  fs::path dir_;
  std::string config_hash_;
  std::optional<PanelInput> input_;
  std::map<std::string, std::string> outputs_;
};

std::string key_text(EdgeKey k) { return std::to_string(k.origin) + "," + std::to_string(k.destination); }

std::string sanitize(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

const char* component_name(char c) {
  switch (c) {
    case 'h': return "mu";
    case 'a': return "alpha";
    case 'b': return "beta";
    default: return "gamma";
  }
}

// Rebuilds the filtered network from filter_states.csv and filter_edges.csv.
// Only what backward sampling needs (posterior mean and covariance per t) is
// restored; the text form is exact, so samples match an in-memory run.
NetworkPosterior load_posterior(StageRun& run) {
  const FlowPanel& panel = run.input().panel;
  const RunConfig& cfg = run.cfg();
  NetworkPosterior post;
  post.nodes = panel.nodes();
  post.length = panel.length();
  post.ratios = occupancy_ratios(panel);
  const int T = post.length;

  std::map<EdgeKey, std::string> status;
  for (const auto& row : read_table(run.dir() / "filter_edges.csv", "origin,destination,status,total,message")) {
    const EdgeKey key{static_cast<int>(io::parse_int(row, 0)), static_cast<int>(io::parse_int(row, 1))};
    status[key] = row.fields[2];
  }
  std::map<EdgeKey, std::size_t> index;
  for (const auto& key : edge_universe(post.nodes)) {
    auto it = status.find(key);
    if (it == status.end()) throw ParseError("filter_edges.csv: missing edge " + key_text(key));
    const auto series = edge_series(panel, post.ratios, key);
    ModelSpecd spec = default_edge_spec(cfg.model, series);
    if (it->second == "filtered") {
      EdgePosterior e;
      e.key = key;
      e.filtered.steps.resize(static_cast<std::size_t>(T));
      for (int t = 1; t <= T; ++t) {
        auto& b = e.filtered.steps[static_cast<std::size_t>(t - 1)].posterior;
        b.mean = Eigen::VectorXd::Zero(spec.dim());
        b.cov = Eigen::MatrixXd::Zero(spec.dim(), spec.dim());
        b.time_index = t;
      }
      e.spec = std::move(spec);
      index[key] = post.edges.size();
      post.edges.push_back(std::move(e));
    } else {
      post.imputed.push_back({key, prior_log_rate_path(spec, T), it->second == "failed"});
    }
  }

  for (const auto& row :
       read_table(run.dir() / "filter_states.csv", "origin,destination,t,kind,index_i,index_j,value")) {
    const EdgeKey key{static_cast<int>(io::parse_int(row, 0)), static_cast<int>(io::parse_int(row, 1))};
    auto it = index.find(key);
    if (it == index.end()) throw ParseError("filter_states.csv: edge " + key_text(key) + " was not filtered", row.line);
    const auto t = io::parse_int(row, 2);
    const auto i = io::parse_int(row, 4), j = io::parse_int(row, 5);
    auto& edge = post.edges[it->second];
    const auto p = edge.spec.dim();
    if (t < 1 || t > T || i < 0 || i >= p || j < 0 || j >= p) throw ParseError("filter_states.csv: index out of range", row.line);
    auto& b = edge.filtered.steps[static_cast<std::size_t>(t - 1)].posterior;
    const double v = io::parse_double(row, 6);
    if (row.fields[3] == "m") {
      b.mean(i) = v;
    } else if (row.fields[3] == "C") {
      b.cov(i, j) = v;
      b.cov(j, i) = v;
    } else {
      throw ParseError("filter_states.csv: kind must be m or C", row.line);
    }
  }
  return post;
}

// ---- stages -------------------------------------------------------------

void run_simulate(StageRun& run) {
  const ScenarioSpec spec = effective_scenario(run.cfg());
  const auto sim = simulate(spec);
  std::ostringstream flows, occ;
  io::write_panel(sim.panel, flows, occ);
  run.write("panel_flows.csv", flows.str());
  run.write("panel_occupancy.csv", occ.str());

  const int I = spec.nodes;
  Table rates("t,origin,destination,rate");
  Table comps("t,component,index_i,index_j,value");
  for (int t = 1; t <= spec.length; ++t) {
    const auto& r = sim.truth.rates[static_cast<std::size_t>(t - 1)];
    for (int i = 0; i <= I; ++i)
      for (int j = 0; j <= I; ++j)
        if (i || j) rates.row(t, i, j, r(i, j));
    const auto& c = sim.truth.components[static_cast<std::size_t>(t - 1)];
    comps.row(t, "mu", 0, 0, std::exp(c.h));
    for (int i = 1; i <= I; ++i) comps.row(t, "alpha", i, 0, std::exp(c.a(i - 1)));
    for (int j = 0; j <= I; ++j) comps.row(t, "beta", 0, j, std::exp(c.b(j)));
    for (int i = 1; i <= I; ++i)
      for (int j = 0; j <= I; ++j) comps.row(t, "gamma", i, j, std::exp(c.g(i - 1, j)));
  }
  run.write("truth_rates.csv", rates.text());
  run.write("truth_components.csv", comps.text());
}

void run_filter(StageRun& run) {
  const RunConfig& cfg = run.cfg();
  const FlowPanel& panel = run.input().panel;
  const auto post = filter_network(panel, cfg.model, cfg.workers);
  if (cfg.strict && !post.failures.empty())
    throw NumericalError(NumericalFault::invalid_state, "strict mode: edge " + key_text(post.failures.front().key) +
                                                            " failed: " + post.failures.front().message);

  Table filtered("origin,destination,t,x,exposure,f,q,r,c,forecast_mean,lo95,hi95,log_pd,post_f,post_q");
  Table states("origin,destination,t,kind,index_i,index_j,value");
  for (const auto& e : post.edges) {
    const auto& out = e.filtered;
    for (std::size_t k = 0; k < out.length(); ++k) {
      const auto& s = out.steps[k];
      const auto nb = out.forecast(k);
      const int t = static_cast<int>(k) + 1;
      filtered.row(e.key.origin, e.key.destination, t, s.count, s.exposure, s.prior_moments.f, s.prior_moments.q,
                   s.prior_gamma.r, s.prior_gamma.c, nb.mean(), nb.quantile(kBandLow), nb.quantile(kBandHigh),
                   s.log_predictive, s.posterior_moments.f, s.posterior_moments.q);
      const auto p = s.posterior.mean.size();
      for (Eigen::Index i = 0; i < p; ++i) states.row(e.key.origin, e.key.destination, t, 'm', i, 0, s.posterior.mean(i));
      for (Eigen::Index i = 0; i < p; ++i)
        for (Eigen::Index j = i; j < p; ++j)
          states.row(e.key.origin, e.key.destination, t, 'C', i, j, s.posterior.cov(i, j));
    }
  }

  std::map<EdgeKey, std::string> failure;
  for (const auto& f : post.failures) failure[f.key] = f.message;
  Table edges("origin,destination,status,total,message");
  for (const auto& key : edge_universe(panel.nodes())) {
    const auto total = panel.edge_total(key);
    if (post.find(key)) edges.row(key.origin, key.destination, "filtered", total, "");
    else if (auto it = failure.find(key); it != failure.end())
      edges.row(key.origin, key.destination, "failed", total, sanitize(it->second));
    else edges.row(key.origin, key.destination, "dropped", total, "");
  }
  run.write("filtered.csv", filtered.text());
  run.write("filter_states.csv", states.text());
  run.write("filter_edges.csv", edges.text());
}

NetworkPosterior smoothed_posterior(StageRun& run) {
  auto post = load_posterior(run);
  smooth_network(post, run.cfg().samples, run.cfg().seed, run.cfg().workers);
  return post;
}

void run_smooth(StageRun& run) {
  run.require(Stage::filter);
  const RunConfig& cfg = run.cfg();
  const auto post = smoothed_posterior(run);

  Table smoothed(
      "origin,destination,t,log_rate_mean,log_rate_lo95,log_rate_hi95,rate_mean,rate_lo95,rate_median,rate_hi95");
  Table states("origin,destination,t,component,mean,lo95,median,hi95");
  for (const auto& e : post.edges) {
    const auto lam = summarize_columns(e.log_rate_samples);
    const auto rate = summarize_columns(exp_clamped<double>(e.log_rate_samples).rates);
    for (int t = 1; t <= post.length; ++t) {
      const auto k = t - 1;
      smoothed.row(e.key.origin, e.key.destination, t, lam.mean(k), lam.lo(k), lam.hi(k), rate.mean(k), rate.lo(k),
                   rate.median(k), rate.hi(k));
      for (std::size_t c = 0; c < e.state_summaries.size(); ++c) {
        const auto& s = e.state_summaries[c];
        states.row(e.key.origin, e.key.destination, t, c, s.mean(k), s.lo(k), s.median(k), s.hi(k));
      }
    }
  }

  // Recoupled transition probabilities, one block per (origin, t).
  const int I = post.nodes;
  std::vector<ColumnSummary> theta(static_cast<std::size_t>(I * post.length));
  parallel_for(theta.size(), cfg.workers, [&](std::size_t k) {
    const int origin = static_cast<int>(k) / post.length + 1;
    const int t = static_cast<int>(k) % post.length + 1;
    theta[k] = summarize_columns(transition_samples(post, origin, t, cfg.strict));
  });
  Table transitions("origin,destination,t,mean,lo95,hi95");
  for (int i = 1; i <= I; ++i)
    for (int j = 0; j <= I; ++j)
      for (int t = 1; t <= post.length; ++t) {
        const auto& s = theta[static_cast<std::size_t>((i - 1) * post.length + t - 1)];
        transitions.row(i, j, t, s.mean(j), s.lo(j), s.hi(j));
      }

  run.write("smoothed.csv", smoothed.text());
  run.write("smoothed_states.csv", states.text());
  run.write("transitions.csv", transitions.text());
}

void run_gravity(StageRun& run) {
  run.require(Stage::filter);
  run.require(Stage::smooth);
  const RunConfig& cfg = run.cfg();
  const auto post = smoothed_posterior(run);
  const auto dec = decompose_ensemble(post, cfg.workers, cfg.strict);

  Table gravity("t,component,index_i,index_j,mean,lo95,hi95");
  for (const auto& r : summarize(dec))
    gravity.row(r.t, component_name(r.component), r.index_i, r.index_j, r.mean, r.lo, r.hi);
  Table credible("origin,destination,t,credible_value");
  for (int i = 1; i <= dec.nodes; ++i)
    for (int j = 0; j <= dec.nodes; ++j) {
      const auto cv = credible_values(dec, {i, j});
      for (std::size_t k = 0; k < cv.size(); ++k) credible.row(i, j, k + 1, cv[k]);
    }
  run.write("gravity.csv", gravity.text());
  run.write("credible.csv", credible.text());
}

struct EdgeRecords {
  EdgeKey key;
  std::vector<ForecastRecord> llgm;
  std::vector<ForecastRecord> baseline;
};

void run_evaluate(StageRun& run) {
  run.require(Stage::filter);
  const RunConfig& cfg = run.cfg();
  const FlowPanel& panel = run.input().panel;
  const auto ratios = occupancy_ratios(panel);

  std::vector<EdgeRecords> edges;
  for (const auto& row : read_table(run.dir() / "filtered.csv",
                                    "origin,destination,t,x,exposure,f,q,r,c,forecast_mean,lo95,hi95,log_pd,post_f,post_q")) {
    const EdgeKey key{static_cast<int>(io::parse_int(row, 0)), static_cast<int>(io::parse_int(row, 1))};
    if (edges.empty() || !(edges.back().key == key)) edges.push_back({key, {}, {}});
    const auto t = static_cast<int>(io::parse_int(row, 2));
    if (t < cfg.score_start) continue;
    edges.back().llgm.push_back({t, io::parse_double(row, 9), io::parse_double(row, 10), io::parse_double(row, 11),
                                 io::parse_int(row, 3), io::parse_double(row, 12)});
  }
  for (auto& e : edges) {
    const auto series = edge_series(panel, ratios, e.key);
    const auto spec = default_edge_spec(cfg.model, series);
    e.baseline = forecast_records(baseline_filter(matched_baseline(spec, cfg.baseline_discount), series),
                                  cfg.score_start);
  }

  Table forecasts("origin,destination,model,t,observed,mean,lo95,hi95,log_pd");
  Table scores("origin,destination,model,scored,excluded,mape,coverage,log_pd");
  std::vector<ForecastRecord> pooled_llgm, pooled_base;
  auto score = [&](EdgeKey key, const char* model, const std::vector<ForecastRecord>& recs) {
    for (const auto& r : recs) forecasts.row(key.origin, key.destination, model, r.t, r.observed, r.mean, r.lo, r.hi, r.log_predictive);
    if (recs.empty()) return;
    std::size_t scored = 0, excluded = 0;
    double value = std::nan("");
    try {
      const auto m = mape(recs);
      scored = m.scored;
      excluded = m.excluded;
      value = m.value;
    } catch (const ConfigError&) {
      excluded = recs.size();
    }
    scores.row(key.origin, key.destination, model, scored, excluded, value, coverage(recs), total_log_predictive(recs));
  };
  for (const auto& e : edges) {
    score(e.key, "llgm", e.llgm);
    score(e.key, "baseline", e.baseline);
    pooled_llgm.insert(pooled_llgm.end(), e.llgm.begin(), e.llgm.end());
    pooled_base.insert(pooled_base.end(), e.baseline.begin(), e.baseline.end());
  }

  Table summary("model,edges,records,scored,excluded,mape,coverage,log_pd");
  auto pooled = [&](const char* model, const std::vector<ForecastRecord>& recs) {
    if (recs.empty()) {
      summary.row(model, edges.size(), 0, 0, 0, std::nan(""), std::nan(""), 0.0);
      return;
    }
    double value = std::nan("");
    std::size_t scored = 0, excluded = recs.size();
    try {
      const auto m = mape(recs);
      value = m.value;
      scored = m.scored;
      excluded = m.excluded;
    } catch (const ConfigError&) {
    }
    summary.row(model, edges.size(), recs.size(), scored, excluded, value, coverage(recs), total_log_predictive(recs));
  };
  pooled("llgm", pooled_llgm);
  pooled("baseline", pooled_base);

  run.write("forecasts.csv", forecasts.text());
  run.write("scores.csv", scores.text());
  run.write("scores_summary.csv", summary.text());
}

void run_report(StageRun& run) {
  for (Stage s : {Stage::filter, Stage::smooth, Stage::gravity, Stage::evaluate}) run.require(s);

  // Observed rate, filtered and smoothed bands per edge and t.
  Table traj("origin,destination,t,series,mean,lo95,hi95");
  const auto filtered = read_table(run.dir() / "filtered.csv",
                                   "origin,destination,t,x,exposure,f,q,r,c,forecast_mean,lo95,hi95,log_pd,post_f,post_q");
  const auto smoothed = read_table(
      run.dir() / "smoothed.csv",
      "origin,destination,t,log_rate_mean,log_rate_lo95,log_rate_hi95,rate_mean,rate_lo95,rate_median,rate_hi95");
  if (filtered.size() != smoothed.size())
    throw DependencyError("smoothed.csv does not match filtered.csv; rerun `netflow smooth`");
  std::size_t start = 0;
  while (start < filtered.size()) {
    std::size_t end = start;
    while (end < filtered.size() && filtered[end].fields[0] == filtered[start].fields[0] &&
           filtered[end].fields[1] == filtered[start].fields[1])
      ++end;
    const std::string& o = filtered[start].fields[0];
    const std::string& d = filtered[start].fields[1];
    for (std::size_t k = start; k < end; ++k) {
      const double rate = io::parse_double(filtered[k], 3) / io::parse_double(filtered[k], 4);
      traj.row(o, d, filtered[k].fields[2], "observed", rate, rate, rate);
    }
    for (std::size_t k = start; k < end; ++k) {
      const double f = io::parse_double(filtered[k], 13), q = io::parse_double(filtered[k], 14);
      const double sd = std::sqrt(q);
      traj.row(o, d, filtered[k].fields[2], "filtered", std::exp(f + 0.5 * q), std::exp(f - kZ975 * sd),
               std::exp(f + kZ975 * sd));
    }
    for (std::size_t k = start; k < end; ++k) {
      const auto& s = smoothed[k];
      if (s.fields[0] != o || s.fields[1] != d || s.fields[2] != filtered[k].fields[2])
        throw DependencyError("smoothed.csv does not match filtered.csv; rerun `netflow smooth`");
      traj.row(o, d, s.fields[2], "smoothed", s.fields[6], s.fields[7], s.fields[9]);
    }
    start = end;
  }

  // Gravity components with credible values attached to affinities.
  std::map<std::tuple<std::string, std::string, std::string>, std::string> cv;
  for (const auto& r : read_table(run.dir() / "credible.csv", "origin,destination,t,credible_value"))
    cv[{r.fields[0], r.fields[1], r.fields[2]}] = r.fields[3];
  Table dgm("t,component,index_i,index_j,mean,lo95,hi95,credible_value");
  for (const auto& r : read_table(run.dir() / "gravity.csv", "t,component,index_i,index_j,mean,lo95,hi95")) {
    std::string value;
    if (r.fields[1] == "gamma") value = cv[{r.fields[2], r.fields[3], r.fields[0]}];
    dgm.row(r.fields[0], r.fields[1], r.fields[2], r.fields[3], r.fields[4], r.fields[5], r.fields[6], value);
  }

  // Running MAPE per edge and model.
  Table running("origin,destination,model,t,running_mape");
  const auto fc = read_table(run.dir() / "forecasts.csv", "origin,destination,model,t,observed,mean,lo95,hi95,log_pd");
  start = 0;
  while (start < fc.size()) {
    std::size_t end = start;
    std::vector<ForecastRecord> recs;
    while (end < fc.size() && fc[end].fields[0] == fc[start].fields[0] && fc[end].fields[1] == fc[start].fields[1] &&
           fc[end].fields[2] == fc[start].fields[2]) {
      ForecastRecord r;
      r.t = static_cast<int>(io::parse_int(fc[end], 3));
      r.observed = io::parse_int(fc[end], 4);
      r.mean = io::parse_double(fc[end], 5);
      recs.push_back(r);
      ++end;
    }
    try {
      const auto m = mape(recs);
      for (std::size_t k = 0; k < recs.size(); ++k)
        running.row(fc[start].fields[0], fc[start].fields[1], fc[start].fields[2], recs[k].t, m.running[k]);
    } catch (const ConfigError&) {
      // every observation zero: no defined MAPE for this edge
    }
    start = end;
  }

  run.write("report_trajectories.csv", traj.text());
  run.write("report_dgm.csv", dgm.text());
  run.write("report_mape.csv", running.text());
}

}  // namespace

std::string_view stage_name(Stage stage) { return kStageNames[static_cast<int>(stage)]; }

std::optional<Stage> parse_stage(std::string_view name) {
  for (int k = 0; k < 6; ++k)
    if (name == kStageNames[k]) return static_cast<Stage>(k);
  return std::nullopt;
}

RunConfig parse_config(std::string_view json_text, const fs::path& base) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  reject_unknown(j,
                 {"model", "discount", "prior_variance", "level_floor", "prior_window", "traffic_threshold", "samples",
                  "seed", "workers", "out", "nodes", "length", "strict", "baseline_discount", "score_start", "flows",
                  "occupancy", "scenario"},
                 "");
  RunConfig cfg;
  std::string form = form_name(cfg.model.form);
  read_key(j, "model", form);
  cfg.model.form = parse_form(form);
  read_key(j, "discount", cfg.model.discount);
  read_key(j, "prior_variance", cfg.model.prior_variance);
  read_key(j, "level_floor", cfg.model.level_floor);
  read_key(j, "prior_window", cfg.model.prior_window);
  read_key(j, "traffic_threshold", cfg.model.traffic_threshold);
  read_key(j, "samples", cfg.samples);
  read_key(j, "seed", cfg.seed);
  read_key(j, "workers", cfg.workers);
  read_key(j, "strict", cfg.strict);
  read_key(j, "baseline_discount", cfg.baseline_discount);
  read_key(j, "score_start", cfg.score_start);
  auto path_key = [&](const char* key) -> std::optional<fs::path> {
    if (!j.contains(key)) return std::nullopt;
    std::string s;
    read_key(j, key, s);
    fs::path p(s);
    return p.is_relative() && !base.empty() ? base / p : p;
  };
  if (auto p = path_key("out")) cfg.out = *p;
  cfg.flows = path_key("flows");
  cfg.occupancy = path_key("occupancy");
  if (j.contains("nodes")) {
    int n = 0;
    read_key(j, "nodes", n);
    cfg.nodes = n;
  }
  if (j.contains("length")) {
    int n = 0;
    read_key(j, "length", n);
    cfg.length = n;
  }
  if (j.contains("scenario"))
    cfg.scenario = parse_scenario(j["scenario"], cfg.nodes.value_or(10), cfg.length.value_or(288), cfg.seed);

  if (!(cfg.model.discount > 0.0 && cfg.model.discount <= 1.0)) throw ConfigError("config: discount must lie in (0, 1]");
  if (!(cfg.baseline_discount > 0.0 && cfg.baseline_discount <= 1.0))
    throw ConfigError("config: baseline_discount must lie in (0, 1]");
  if (!(cfg.model.prior_variance > 0.0)) throw ConfigError("config: prior_variance must be positive");
  if (!(cfg.model.level_floor > 0.0)) throw ConfigError("config: level_floor must be positive");
  if (cfg.model.prior_window < 1) throw ConfigError("config: prior_window must be at least 1");
  if (cfg.samples < 1) throw ConfigError("config: samples must be at least 1");
  if (cfg.workers < 1) throw ConfigError("config: workers must be at least 1");
  if (cfg.score_start < 1) throw ConfigError("config: score_start must be at least 1");
  if (cfg.nodes && *cfg.nodes < 1) throw ConfigError("config: nodes must be at least 1");
  if (cfg.length && *cfg.length < 1) throw ConfigError("config: length must be at least 1");
  if (cfg.occupancy && !cfg.flows) throw ConfigError("config: occupancy given without flows");
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  return parse_config(io::read_file(path), path.has_parent_path() ? path.parent_path() : fs::path());
}

std::string canonical_config(const RunConfig& cfg) {
  json j;
  j["model"] = form_name(cfg.model.form);
  j["discount"] = cfg.model.discount;
  j["prior_variance"] = cfg.model.prior_variance;
  j["level_floor"] = cfg.model.level_floor;
  j["prior_window"] = cfg.model.prior_window;
  j["traffic_threshold"] = cfg.model.traffic_threshold;
  j["samples"] = cfg.samples;
  j["seed"] = cfg.seed;
  j["nodes"] = cfg.nodes ? json(*cfg.nodes) : json(nullptr);
  j["length"] = cfg.length ? json(*cfg.length) : json(nullptr);
  j["strict"] = cfg.strict;
  j["baseline_discount"] = cfg.baseline_discount;
  j["score_start"] = cfg.score_start;
  j["scenario"] = scenario_json(effective_scenario(cfg));
  return j.dump();
}

void run_stage(Stage stage, const RunConfig& cfg) {
  StageRun run(stage, cfg);
  switch (stage) {
    case Stage::simulate: run_simulate(run); break;
    case Stage::filter: run_filter(run); break;
    case Stage::smooth: run_smooth(run); break;
    case Stage::gravity: run_gravity(run); break;
    case Stage::evaluate: run_evaluate(run); break;
    case Stage::report: run_report(run); break;
  }
  run.finish();
}

}  // namespace netflow
