#include "doctest.h"

#include <cmath>
#include <random>

#include "netflow/gravity.hpp"
#include "netflow/simulate.hpp"

using namespace netflow;

namespace {

void check_identities(const GravitySlice<double>& s, const Eigen::MatrixXd& f, double tol) {
  CHECK(std::abs(s.a.sum()) <= tol);
  CHECK(std::abs(s.b.sum()) <= tol);
  CHECK(s.g.colwise().sum().cwiseAbs().maxCoeff() <= tol);
  CHECK(s.g.rowwise().sum().cwiseAbs().maxCoeff() <= tol);
  CHECK((compose(s) - f).cwiseAbs().maxCoeff() <= tol);
}

// Network posterior whose sample s of edge (i, j) has log rate fn(s, i, j, t).
template <typename Fn>
NetworkPosterior synthetic_posterior(int nodes, int length, std::size_t samples, Fn fn) {
  NetworkPosterior post;
  post.nodes = nodes;
  post.length = length;
  post.samples = samples;
  for (const auto& key : edge_universe(nodes)) {
    EdgePosterior e;
    e.key = key;
    e.log_rate_samples.resize(static_cast<Eigen::Index>(samples), length);
    for (std::size_t s = 0; s < samples; ++s)
      for (int t = 1; t <= length; ++t)
        e.log_rate_samples(static_cast<Eigen::Index>(s), t - 1) = fn(s, key.origin, key.destination, t);
    post.edges.push_back(std::move(e));
  }
  return post;
}

}  // namespace

TEST_CASE("decompose: two-cell network") {
  Eigen::MatrixXd f(1, 2);
  f << std::log(2.0), std::log(8.0);
  const auto s = decompose(f);
  CHECK(std::exp(s.h) == doctest::Approx(4.0));
  CHECK(s.a(0) == doctest::Approx(0.0));
  CHECK(std::exp(s.b(0)) == doctest::Approx(0.5));
  CHECK(std::exp(s.b(1)) == doctest::Approx(2.0));
  CHECK(s.g.cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("decompose: constant array") {
  const auto s = decompose(Eigen::MatrixXd::Constant(4, 5, 1.7));
  CHECK(s.h == doctest::Approx(1.7));
  CHECK(s.a.cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(s.b.cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(s.g.cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("decompose: random arrays satisfy zero-sum identities and reconstruction") {
  std::mt19937_64 eng(31);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int rep = 0; rep < 100; ++rep) {
    Eigen::MatrixXd f(5, 6);
    for (Eigen::Index k = 0; k < f.size(); ++k) f.data()[k] = n(eng);
    const auto s = decompose(f);
    check_identities(s, f, 1e-12);
    // direct definition from sums
    const double h = f.sum() / 30.0;
    CHECK(s.h == doctest::Approx(h).epsilon(1e-14));
    for (int i = 0; i < 5; ++i) CHECK(s.a(i) == doctest::Approx(f.row(i).sum() / 6.0 - h).epsilon(1e-12));
    for (int j = 0; j < 6; ++j) CHECK(s.b(j) == doctest::Approx(f.col(j).sum() / 5.0 - h).epsilon(1e-12));
  }
}

TEST_CASE("decompose is linear and absorbs global scale in the baseline") {
  std::mt19937_64 eng(8);
  std::normal_distribution<double> n;
  Eigen::MatrixXd f1(3, 4), f2(3, 4);
  for (Eigen::Index k = 0; k < f1.size(); ++k) {
    f1.data()[k] = n(eng);
    f2.data()[k] = n(eng);
  }
  const auto s1 = decompose(f1);
  const auto s2 = decompose(f2);
  const auto sum = decompose(Eigen::MatrixXd(f1 + f2));
  CHECK(sum.h == doctest::Approx(s1.h + s2.h).epsilon(1e-13));
  CHECK((sum.a - s1.a - s2.a).cwiseAbs().maxCoeff() <= 1e-13);
  CHECK((sum.b - s1.b - s2.b).cwiseAbs().maxCoeff() <= 1e-13);
  CHECK((sum.g - s1.g - s2.g).cwiseAbs().maxCoeff() <= 1e-13);

  const double k = std::log(3.5);
  const auto shifted = decompose(Eigen::MatrixXd(f1.array() + k));
  CHECK(shifted.h == doctest::Approx(s1.h + k).epsilon(1e-14));
  CHECK((shifted.a - s1.a).cwiseAbs().maxCoeff() <= 1e-13);
  CHECK((shifted.b - s1.b).cwiseAbs().maxCoeff() <= 1e-13);
  CHECK((shifted.g - s1.g).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("credible values") {
  SUBCASE("one-sided and balanced samples") {
    CHECK(credible_value(Eigen::VectorXd::Constant(200, 0.3)) == 0.0);
    Eigen::VectorXd half(200);
    for (int s = 0; s < 200; ++s) half(s) = s % 2 ? 0.5 : -0.5;
    CHECK(credible_value(half) == 1.0);
  }
  SUBCASE("lognormal with 97.5 percent of its mass above one") {
    std::mt19937_64 eng(123);
    std::normal_distribution<double> n(1.959963984540054, 1.0);
    const int draws = 200000;
    Eigen::VectorXd g(draws);
    for (int s = 0; s < draws; ++s) g(s) = n(eng);
    // binomial sd of 2 * frequency near 0.025
    CHECK(std::abs(credible_value(g) - 0.05) <= 4.0 * 2.0 * std::sqrt(0.025 * 0.975 / draws));
  }
  SUBCASE("invariant to monotone relabeling") {
    std::mt19937_64 eng(2);
    std::normal_distribution<double> n(0.4, 1.0);
    Eigen::VectorXd g(500);
    for (int s = 0; s < 500; ++s) g(s) = n(eng);
    const Eigen::VectorXd cubed = g.array().cube();
    CHECK(credible_value(g) == credible_value(cubed));
    CHECK(credible_value(g) >= 0.0);
    CHECK(credible_value(g) <= 1.0);
  }
}

TEST_CASE("decompose_ensemble on synthetic posteriors") {
  SUBCASE("unit rates give unit effects") {
    const auto post = synthetic_posterior(3, 4, 10, [](std::size_t, int, int, int) { return 0.0; });
    const auto dec = decompose_ensemble(post, 2);
    for (const auto& row : summarize(dec)) {
      CHECK(row.mean == 1.0);
      CHECK(row.lo == 1.0);
      CHECK(row.hi == 1.0);
    }
  }
  SUBCASE("doubling every rate at one time doubles the baseline only") {
    std::mt19937_64 eng(4);
    std::normal_distribution<double> n;
    Eigen::MatrixXd base = Eigen::MatrixXd::NullaryExpr(12 * 16, 2, [&] { return n(eng); });
    auto value = [&](std::size_t s, int i, int j, int t) { return base(static_cast<Eigen::Index>(s * 16 + i * 4 + j), 0) + (t == 2 ? std::log(2.0) : 0.0); };
    const auto doubled = decompose_ensemble(synthetic_posterior(3, 2, 12, value), 1);
    const auto plain = decompose_ensemble(
        synthetic_posterior(3, 2, 12, [&](std::size_t s, int i, int j, int) { return value(s, i, j, 1); }), 1);
    CHECK((doubled.h[1].array().exp() / plain.h[1].array().exp() - 2.0).abs().maxCoeff() <= 1e-12);
    CHECK((doubled.a[1] - plain.a[1]).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((doubled.b[1] - plain.b[1]).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((doubled.g[1] - plain.g[1]).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("identities hold per sample and time, independent of workers") {
    std::mt19937_64 eng(6);
    std::normal_distribution<double> n;
    Eigen::MatrixXd draws = Eigen::MatrixXd::NullaryExpr(7 * 25, 5, [&] { return n(eng); });
    const auto post = synthetic_posterior(4, 5, 7, [&](std::size_t s, int i, int j, int t) {
      return draws(static_cast<Eigen::Index>(s * 25 + i * 5 + j), t - 1);
    });
    const auto dec = decompose_ensemble(post, 3);
    const auto dec1 = decompose_ensemble(post, 1);
    for (int t = 1; t <= 5; ++t) {
      const auto k = static_cast<std::size_t>(t - 1);
      CHECK(dec.g[k] == dec1.g[k]);
      for (std::size_t s = 0; s < 7; ++s) {
        const auto si = static_cast<Eigen::Index>(s);
        const Eigen::MatrixXd f = log_rate_array(post, s, t);
        GravitySlice<double> slice{dec.h[k](si), dec.a[k].row(si).transpose(), dec.b[k].row(si).transpose(),
                                   Eigen::MatrixXd(4, 5)};
        for (int i = 0; i < 4; ++i) slice.g.row(i) = dec.g[k].row(si).segment(i * 5, 5);
        check_identities(slice, f, 1e-10);
      }
    }
    const auto cv = credible_values(dec, {2, 0});
    CHECK(cv.size() == 5u);
    CHECK_THROWS_AS(credible_values(dec, {0, 1}), ConfigError);
  }
  SUBCASE("unsmoothed posterior") {
    NetworkPosterior post;
    post.nodes = 2;
    post.length = 3;
    CHECK_THROWS_AS(decompose_ensemble(post, 1), DependencyError);
  }
}

TEST_CASE("posterior baseline tracks the simulated truth") {
  auto scenario = default_scenario(4, 96, 21);
  scenario.period = 96;
  const auto sim = simulate(scenario);
  auto post = filter_network(sim.panel, NetworkModelConfig{}, 2);
  smooth_network(post, 200, 9, 2);
  const auto dec = decompose_ensemble(post, 2);
  Eigen::VectorXd est(96), truth(96);
  for (int t = 1; t <= 96; ++t) {
    est(t - 1) = dec.h[static_cast<std::size_t>(t - 1)].array().exp().mean();
    truth(t - 1) = std::exp(sim.truth.components[static_cast<std::size_t>(t - 1)].h);
  }
  const Eigen::ArrayXd a = est.array() - est.mean();
  const Eigen::ArrayXd b = truth.array() - truth.mean();
  const double corr = (a * b).sum() / std::sqrt(a.square().sum() * b.square().sum());
  CHECK(corr >= 0.9);
}
