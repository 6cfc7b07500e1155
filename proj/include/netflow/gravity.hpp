#pragma once

// Dynamic gravity model view of edge rates:
//   phi_ijt = mu_t * alpha_it * beta_jt * gamma_ijt,  i = 1..I, j = 0..I,
// identified by zero-sum constraints on the log scale. With f = log phi and
// "+" denoting summation over an index:
//   h   = f_++ / (I (I+1))
//   a_i = f_i+ / (I+1) - h
//   b_j = f_+j / I - h
//   g_ij = f_ij - h - a_i - b_j

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

#include "netflow/network.hpp"
#include "netflow/stats.hpp"

namespace netflow {

template <typename Scalar>
struct GravitySlice {
  Scalar h;
  Vector<Scalar> a;  // I
  Vector<Scalar> b;  // I+1, index 0 is exit
  Matrix<Scalar> g;  // I x (I+1)
};

// `f` is I x (I+1): row i-1 holds origin i, column j holds destination j.
template <typename Derived>
GravitySlice<typename Derived::Scalar> decompose(const Eigen::MatrixBase<Derived>& f) {
  using Scalar = typename Derived::Scalar;
  const auto I = f.rows();
  GravitySlice<Scalar> out;
  out.h = f.sum() / static_cast<Scalar>(I * (I + 1));
  out.a = (f.rowwise().sum() / static_cast<Scalar>(I + 1)).array() - out.h;
  out.b = (f.colwise().sum().transpose() / static_cast<Scalar>(I)).array() - out.h;
  out.g = (f.array().colwise() - out.a.array()).rowwise() - out.b.transpose().array();
  out.g.array() -= out.h;
  return out;
}

// Inverse of decompose: f_ij = h + a_i + b_j + g_ij.
template <typename Scalar>
Matrix<Scalar> compose(const GravitySlice<Scalar>& s) {
  Matrix<Scalar> f = s.g;
  f.colwise() += s.a;
  f.rowwise() += s.b.transpose();
  f.array() += s.h;
  return f;
}

// Per-sample gravity components for every time point.
// For time index t (0-based), row s of each matrix is sample s.
struct GravityDecomposition {
  int nodes = 0;
  std::size_t samples = 0;
  std::vector<Eigen::VectorXd> h;  // [t] samples
  std::vector<Eigen::MatrixXd> a;  // [t] samples x I
  std::vector<Eigen::MatrixXd> b;  // [t] samples x (I+1)
  std::vector<Eigen::MatrixXd> g;  // [t] samples x I(I+1), column (i-1)(I+1) + j

  int length() const { return static_cast<int>(h.size()); }
  static Eigen::Index affinity_column(int nodes, int origin, int destination) {
    return static_cast<Eigen::Index>((origin - 1) * (nodes + 1) + destination);
  }
};

GravityDecomposition decompose_ensemble(const NetworkPosterior& post, int workers, bool strict = false);

// Exponentiated-scale summaries of one component at one time.
struct ComponentSummary {
  int t = 0;
  char component = 'h';  // 'h' mu, 'a' alpha, 'b' beta, 'g' gamma
  int index_i = 0;
  int index_j = 0;
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

std::vector<ComponentSummary> summarize(const GravityDecomposition& dec);

// Two-sided tail mass 2 min(P(gamma > 1), P(gamma < 1)) per time, from sample
// frequencies. Near 1: no evidence of interaction; near 0: strong evidence.
std::vector<double> credible_values(const GravityDecomposition& dec, EdgeKey edge);

// Same statistic for a single set of log-affinity samples.
double credible_value(const Eigen::Ref<const Eigen::VectorXd>& log_affinity);

}  // namespace netflow
