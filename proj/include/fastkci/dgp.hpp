#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "fastkci/data.hpp"
#include "fastkci/errors.hpp"
#include "fastkci/kernel.hpp"
#include "fastkci/rng.hpp"

namespace fastkci {

/// H0-true generator settings: Z is a V_true-component Gaussian mixture in
/// D dimensions and X, Y are independent nonlinear functions of Z.
struct CoverageSpec {
  Eigen::Index n = 1200;
  int D = 1;
  int V_true = 1;
  std::uint64_t seed = 0;
};

enum class PowerMode { SharedNoise, DirectEdge };

/// H0-violating generator: SharedNoise adds one common noise draw to X and
/// Y; DirectEdge adds c * X to Y. With `calibrated` set, SharedNoise scales
/// sigma_vio by sqrt(sd(X) sd(Y)) and DirectEdge picks c so that
/// sd(c X) / sd(Y) = 1/3.
struct PowerSpec {
  CoverageSpec base;
  double sigma_vio = 0.0;
  PowerMode mode = PowerMode::SharedNoise;
  bool calibrated = false;
};

enum class LinkKind { Linear, Sin, Cos, Tanh, Sigmoid, Square, GaussianProcess };

struct EdgeInfo {
  int from = 0;
  int to = 0;
  LinkKind kind = LinkKind::Linear;
  double weight = 1.0;
};

/// Acyclic by construction: edges only run from lower to higher index.
struct GroundTruthDag {
  int num_nodes = 0;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> adjacency;
  std::vector<EdgeInfo> edges;
};

/// X, Y, Z triple for CI experiments.
struct CiDataset {
  DataMatrix x;
  DataMatrix y;
  DataMatrix z;
};

/// Node matrix plus ground truth for discovery experiments.
struct DagDataset {
  DataMatrix node_data;
  GroundTruthDag truth;
};

namespace detail {

/// Convex mixture of {t, t^3, tanh(t)}.
struct FunctionMix {
  double a_linear = 1.0;
  double a_cubic = 0.0;
  double a_tanh = 0.0;
  double operator()(double t) const {
    return a_linear * t + a_cubic * t * t * t + a_tanh * std::tanh(t);
  }
};

inline FunctionMix draw_function_mix(RngEngine& rng) {
  std::gamma_distribution<double> gamma(1.0, 1.0);
  const double g0 = gamma(rng);
  const double g1 = gamma(rng);
  const double g2 = gamma(rng);
  const double total = g0 + g1 + g2;
  return FunctionMix{g0 / total, g1 / total, g2 / total};
}

struct CoverageOverrides {
  bool pure_linear = false;
  double eps_sigma = 1.0;
};

/// Coverage generator body. Draw order: mixture means, component picks,
/// Z noise (row major), X functions + noise, Y functions + noise.
inline CiDataset gen_coverage_impl(const CoverageSpec& spec, RngEngine& rng,
                                   const CoverageOverrides& opts) {
  if (spec.n < 2) throw TooFewSamples("coverage generator needs n >= 2");
  if (spec.D < 1) throw ConfigError("D must be at least 1");
  if (spec.V_true < 1) throw ConfigError("V_true must be at least 1");

  std::uniform_real_distribution<double> mean_box(-5.0, 5.0);
  std::uniform_int_distribution<int> component(0, spec.V_true - 1);
  std::normal_distribution<double> normal;

  Eigen::MatrixXd centers(spec.V_true, spec.D);
  for (int v = 0; v < spec.V_true; ++v) {
    for (int c = 0; c < spec.D; ++c) centers(v, c) = mean_box(rng);
  }
  std::vector<int> comp(static_cast<std::size_t>(spec.n));
  for (auto& ci : comp) ci = component(rng);

  Eigen::MatrixXd z(spec.n, spec.D);
  for (Eigen::Index i = 0; i < spec.n; ++i) {
    for (int c = 0; c < spec.D; ++c) {
      z(i, c) = centers(comp[static_cast<std::size_t>(i)], c) + normal(rng);
    }
  }

  // The summed index sum_i f_i(Z_i) is standardized to unit scale before the
  // noise enters and g is applied. Mixture means push |Z| up to ~8, so the
  // raw index would dwarf the eps ~ N(0, 0.25) noise and make X, Y nearly
  // deterministic in Z; no finite-sample CI test stays calibrated there.
  auto draw_column = [&](Eigen::VectorXd& out) {
    std::vector<FunctionMix> f(static_cast<std::size_t>(spec.D));
    FunctionMix g;
    if (!opts.pure_linear) {
      for (auto& fi : f) fi = draw_function_mix(rng);
      g = draw_function_mix(rng);
    }
    Eigen::VectorXd index(spec.n);
    for (Eigen::Index i = 0; i < spec.n; ++i) {
      double s = 0.0;
      for (int c = 0; c < spec.D; ++c) s += f[static_cast<std::size_t>(c)](z(i, c));
      index(i) = s;
    }
    const Eigen::VectorXd scaled = standardize_columns(index);
    out.resize(spec.n);
    for (Eigen::Index i = 0; i < spec.n; ++i) {
      out(i) = g(scaled(i) + opts.eps_sigma * normal(rng));
    }
  };

  Eigen::VectorXd x_col;
  Eigen::VectorXd y_col;
  draw_column(x_col);
  draw_column(y_col);
  return CiDataset{DataMatrix(x_col), DataMatrix(y_col), DataMatrix(z)};
}

inline double column_sd(const Eigen::VectorXd& v) {
  const Eigen::Index n = v.size();
  if (n < 2) return 0.0;
  const Eigen::VectorXd centered = v.array() - v.mean();
  return std::sqrt(centered.squaredNorm() / static_cast<double>(n - 1));
}

struct DagBOverrides {
  bool force_linear = false;
};

inline double apply_link(LinkKind kind, double weight, double t) {
  switch (kind) {
    case LinkKind::Linear:
      return weight * t;
    case LinkKind::Sin:
      return std::sin(t);
    case LinkKind::Cos:
      return std::cos(t);
    case LinkKind::Tanh:
      return std::tanh(t);
    case LinkKind::Sigmoid:
      return 1.0 / (1.0 + std::exp(-t));
    case LinkKind::Square:
      return t * t;
    case LinkKind::GaussianProcess:
      return weight * t;  // GP links contribute through the mean function
  }
  return weight * t;
}

inline DagDataset gen_dag_setting_b_impl(Eigen::Index n, double sigma, RngEngine& rng,
                                         const DagBOverrides& opts) {
  if (n < 50) throw TooFewSamples("setting B needs n >= 50");
  if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");

  constexpr int kNodes = 6;
  GroundTruthDag truth;
  truth.num_nodes = kNodes;
  truth.adjacency.setConstant(kNodes, kNodes, false);

  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::uniform_real_distribution<double> magnitude(0.5, 1.5);
  std::uniform_int_distribution<int> nonlinearity(0, 4);
  constexpr LinkKind kNonlinear[] = {LinkKind::Sin, LinkKind::Cos, LinkKind::Tanh,
                                     LinkKind::Sigmoid, LinkKind::Square};

  for (int i = 0; i < kNodes; ++i) {
    for (int j = i + 1; j < kNodes; ++j) {
      if (uniform(rng) >= 0.5) continue;
      truth.adjacency(i, j) = true;
      EdgeInfo edge;
      edge.from = i;
      edge.to = j;
      const bool linear = opts.force_linear || uniform(rng) < 0.5;
      if (linear) {
        edge.kind = LinkKind::Linear;
        const double mag = magnitude(rng);
        edge.weight = uniform(rng) < 0.5 ? -mag : mag;
      } else {
        edge.kind = kNonlinear[nonlinearity(rng)];
        edge.weight = 1.0;
      }
      truth.edges.push_back(edge);
    }
  }

  std::normal_distribution<double> normal;
  Eigen::MatrixXd data(n, kNodes);
  for (int j = 0; j < kNodes; ++j) {
    Eigen::VectorXd col(n);
    for (Eigen::Index i = 0; i < n; ++i) col(i) = sigma * normal(rng);
    for (const auto& edge : truth.edges) {
      if (edge.to != j) continue;
      for (Eigen::Index i = 0; i < n; ++i) {
        col(i) += apply_link(edge.kind, edge.weight, data(i, edge.from));
      }
    }
    data.col(j) = col;
  }
  return DagDataset{DataMatrix(std::move(data)), std::move(truth)};
}

}  // namespace detail

/// H0-true dataset: Z from a V_true-component Gaussian mixture (equal
/// weights, component means uniform in [-5, 5]^D, identity covariance);
/// X and Y independently as g(s + eps) with s the standardized index
/// sum_i f_i(Z_i), f and g random convex mixtures of {t, t^3, tanh} and
/// eps ~ N(0, 1).
inline CiDataset gen_coverage(const CoverageSpec& spec, RngEngine& rng) {
  return detail::gen_coverage_impl(spec, rng, detail::CoverageOverrides{});
}

/// H0-violating dataset; see PowerSpec for the two violation modes.
inline CiDataset gen_power(const PowerSpec& spec, RngEngine& rng) {
  if (spec.sigma_vio < 0.0) throw ConfigError("sigma_vio must be nonnegative");
  CiDataset ds = gen_coverage(spec.base, rng);
  Eigen::VectorXd x = ds.x.values().col(0);
  Eigen::VectorXd y = ds.y.values().col(0);

  if (spec.mode == PowerMode::SharedNoise) {
    double sigma = spec.sigma_vio;
    if (spec.calibrated) {
      sigma *= std::sqrt(detail::column_sd(x) * detail::column_sd(y));
    }
    std::normal_distribution<double> normal;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double nu = sigma * normal(rng);
      x(i) += nu;
      y(i) += nu;
    }
  } else {
    double c = spec.sigma_vio;
    if (spec.calibrated) {
      const double sd_x = detail::column_sd(x);
      c = sd_x > 0.0 ? detail::column_sd(y) / (3.0 * sd_x) : 0.0;
    }
    y += c * x;
  }
  return CiDataset{DataMatrix(std::move(x)), DataMatrix(std::move(y)), std::move(ds.z)};
}

/// Setting A: 6 nodes, edge probability 0.3, roots standard normal, each
/// non-root drawn from a GP with mean sum_p nu_p X_p (nu ~ U[-2, 2]) and
/// covariance RBF(median bandwidth on parents) + 0.09 I. Sampling goes
/// through a dense n x n Cholesky per node, so this is O(n^3) per node and
/// intended for desk-scale n.
inline DagDataset gen_dag_setting_a(Eigen::Index n, RngEngine& rng) {
  if (n < 50) throw TooFewSamples("setting A needs n >= 50");

  constexpr int kNodes = 6;
  constexpr double kNoiseSd = 0.3;
  GroundTruthDag truth;
  truth.num_nodes = kNodes;
  truth.adjacency.setConstant(kNodes, kNodes, false);

  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (int i = 0; i < kNodes; ++i) {
    for (int j = i + 1; j < kNodes; ++j) {
      if (uniform(rng) < 0.3) truth.adjacency(i, j) = true;
    }
  }

  std::uniform_real_distribution<double> weight_box(-2.0, 2.0);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd data(n, kNodes);
  for (int j = 0; j < kNodes; ++j) {
    std::vector<int> parents;
    for (int i = 0; i < j; ++i) {
      if (truth.adjacency(i, j)) parents.push_back(i);
    }
    if (parents.empty()) {
      for (Eigen::Index i = 0; i < n; ++i) data(i, j) = normal(rng);
      continue;
    }
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
    for (int p : parents) {
      const double w = weight_box(rng);
      truth.edges.push_back(EdgeInfo{p, j, LinkKind::GaussianProcess, w});
      mean += w * data.col(p);
    }
    const DataMatrix parent_values(take_cols(data.leftCols(j), parents));
    Eigen::MatrixXd cov = rbf_gram(parent_values, detail::bandwidth_or_unit(parent_values)).entries;
    cov.diagonal().array() += kNoiseSd * kNoiseSd;
    const Eigen::MatrixXd l = detail::chol_with_jitter(std::move(cov)).matrixL();
    Eigen::VectorXd zdraw(n);
    for (Eigen::Index i = 0; i < n; ++i) zdraw(i) = normal(rng);
    data.col(j) = mean + l * zdraw;
  }
  return DagDataset{DataMatrix(std::move(data)), std::move(truth)};
}

/// Setting B: 6 nodes, edge probability 0.5, links either linear with
/// weights on [-1.5, -0.5] U [0.5, 1.5] or a nonlinearity from
/// {sin, cos, tanh, sigmoid, t^2}; node value = sum of links + N(0, sigma^2).
inline DagDataset gen_dag_setting_b(Eigen::Index n, double sigma, RngEngine& rng) {
  return detail::gen_dag_setting_b_impl(n, sigma, rng, detail::DagBOverrides{});
}

}  // namespace fastkci
