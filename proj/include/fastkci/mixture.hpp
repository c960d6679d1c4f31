#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "fastkci/data.hpp"
#include "fastkci/errors.hpp"
#include "fastkci/kernel.hpp"
#include "fastkci/rng.hpp"

namespace fastkci {

/// Clusters below this size are dissolved into surviving neighbours; local
/// eigendecompositions on smaller blocks carry no signal.
inline constexpr int kMinClusterSize = 10;

/// Dirichlet + Normal-Inverse-Wishart hyperparameters fit to Z.
struct MixtureHyper {
  double alpha = 1.0;
  Eigen::VectorXd mu0;
  double lambda0 = 1.0;
  Eigen::MatrixXd psi;
  double nu = 0.0;
};

/// One draw of Gaussian-mixture parameters.
struct MixtureParams {
  Eigen::VectorXd weights;                   // V entries, summing to 1
  Eigen::MatrixXd means;                     // V x d
  std::vector<Eigen::MatrixXd> covariances;  // V SPD matrices
};

/// Cluster labels in first-appearance canonical form.
struct PartitionAssignment {
  std::vector<int> labels;         // n entries in [0, V_effective)
  std::vector<int> cluster_sizes;  // V_effective entries
  int V_requested = 0;
  int V_effective = 0;
};

/// Moment-based NIW hyperparameters: empirical mean and jittered empirical
/// covariance of Z, alpha = 1, lambda0 = 1, nu = d + 2.
inline MixtureHyper fit_hyper(const DataMatrix& z) {
  const Eigen::Index n = z.rows();
  const Eigen::Index d = z.cols();
  if (n < 2 * d) {
    throw TooFewSamples("fit_hyper needs at least 2 * d_z samples");
  }
  MixtureHyper hyper;
  hyper.mu0 = z.values().colwise().mean();
  Eigen::MatrixXd centered = z.values().rowwise() - hyper.mu0.transpose();
  Eigen::MatrixXd cov;
  cov.noalias() = centered.transpose() * centered;
  cov /= static_cast<double>(n - 1);
  double scale = cov.trace() / static_cast<double>(d);
  if (!(scale > 0.0)) scale = 1.0;
  hyper.psi = cov + 1e-6 * scale * Eigen::MatrixXd::Identity(d, d);
  hyper.nu = static_cast<double>(d) + 2.0;
  return hyper;
}

/// Draws mixture weights from Dirichlet(alpha 1_V) and per-component
/// (mean, covariance) pairs from the NIW prior. Covariances are sampled as
/// inverted Wishart draws via the Bartlett decomposition.
inline MixtureParams sample_mixture(const MixtureHyper& hyper, int V, RngEngine& rng) {
  if (V < 1) throw ConfigError("V must be at least 1");
  const Eigen::Index d = hyper.mu0.size();
  if (!(hyper.nu > static_cast<double>(d) - 1.0)) {
    throw ConfigError("nu must exceed d_z - 1");
  }

  MixtureParams params;
  params.weights.resize(V);
  std::gamma_distribution<double> gamma(hyper.alpha, 1.0);
  for (int v = 0; v < V; ++v) params.weights(v) = gamma(rng);
  params.weights /= params.weights.sum();

  const auto psi_llt = detail::chol_with_jitter(hyper.psi);
  Eigen::MatrixXd psi_inv = psi_llt.solve(Eigen::MatrixXd::Identity(d, d));
  psi_inv = 0.5 * (psi_inv + psi_inv.transpose()).eval();
  const Eigen::MatrixXd chol_psi_inv = detail::chol_with_jitter(psi_inv).matrixL();

  params.means.resize(V, d);
  params.covariances.reserve(static_cast<std::size_t>(V));
  std::normal_distribution<double> normal;
  const double mean_scale = 1.0 / std::sqrt(hyper.lambda0);
  for (int v = 0; v < V; ++v) {
    Eigen::MatrixXd bartlett = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      std::chi_squared_distribution<double> chi2(hyper.nu - static_cast<double>(i));
      bartlett(i, i) = std::sqrt(chi2(rng));
    }
    for (Eigen::Index i = 1; i < d; ++i) {
      for (Eigen::Index j = 0; j < i; ++j) bartlett(i, j) = normal(rng);
    }
    // W = (C A)(C A)^T ~ Wishart(psi^-1, nu); Sigma = W^-1.
    Eigen::MatrixXd factor;
    factor.noalias() = chol_psi_inv * bartlett;
    Eigen::MatrixXd factor_inv = factor.triangularView<Eigen::Lower>().solve(
        Eigen::MatrixXd::Identity(d, d));
    Eigen::MatrixXd sigma;
    sigma.noalias() = factor_inv.transpose() * factor_inv;
    sigma = 0.5 * (sigma + sigma.transpose()).eval();

    Eigen::VectorXd zdraw(d);
    for (Eigen::Index i = 0; i < d; ++i) zdraw(i) = normal(rng);
    const Eigen::VectorXd perturbation = detail::chol_with_jitter(sigma).matrixL() * zdraw;
    params.means.row(v) = (hyper.mu0 + mean_scale * perturbation).transpose();
    params.covariances.push_back(std::move(sigma));
  }
  return params;
}

namespace detail {

/// Index order that scans a categorical distribution from its largest
/// probability downwards (ties by index). The cumulative array is then
/// invariant to permutations of the components, which keeps canonical
/// labels stable.
inline std::vector<int> descending_prob_order(const Eigen::VectorXd& probs) {
  std::vector<int> order(static_cast<std::size_t>(probs.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return probs(a) > probs(b); });
  return order;
}

}  // namespace detail

/// Per-row categorical draw from the normalized responsibilities
/// P(U_i = v | z_i) proportional to pi_v N(z_i | mu_v, Sigma_v), computed in
/// log space. Clusters below min_cluster_size are dissolved and their
/// members moved to the highest-responsibility surviving cluster; labels
/// come out numbered by first appearance.
inline PartitionAssignment assign_labels(const DataMatrix& z, const MixtureParams& params,
                                         RngEngine& rng,
                                         int min_cluster_size = kMinClusterSize) {
  const Eigen::Index n = z.rows();
  const Eigen::Index d = z.cols();
  const int V = static_cast<int>(params.weights.size());
  if (params.means.cols() != d) {
    throw DimensionMismatch("mixture dimension does not match Z");
  }

  // Per-component Cholesky factors and log-density constants.
  std::vector<Eigen::MatrixXd> chol_l;
  std::vector<double> log_const(static_cast<std::size_t>(V));
  chol_l.reserve(static_cast<std::size_t>(V));
  const double log_two_pi = std::log(2.0 * M_PI);
  for (int v = 0; v < V; ++v) {
    const auto llt = detail::chol_with_jitter(params.covariances[static_cast<std::size_t>(v)]);
    Eigen::MatrixXd l = llt.matrixL();
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) log_det += 2.0 * std::log(l(i, i));
    log_const[static_cast<std::size_t>(v)] =
        std::log(params.weights(v)) - 0.5 * (static_cast<double>(d) * log_two_pi + log_det);
    chol_l.push_back(std::move(l));
  }

  Eigen::MatrixXd logits(n, V);
  Eigen::VectorXd diff(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int v = 0; v < V; ++v) {
      diff = z.values().row(i).transpose() - params.means.row(v).transpose();
      const Eigen::VectorXd w =
          chol_l[static_cast<std::size_t>(v)].triangularView<Eigen::Lower>().solve(diff);
      logits(i, v) = log_const[static_cast<std::size_t>(v)] - 0.5 * w.squaredNorm();
    }
  }

  std::vector<int> labels(static_cast<std::size_t>(n));
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double shift = logits.row(i).maxCoeff();
    const Eigen::VectorXd probs = (logits.row(i).array() - shift).exp();
    const std::vector<int> order = detail::descending_prob_order(probs);
    const double u = uniform(rng) * probs.sum();
    double cum = 0.0;
    int pick = order.back();
    for (int v : order) {
      cum += probs(v);
      if (u <= cum) {
        pick = v;
        break;
      }
    }
    labels[static_cast<std::size_t>(i)] = pick;
  }

  std::vector<int> sizes(static_cast<std::size_t>(V), 0);
  for (int lbl : labels) ++sizes[static_cast<std::size_t>(lbl)];

  std::vector<bool> survives(static_cast<std::size_t>(V), false);
  bool any = false;
  for (int v = 0; v < V; ++v) {
    if (sizes[static_cast<std::size_t>(v)] >= min_cluster_size) {
      survives[static_cast<std::size_t>(v)] = true;
      any = true;
    }
  }
  if (!any) {
    // The largest cluster always survives (ties to the lowest index).
    const int largest = static_cast<int>(
        std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
    survives[static_cast<std::size_t>(largest)] = true;
  }
  if (std::none_of(survives.begin(), survives.end(), [](bool b) { return b; })) {
    throw std::logic_error("no surviving cluster");
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    int& lbl = labels[static_cast<std::size_t>(i)];
    if (survives[static_cast<std::size_t>(lbl)]) continue;
    int best = -1;
    double best_logit = -std::numeric_limits<double>::infinity();
    for (int v = 0; v < V; ++v) {
      if (survives[static_cast<std::size_t>(v)] && logits(i, v) > best_logit) {
        best_logit = logits(i, v);
        best = v;
      }
    }
    lbl = best;
  }

  // Canonical relabeling by first appearance.
  std::vector<int> remap(static_cast<std::size_t>(V), -1);
  PartitionAssignment out;
  out.V_requested = V;
  out.labels.resize(static_cast<std::size_t>(n));
  int next_id = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int raw = labels[static_cast<std::size_t>(i)];
    if (remap[static_cast<std::size_t>(raw)] < 0) {
      remap[static_cast<std::size_t>(raw)] = next_id++;
      out.cluster_sizes.push_back(0);
    }
    const int canonical = remap[static_cast<std::size_t>(raw)];
    out.labels[static_cast<std::size_t>(i)] = canonical;
    ++out.cluster_sizes[static_cast<std::size_t>(canonical)];
  }
  out.V_effective = next_id;
  return out;
}

namespace detail {

/// Sum over columns of log N(col; 0, C) with C factored by llt.
inline double gaussian_zero_mean_loglik(const Eigen::MatrixXd& cols,
                                        const Eigen::LLT<Eigen::MatrixXd>& llt) {
  const Eigen::Index n = cols.rows();
  const Eigen::MatrixXd l = llt.matrixL();
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) log_det += 2.0 * std::log(l(i, i));
  const double log_two_pi = std::log(2.0 * M_PI);
  double total = 0.0;
  for (Eigen::Index c = 0; c < cols.cols(); ++c) {
    const Eigen::VectorXd w = l.triangularView<Eigen::Lower>().solve(cols.col(c));
    total += -0.5 * (static_cast<double>(n) * log_two_pi + log_det + w.squaredNorm());
  }
  return total;
}

}  // namespace detail

/// Zero-mean Gaussian-process log marginal likelihood of every X and Y
/// column under the covariance K_Z + lambda I, with K_Z the local RBF Gram
/// on z_v (median bandwidth on the block).
inline double cluster_log_likelihood(const DataMatrix& x_v, const DataMatrix& y_v,
                                     const DataMatrix& z_v, double lambda) {
  const Eigen::Index n = z_v.rows();
  if (x_v.rows() != n || y_v.rows() != n) {
    throw RowCountMismatch("block row counts differ");
  }
  if (n < kMinClusterSize) {
    throw TooFewSamples("cluster below the minimum block size");
  }
  if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");

  Eigen::MatrixXd cov = rbf_gram(z_v, detail::bandwidth_or_unit(z_v)).entries;
  cov.diagonal().array() += lambda;
  const auto llt = detail::chol_with_jitter(std::move(cov));
  return detail::gaussian_zero_mean_loglik(x_v.values(), llt) +
         detail::gaussian_zero_mean_loglik(y_v.values(), llt);
}

}  // namespace fastkci
