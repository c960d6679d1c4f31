#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>
#include <vector>

#include "fastkci/data.hpp"
#include "fastkci/errors.hpp"
#include "fastkci/kci.hpp"
#include "fastkci/mixture.hpp"
#include "fastkci/parallel.hpp"
#include "fastkci/rng.hpp"

namespace fastkci {

/// How the J partition nulls combine into one p-value. MixtureNull compares
/// the aggregate statistic against the importance-weighted null mixture;
/// PerPartitionPValues instead weights each partition's own p-value.
enum class NullAggregation { MixtureNull, PerPartitionPValues };

struct FastKciConfig {
  int V = 10;
  int J = 16;
  KciConfig inner;
  int max_parallel = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  NullAggregation aggregation = NullAggregation::MixtureNull;
};

/// One partition replicate: summed block statistic, pairwise-summed block
/// null samples and the unnormalized log importance weight.
struct PartitionResult {
  double statistic_Tj = 0.0;
  std::vector<double> null_samples;  // B entries
  double log_weight_unnormalized = 0.0;
  int V_effective = 0;
  std::vector<int> cluster_sizes;
};

struct LocalTestResult {
  double statistic = 0.0;
  std::vector<double> null_samples;
  double log_lik = 0.0;
};

/// KCI residualization pipeline on one block: local median bandwidths,
/// local ridge projection, block statistic, block-wise spectral null and
/// the block's GP log marginal likelihood.
inline LocalTestResult local_block_test(const DataMatrix& x_v, const DataMatrix& y_v,
                                        const DataMatrix& z_v, const KciConfig& inner,
                                        RngEngine& rng) {
  const Eigen::Index n_v = x_v.rows();
  if (y_v.rows() != n_v || z_v.rows() != n_v) {
    throw RowCountMismatch("block row counts differ");
  }
  if (n_v < kMinClusterSize) {
    throw TooFewSamples("block below the minimum cluster size");
  }

  const auto rk = detail::residual_kernels(x_v, y_v, z_v, inner.lambda);
  LocalTestResult out;
  out.statistic = kci_statistic(rk.kx, rk.ky, n_v);
  out.null_samples = spectral_null_samples(rk.kx, rk.ky, inner, rng);
  out.log_lik = cluster_log_likelihood(DataMatrix(standardize_columns(x_v.values())),
                                       DataMatrix(standardize_columns(y_v.values())),
                                       z_v, inner.lambda);
  return out;
}

/// One draw of the partition and its local tests. `rng` drives the mixture
/// and label sampling; null draws use dedicated streams derived from
/// (inner.seed, replicate, cluster) so results do not depend on scheduling.
inline PartitionResult run_partition_replicate(const DataMatrix& x, const DataMatrix& y,
                                               const DataMatrix& z,
                                               const FastKciConfig& cfg,
                                               int replicate_index, RngEngine& rng) {
  const MixtureHyper hyper = fit_hyper(z);
  const MixtureParams params = sample_mixture(hyper, cfg.V, rng);
  const PartitionAssignment assign = assign_labels(z, params, rng);
  if (assign.V_effective < 1) {
    throw std::logic_error("partition produced no clusters");
  }

  PartitionResult result;
  result.V_effective = assign.V_effective;
  result.cluster_sizes = assign.cluster_sizes;
  result.null_samples.assign(static_cast<std::size_t>(cfg.inner.null_samples_B), 0.0);

  for (int v = 0; v < assign.V_effective; ++v) {
    std::vector<int> idx;
    idx.reserve(static_cast<std::size_t>(assign.cluster_sizes[static_cast<std::size_t>(v)]));
    for (std::size_t i = 0; i < assign.labels.size(); ++i) {
      if (assign.labels[i] == v) idx.push_back(static_cast<int>(i));
    }
    const DataMatrix x_v(take_rows(x.values(), idx));
    const DataMatrix y_v(take_rows(y.values(), idx));
    const DataMatrix z_v(take_rows(z.values(), idx));

    RngEngine null_rng = make_engine(
        derive_seed(cfg.inner.seed, stream_tag::null_draws, replicate_index, v));
    const LocalTestResult local = local_block_test(x_v, y_v, z_v, cfg.inner, null_rng);

    result.statistic_Tj += local.statistic;
    for (std::size_t b = 0; b < result.null_samples.size(); ++b) {
      result.null_samples[b] += local.null_samples[b];
    }
    result.log_weight_unnormalized += local.log_lik;
  }
  return result;
}

/// Softmax with max-shift stabilization.
inline std::vector<double> importance_weights(const std::vector<double>& log_weights) {
  if (log_weights.empty()) throw ConfigError("log_weights must be nonempty");
  for (double lw : log_weights) {
    if (!std::isfinite(lw)) throw NonFiniteLogWeight("non-finite log weight");
  }
  const double shift = *std::max_element(log_weights.begin(), log_weights.end());
  std::vector<double> weights(log_weights.size());
  double total = 0.0;
  for (std::size_t j = 0; j < log_weights.size(); ++j) {
    weights[j] = std::exp(log_weights[j] - shift);
    total += weights[j];
  }
  for (auto& w : weights) w /= total;
  return weights;
}

/// FastKCI: J parallel partition replicates, importance-weighted statistic
/// and p-value from the weighted null mixture. Block nulls are always
/// spectral; identical inputs and seed give bitwise-identical results for
/// any max_parallel >= 1.
inline TestOutcome fastkci_test(const DataMatrix& x, const DataMatrix& y,
                                const DataMatrix& z, const FastKciConfig& cfg) {
  if (x.rows() != y.rows() || x.rows() != z.rows()) {
    throw RowCountMismatch("X, Y and Z row counts differ");
  }
  if (cfg.V < 1 || cfg.J < 1) throw ConfigError("V and J must be at least 1");
  if (cfg.max_parallel < 1) throw ConfigError("max_parallel must be at least 1");
  detail::validate(cfg.inner);
  const Eigen::Index n = x.rows();
  if (n < static_cast<Eigen::Index>(cfg.V) * kMinClusterSize) {
    throw TooFewSamples("need at least V * min_cluster_size samples");
  }

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<PartitionResult> results(static_cast<std::size_t>(cfg.J));
  parallel_for(static_cast<std::size_t>(cfg.J), cfg.max_parallel, [&](std::size_t j) {
    RngEngine rng = make_engine(derive_seed(cfg.inner.seed, stream_tag::partition, j));
    results[j] = run_partition_replicate(x, y, z, cfg, static_cast<int>(j), rng);
  });

  std::vector<double> log_weights(results.size());
  for (std::size_t j = 0; j < results.size(); ++j) {
    log_weights[j] = results[j].log_weight_unnormalized;
  }
  const std::vector<double> weights = importance_weights(log_weights);

  double statistic = 0.0;
  for (std::size_t j = 0; j < results.size(); ++j) {
    statistic += weights[j] * results[j].statistic_Tj;
  }

  const double inv_b = 1.0 / static_cast<double>(cfg.inner.null_samples_B);
  double p_value = 0.0;
  for (std::size_t j = 0; j < results.size(); ++j) {
    const double ref = cfg.aggregation == NullAggregation::MixtureNull
                           ? statistic
                           : results[j].statistic_Tj;
    std::size_t count = 0;
    for (double t : results[j].null_samples) {
      if (t >= ref) ++count;
    }
    p_value += weights[j] * static_cast<double>(count) * inv_b;
  }

  TestOutcome out;
  out.statistic = statistic;
  out.p_value = p_value;
  out.sample_size_n = n;
  for (const auto& r : results) {
    out.null_samples.insert(out.null_samples.end(), r.null_samples.begin(),
                            r.null_samples.end());
  }
  out.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace fastkci
