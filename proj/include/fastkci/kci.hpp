#pragma once

#include <boost/math/special_functions/gamma.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "fastkci/data.hpp"
#include "fastkci/errors.hpp"
#include "fastkci/kernel.hpp"
#include "fastkci/rng.hpp"

namespace fastkci {

enum class NullMethod { SpectralMonteCarlo, GammaApprox };

struct KciConfig {
  double lambda = 1e-3;
  int null_samples_B = 1000;
  double eig_rel_threshold = 1e-5;
  NullMethod null_method = NullMethod::SpectralMonteCarlo;
  std::uint64_t seed = 0;
};

struct TestOutcome {
  double statistic = 0.0;
  double p_value = 1.0;
  std::vector<double> null_samples;  // empty under GammaApprox
  Eigen::Index sample_size_n = 0;
  double elapsed_seconds = 0.0;
};

namespace detail {

inline void validate(const KciConfig& cfg) {
  if (!(cfg.lambda > 0.0)) throw ConfigError("lambda must be positive");
  if (!(cfg.eig_rel_threshold > 0.0) || !(cfg.eig_rel_threshold < 1.0)) {
    throw ConfigError("eig_rel_threshold must lie in (0, 1)");
  }
  if (cfg.null_method == NullMethod::SpectralMonteCarlo && cfg.null_samples_B < 100) {
    throw ConfigError("null_samples_B must be at least 100 for the spectral null");
  }
}

/// Empirical upper tail with weak inequality; the minimal attainable
/// p-value is 0 (report as < 1/B).
inline double empirical_pvalue(double statistic, const std::vector<double>& null_samples) {
  if (null_samples.empty()) return 1.0;
  std::size_t count = 0;
  for (double t : null_samples) {
    if (t >= statistic) ++count;
  }
  return static_cast<double>(count) / static_cast<double>(null_samples.size());
}

}  // namespace detail

/// Column-standardized [X, Z] concatenation (the augmented regressor of the
/// KCI pipeline).
inline DataMatrix augment_x_with_z(const DataMatrix& x, const DataMatrix& z) {
  if (x.rows() != z.rows()) {
    throw RowCountMismatch("X and Z row counts differ");
  }
  Eigen::MatrixXd out(x.rows(), x.cols() + z.cols());
  out.leftCols(x.cols()) = standardize_columns(x.values());
  out.rightCols(z.cols()) = standardize_columns(z.values());
  return DataMatrix(std::move(out));
}

/// T = (1/n) Tr(K~_X K~_Y), evaluated as an elementwise product sum.
inline double kci_statistic(const GramMatrix& kx_res, const GramMatrix& ky_res,
                            Eigen::Index n) {
  if (kx_res.entries.rows() != n || ky_res.entries.rows() != n) {
    throw DimensionMismatch("residual kernel dimensions do not match n");
  }
  return (kx_res.entries.array() * ky_res.entries.array()).sum() / static_cast<double>(n);
}

/// Spectral simulation of the null: eigen-embed both residual kernels,
/// form the elementwise-product feature matrix M, take the spectrum of
/// M^T M (or M M^T when p*q > n; the nonzero spectra coincide) and draw
/// B weighted chi-square(1) mixtures scaled by 1/n.
inline std::vector<double> spectral_null_samples(const GramMatrix& kx_res,
                                                 const GramMatrix& ky_res,
                                                 const KciConfig& cfg, RngEngine& rng) {
  detail::validate(cfg);
  const Eigen::Index n = kx_res.entries.rows();
  if (ky_res.entries.rows() != n) {
    throw DimensionMismatch("residual kernel dimensions differ");
  }

  const EigSystem ex = truncated_eig(kx_res, cfg.eig_rel_threshold);
  const EigSystem ey = truncated_eig(ky_res, cfg.eig_rel_threshold);
  const Eigen::MatrixXd phi_x =
      ex.eigenvectors * ex.eigenvalues.cwiseMax(0.0).cwiseSqrt().asDiagonal();
  const Eigen::MatrixXd phi_y =
      ey.eigenvectors * ey.eigenvalues.cwiseMax(0.0).cwiseSqrt().asDiagonal();
  const Eigen::Index p = phi_x.cols();
  const Eigen::Index q = phi_y.cols();

  Eigen::VectorXd spectrum;
  if (p * q <= n) {
    Eigen::MatrixXd m(n, p * q);
    for (Eigen::Index a = 0; a < p; ++a) {
      for (Eigen::Index b = 0; b < q; ++b) {
        m.col(a * q + b) = phi_x.col(a).cwiseProduct(phi_y.col(b));
      }
    }
    Eigen::MatrixXd prod;
    prod.noalias() = m.transpose() * m;
    spectrum = detail::sym_eigenvalues(std::move(prod));
  } else {
    // M M^T is the Hadamard product of the truncated kernel reconstructions.
    Eigen::MatrixXd kx_hat;
    kx_hat.noalias() = phi_x * phi_x.transpose();
    Eigen::MatrixXd ky_hat;
    ky_hat.noalias() = phi_y * phi_y.transpose();
    spectrum = detail::sym_eigenvalues(kx_hat.cwiseProduct(ky_hat));
  }

  const double nu_max = spectrum.size() > 0 ? spectrum.maxCoeff() : 0.0;
  std::vector<double> weights;
  if (nu_max > 0.0) {
    const double floor = 1e-12 * nu_max;
    for (Eigen::Index i = spectrum.size() - 1; i >= 0; --i) {  // descending
      if (spectrum(i) >= floor) weights.push_back(spectrum(i));
    }
  }

  std::vector<double> samples(static_cast<std::size_t>(cfg.null_samples_B), 0.0);
  std::normal_distribution<double> normal;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (auto& s : samples) {
    double acc = 0.0;
    for (double w : weights) {
      const double z = normal(rng);
      acc += w * z * z;
    }
    s = acc * inv_n;
  }
  return samples;
}

/// Two-moment Gamma approximation of the null; returns the upper-tail
/// probability at the statistic. Degenerate moments give p = 1.
inline double gamma_pvalue(double statistic, const GramMatrix& kx_res,
                           const GramMatrix& ky_res) {
  const Eigen::Index n = kx_res.entries.rows();
  if (ky_res.entries.rows() != n) {
    throw DimensionMismatch("residual kernel dimensions differ");
  }
  const double nd = static_cast<double>(n);
  const double tr_x = kx_res.entries.trace();
  const double tr_y = ky_res.entries.trace();
  const double tr_xx = kx_res.entries.squaredNorm();
  const double tr_yy = ky_res.entries.squaredNorm();

  const double mean = tr_x * tr_y / (nd * nd);
  const double var = 2.0 * tr_xx * tr_yy / (nd * nd * nd * nd);
  if (!(mean > 0.0) || !(var > 0.0)) return 1.0;

  const double shape = mean * mean / var;
  const double scale = var / mean;
  if (!(statistic > 0.0)) return 1.0;
  return boost::math::gamma_q(shape, statistic / scale);
}

namespace detail {

struct ResidualKernels {
  GramMatrix kx;
  GramMatrix ky;
};

/// Shared residualization pipeline: augment X with Z, build RBF Gram
/// matrices with median bandwidths on standardized columns, center,
/// project out Z, residualize.
inline ResidualKernels residual_kernels(const DataMatrix& x, const DataMatrix& y,
                                        const DataMatrix& z, double lambda) {
  const DataMatrix xz = augment_x_with_z(x, z);
  const DataMatrix ys(standardize_columns(y.values()));
  const DataMatrix zs(standardize_columns(z.values()));

  const GramMatrix kx = center_gram(rbf_gram(xz, bandwidth_or_unit(xz)));
  const GramMatrix ky = center_gram(rbf_gram(ys, bandwidth_or_unit(ys)));
  const GramMatrix kz = center_gram(rbf_gram(zs, bandwidth_or_unit(zs)));

  const RidgeProjection rz = ridge_projection(kz, lambda);
  return ResidualKernels{residualize(kx, rz), residualize(ky, rz)};
}

}  // namespace detail

/// Full KCI test for H0: X independent of Y given Z.
inline TestOutcome kci_test(const DataMatrix& x, const DataMatrix& y,
                            const DataMatrix& z, const KciConfig& cfg) {
  if (x.rows() != y.rows() || x.rows() != z.rows()) {
    throw RowCountMismatch("X, Y and Z row counts differ");
  }
  if (x.rows() < 10) {
    throw TooFewSamples("kci_test needs at least 10 samples");
  }
  detail::validate(cfg);

  const auto t0 = std::chrono::steady_clock::now();
  const Eigen::Index n = x.rows();
  const auto rk = detail::residual_kernels(x, y, z, cfg.lambda);

  TestOutcome out;
  out.sample_size_n = n;
  out.statistic = kci_statistic(rk.kx, rk.ky, n);
  if (cfg.null_method == NullMethod::SpectralMonteCarlo) {
    RngEngine rng = make_engine(derive_seed(cfg.seed, stream_tag::null_draws, 0, 0));
    out.null_samples = spectral_null_samples(rk.kx, rk.ky, cfg, rng);
    out.p_value = detail::empirical_pvalue(out.statistic, out.null_samples);
  } else {
    out.p_value = gamma_pvalue(out.statistic, rk.kx, rk.ky);
  }
  out.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace fastkci
