#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "fastkci/data.hpp"
#include "fastkci/errors.hpp"
#include "fastkci/rng.hpp"

namespace fastkci {

/// RBF length scale.
struct Bandwidth {
  explicit Bandwidth(double s) : sigma(s) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw ConfigError("bandwidth sigma must be positive and finite");
    }
  }
  double sigma;
};

/// n x n kernel matrix together with the bandwidth that produced it.
struct GramMatrix {
  Eigen::MatrixXd entries;
  Bandwidth bandwidth;
  bool centered = false;
};

/// R_Z = lambda (K~_Z + lambda I)^-1; symmetric with spectrum in (0, 1].
struct RidgeProjection {
  Eigen::MatrixXd matrix;
  double lambda;
};

/// Retained top part of a symmetric eigendecomposition.
struct EigSystem {
  Eigen::VectorXd eigenvalues;   // descending, nonnegative
  Eigen::MatrixXd eigenvectors;  // n x p, orthonormal columns
  double threshold_used = 0.0;
};

namespace detail {

inline constexpr Eigen::Index kMedianSubsampleCap = 5000;

/// Full symmetric eigendecomposition (LAPACK dsyevd), ascending eigenvalues.
/// `m` is consumed; on jobz='V' it holds the eigenvectors afterwards.
inline void sym_eig_inplace(Eigen::MatrixXd& m, Eigen::VectorXd& evals, bool with_vectors) {
  const auto n = static_cast<lapack_int>(m.rows());
  evals.resize(n);
  const lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, with_vectors ? 'V' : 'N',
                                         'L', n, m.data(), n, evals.data());
  if (info != 0) {
    throw EigFailed("dsyevd did not converge (info=" + std::to_string(info) + ")");
  }
}

/// Ascending eigenvalues of a symmetric matrix.
inline Eigen::VectorXd sym_eigenvalues(Eigen::MatrixXd m) {
  Eigen::VectorXd evals;
  sym_eig_inplace(m, evals, false);
  return evals;
}

/// LLT with diagonal jitter escalation: up to 3 retries, x10 each.
inline Eigen::LLT<Eigen::MatrixXd> chol_with_jitter(Eigen::MatrixXd m) {
  double scale = m.diagonal().cwiseAbs().mean();
  if (!(scale > 0.0)) scale = 1.0;
  double jitter = 1e-10 * scale;
  for (int attempt = 0; attempt < 4; ++attempt) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() == Eigen::Success) return llt;
    m.diagonal().array() += jitter;
    jitter *= 10.0;
  }
  throw CholeskyFailed("Cholesky failed after jitter escalation");
}

/// Median pairwise Euclidean distance; 0 when every distance is 0 and the
/// smallest positive distance when the median itself is 0. Rows are capped
/// at kMedianSubsampleCap by a fixed-seed subsample.
inline double median_pairwise_distance(const Eigen::MatrixXd& rows_in) {
  const Eigen::MatrixXd* rows = &rows_in;
  Eigen::MatrixXd subsampled;
  if (rows_in.rows() > kMedianSubsampleCap) {
    std::vector<int> idx(static_cast<std::size_t>(rows_in.rows()));
    std::iota(idx.begin(), idx.end(), 0);
    RngEngine rng = make_engine(derive_seed(stream_tag::subsample,
                                            static_cast<std::uint64_t>(rows_in.rows())));
    for (Eigen::Index i = 0; i < kMedianSubsampleCap; ++i) {
      std::uniform_int_distribution<int> pick(static_cast<int>(i),
                                              static_cast<int>(rows_in.rows()) - 1);
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
    }
    idx.resize(static_cast<std::size_t>(kMedianSubsampleCap));
    subsampled = take_rows(rows_in, idx);
    rows = &subsampled;
  }

  const Eigen::Index n = rows->rows();
  Eigen::MatrixXd gram;
  gram.noalias() = (*rows) * rows->transpose();
  std::vector<double> sq;
  sq.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(n - 1) / 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      sq.push_back(std::max(0.0, gram(i, i) + gram(j, j) - 2.0 * gram(i, j)));
    }
  }

  const std::size_t m = sq.size();
  const std::size_t mid = m / 2;
  std::nth_element(sq.begin(), sq.begin() + static_cast<std::ptrdiff_t>(mid), sq.end());
  double median;
  if (m % 2 == 1) {
    median = std::sqrt(sq[mid]);
  } else {
    const double upper = sq[mid];
    const double lower = *std::max_element(sq.begin(), sq.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (std::sqrt(lower) + std::sqrt(upper));
  }
  if (median > 0.0) return median;

  double smallest_positive = 0.0;
  for (double d2 : sq) {
    if (d2 > 0.0 && (smallest_positive == 0.0 || d2 < smallest_positive)) {
      smallest_positive = d2;
    }
  }
  return smallest_positive > 0.0 ? std::sqrt(smallest_positive) : 0.0;
}

/// Median-heuristic bandwidth, falling back to sigma = 1 on degenerate
/// blocks where every row is identical (the Gram matrix is all ones for
/// any sigma, so the choice is immaterial).
inline Bandwidth bandwidth_or_unit(const DataMatrix& data) {
  if (data.rows() < 2) return Bandwidth(1.0);
  const double med = median_pairwise_distance(data.values());
  return Bandwidth(med > 0.0 ? med : 1.0);
}

/// HKH with H = I - (1/n) 1 1^T; exactly symmetric output.
inline Eigen::MatrixXd center_raw(const Eigen::MatrixXd& k) {
  const Eigen::Index n = k.rows();
  const Eigen::VectorXd row_means = k.rowwise().mean();
  const double grand_mean = row_means.mean();
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i <= j; ++i) {
      const double v = k(i, j) - row_means(i) - row_means(j) + grand_mean;
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

}  // namespace detail

/// Median of all pairwise Euclidean distances. Falls back to the smallest
/// positive distance when the median is 0 (duplicated rows).
inline Bandwidth median_bandwidth(const DataMatrix& data) {
  if (data.rows() < 2) {
    throw TooFewSamples("median_bandwidth needs at least 2 rows");
  }
  const double med = detail::median_pairwise_distance(data.values());
  if (med <= 0.0) {
    throw AllSamplesIdentical("all pairwise distances are zero");
  }
  return Bandwidth(med);
}

/// K[i][j] = exp(-||row_i - row_j||^2 / (2 sigma^2)); unit diagonal.
inline GramMatrix rbf_gram(const DataMatrix& data, Bandwidth bw) {
  const Eigen::MatrixXd& x = data.values();
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd gram;
  gram.noalias() = x * x.transpose();
  const double inv_two_sigma_sq = 1.0 / (2.0 * bw.sigma * bw.sigma);
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < j; ++i) {
      const double d2 = std::max(0.0, gram(i, i) + gram(j, j) - 2.0 * gram(i, j));
      const double v = std::exp(-d2 * inv_two_sigma_sq);
      k(i, j) = v;
      k(j, i) = v;
    }
    k(j, j) = 1.0;
  }
  return GramMatrix{std::move(k), bw, false};
}

/// HKH. Throws AlreadyCentered when applied twice.
inline GramMatrix center_gram(const GramMatrix& k) {
  if (k.centered) {
    throw AlreadyCentered("Gram matrix is already centered");
  }
  return GramMatrix{detail::center_raw(k.entries), k.bandwidth, true};
}

/// R_Z = lambda (K~_Z + lambda I)^-1 via a symmetric positive-definite solve.
inline RidgeProjection ridge_projection(const GramMatrix& kz_centered, double lambda) {
  if (!kz_centered.centered) {
    throw ConfigError("ridge_projection expects a centered Gram matrix");
  }
  if (!(lambda > 0.0)) {
    throw ConfigError("ridge lambda must be positive");
  }
  const Eigen::Index n = kz_centered.entries.rows();
  Eigen::MatrixXd reg = kz_centered.entries;
  reg.diagonal().array() += lambda;
  if (!reg.allFinite()) {
    throw SolveFailed("regularized kernel system contains non-finite entries");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(reg);
  if (llt.info() != Eigen::Success) {
    throw SolveFailed("regularized kernel system is not positive definite");
  }
  Eigen::MatrixXd r = lambda * llt.solve(Eigen::MatrixXd::Identity(n, n));
  r = 0.5 * (r + r.transpose()).eval();
  return RidgeProjection{std::move(r), lambda};
}

/// K~ = R K R.
inline GramMatrix residualize(const GramMatrix& k_centered, const RidgeProjection& r) {
  if (!k_centered.centered) {
    throw ConfigError("residualize expects a centered Gram matrix");
  }
  if (k_centered.entries.rows() != r.matrix.rows()) {
    throw DimensionMismatch("Gram matrix and projection dimensions differ");
  }
  Eigen::MatrixXd tmp;
  tmp.noalias() = r.matrix * k_centered.entries;
  Eigen::MatrixXd out;
  out.noalias() = tmp * r.matrix;
  out = 0.5 * (out + out.transpose()).eval();
  return GramMatrix{std::move(out), k_centered.bandwidth, true};
}

/// Full symmetric eigendecomposition, keeping eigenpairs with
/// lambda >= rel_threshold * lambda_max. When lambda_max <= 0 the single
/// largest pair is kept with its value clamped to 0; eigenvalues below
/// -1e-10 signal a genuinely indefinite input and raise an error.
inline EigSystem truncated_eig(const GramMatrix& k, double rel_threshold) {
  if (!(rel_threshold > 0.0) || !(rel_threshold < 1.0)) {
    throw ConfigError("rel_threshold must lie in (0, 1)");
  }
  const Eigen::Index n = k.entries.rows();
  Eigen::MatrixXd work = 0.5 * (k.entries + k.entries.transpose());
  Eigen::VectorXd evals_asc;
  detail::sym_eig_inplace(work, evals_asc, true);  // work now holds eigenvectors

  const double lambda_max = evals_asc(n - 1);
  EigSystem out;
  if (lambda_max <= 0.0) {
    if (lambda_max < -1e-10) {
      throw NotPositiveSemiDefinite("largest eigenvalue is below -1e-10");
    }
    out.eigenvalues = Eigen::VectorXd::Zero(1);
    out.eigenvectors = work.col(n - 1);
    out.threshold_used = 0.0;
    return out;
  }

  const double threshold = rel_threshold * lambda_max;
  Eigen::Index p = 0;
  while (p < n && evals_asc(n - 1 - p) >= threshold) ++p;

  out.eigenvalues.resize(p);
  out.eigenvectors.resize(n, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    double v = evals_asc(n - 1 - i);
    if (v < 0.0) {
      if (v < -1e-10) throw NotPositiveSemiDefinite("retained eigenvalue below -1e-10");
      v = 0.0;
    }
    out.eigenvalues(i) = v;
    out.eigenvectors.col(i) = work.col(n - 1 - i);
  }
  out.threshold_used = threshold;
  return out;
}

}  // namespace fastkci
