#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <utility>
#include <vector>

#include "fastkci/errors.hpp"

namespace fastkci {

/// Immutable n x d sample matrix with finite entries. The universal data
/// carrier for X, Y and Z.
class DataMatrix {
 public:
  explicit DataMatrix(Eigen::MatrixXd values) : values_(std::move(values)) {
    if (values_.rows() < 1 || values_.cols() < 1) {
      throw DimensionMismatch("DataMatrix needs at least one row and one column");
    }
    if (!values_.allFinite()) {
      throw Error("DataMatrix entries must be finite");
    }
  }

  Eigen::Index rows() const { return values_.rows(); }
  Eigen::Index cols() const { return values_.cols(); }
  const Eigen::MatrixXd& values() const { return values_; }

 private:
  Eigen::MatrixXd values_;
};

/// Zero-mean, unit-sample-variance columns (denominator n-1). Constant
/// columns map to all zeros.
inline Eigen::MatrixXd standardize_columns(const Eigen::MatrixXd& m) {
  const Eigen::Index n = m.rows();
  Eigen::MatrixXd out(n, m.cols());
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    Eigen::VectorXd centered = m.col(c).array() - m.col(c).mean();
    const double var = n > 1 ? centered.squaredNorm() / static_cast<double>(n - 1) : 0.0;
    if (var > 0.0) {
      out.col(c) = centered / std::sqrt(var);
    } else {
      out.col(c).setZero();
    }
  }
  return out;
}

/// Rows of m selected by idx, preserving idx order.
inline Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<int>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = m.row(idx[r]);
  }
  return out;
}

/// Columns of m selected by idx, preserving idx order.
inline Eigen::MatrixXd take_cols(const Eigen::MatrixXd& m, const std::vector<int>& idx) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t c = 0; c < idx.size(); ++c) {
    out.col(static_cast<Eigen::Index>(c)) = m.col(idx[c]);
  }
  return out;
}

}  // namespace fastkci
