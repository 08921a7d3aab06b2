#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>

#include <Eigen/Dense>

namespace tesda {

/// PCA of one row of D_i (or of a dense layer's raw output) across the
/// training set. Columns of `basis` are principal directions ordered by
/// non-increasing energy; each column's largest-magnitude entry is positive.
struct PcaModel {
  std::string layer_id;
  std::size_t row_index = 0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd basis;
  Eigen::VectorXd energies;

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }

  /// basis^T (row - mean). Entry k is alpha_{k+1}; the last entry has the
  /// lowest energy.
  Eigen::VectorXd project(const Eigen::VectorXd& row) const;
  Eigen::VectorXd reconstruct(const Eigen::VectorXd& coefficients) const;
};

/// Fits on the rows of `samples` (n x M, n >= 2), covariance divisor n - 1.
PcaModel fit_pca(const Eigen::MatrixXd& samples, std::string layer_id = {}, std::size_t row_index = 0);

/// T_i for one sample: row j is the projection of D_i's row j.
struct PcaProjection {
  std::string layer_id;
  Eigen::MatrixXd values;  // J x M
};

/// Which alpha enters theta. Empty means the last (lowest-energy) one;
/// otherwise a 1-based index, 1 being the highest-energy coefficient.
struct CoefficientChoice {
  std::optional<std::size_t> index;

  static CoefficientChoice lowest() { return {}; }
  static CoefficientChoice one_based(std::size_t k) { return {k}; }

  /// 0-based column into a projection of width `m`; throws if out of range.
  std::size_t column(std::size_t m) const;

  friend bool operator==(const CoefficientChoice&, const CoefficientChoice&) = default;
};

/// Concatenates, layer by layer and row by row, the chosen coefficient of each
/// projection: theta in R^(sum of J over layers).
Eigen::VectorXd select_theta_components(std::span<const PcaProjection> projections,
                                        CoefficientChoice choice = CoefficientChoice::lowest());

}  // namespace tesda
