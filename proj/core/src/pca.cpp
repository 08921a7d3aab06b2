#include "tesda/pca.hpp"

#include <cmath>

#include "tesda/error.hpp"

namespace tesda {

Eigen::VectorXd PcaModel::project(const Eigen::VectorXd& row) const {
  if (row.size() != mean.size()) {
    throw ValidationError("PCA '" + layer_id + "': row length " + std::to_string(row.size()) + " != " +
                          std::to_string(mean.size()));
  }
  return basis.transpose() * (row - mean);
}

Eigen::VectorXd PcaModel::reconstruct(const Eigen::VectorXd& coefficients) const {
  if (coefficients.size() != mean.size()) throw ValidationError("PCA '" + layer_id + "': coefficient length mismatch");
  return mean + basis * coefficients;
}

PcaModel fit_pca(const Eigen::MatrixXd& samples, std::string layer_id, std::size_t row_index) {
  const auto n = samples.rows();
  const auto m = samples.cols();
  if (n < 2) throw ValidationError("fit_pca '" + layer_id + "': need n >= 2 rows, got " + std::to_string(n));
  if (m < 1) throw ValidationError("fit_pca '" + layer_id + "': zero-length rows");
  if (!samples.allFinite()) throw ValidationError("fit_pca '" + layer_id + "': non-finite input");

  PcaModel model;
  model.layer_id = std::move(layer_id);
  model.row_index = row_index;
  model.mean = samples.colwise().mean().transpose();

  const Eigen::MatrixXd centered = samples.rowwise() - model.mean.transpose();
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericalError("fit_pca '" + model.layer_id + "': eigensolver failed");

  // Eigen returns ascending eigenvalues; store them descending.
  model.basis.resize(m, m);
  model.energies.resize(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::Index src = m - 1 - k;
    Eigen::VectorXd v = eig.eigenvectors().col(src);
    Eigen::Index pivot = 0;
    v.cwiseAbs().maxCoeff(&pivot);
    if (v(pivot) < 0) v = -v;
    model.basis.col(k) = v;
    model.energies(k) = std::max(0.0, eig.eigenvalues()(src));
  }
  return model;
}

std::size_t CoefficientChoice::column(std::size_t m) const {
  if (!index) return m - 1;
  if (*index < 1 || *index > m) {
    throw ValidationError("PCA coefficient index " + std::to_string(*index) + " out of range 1.." + std::to_string(m));
  }
  return *index - 1;
}

Eigen::VectorXd select_theta_components(std::span<const PcaProjection> projections, CoefficientChoice choice) {
  if (projections.empty()) throw ValidationError("select_theta_components: no projections");
  Eigen::Index total = 0;
  for (const auto& p : projections) {
    if (p.values.rows() == 0 || p.values.cols() == 0) {
      throw ValidationError("select_theta_components: empty projection for layer '" + p.layer_id + "'");
    }
    total += p.values.rows();
  }
  Eigen::VectorXd theta(total);
  Eigen::Index out = 0;
  for (const auto& p : projections) {
    const auto col = static_cast<Eigen::Index>(choice.column(static_cast<std::size_t>(p.values.cols())));
    for (Eigen::Index j = 0; j < p.values.rows(); ++j) theta(out++) = p.values(j, col);
  }
  return theta;
}

}  // namespace tesda
