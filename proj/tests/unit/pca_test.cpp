#include <gtest/gtest.h>

#include "test_support.hpp"
#include "tesda/error.hpp"
#include "tesda/pca.hpp"

namespace tesda {
namespace {

using testing::gaussian_matrix;

// Anisotropic sample with distinct variances, rotated by a fixed orthogonal
// matrix.
Eigen::MatrixXd anisotropic(Eigen::Index n, Eigen::Index m, std::uint64_t seed) {
  Eigen::VectorXd scale(m);
  for (Eigen::Index i = 0; i < m; ++i) scale(i) = 3.0 / (1.0 + i);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian_matrix(m, m, seed + 1));
  const Eigen::MatrixXd q = qr.householderQ();
  Eigen::MatrixXd x = gaussian_matrix(n, m, seed) * scale.asDiagonal() * q.transpose();
  x.rowwise() += Eigen::RowVectorXd::LinSpaced(m, -1.0, 2.0);
  return x;
}

TEST(Pca, RankOneLineHasZeroSecondEnergy) {
  Eigen::MatrixXd x(5, 2);
  for (int t = -2; t <= 2; ++t) x.row(t + 2) << t, 2.0 * t;
  const auto p = fit_pca(x);
  EXPECT_GT(p.energies(0), 0.0);
  EXPECT_LT(p.energies(1), 1e-12);
  EXPECT_GE(p.energies(1), 0.0);
  EXPECT_NEAR(std::abs(p.basis(1, 0) / p.basis(0, 0)), 2.0, 1e-12);
}

TEST(Pca, IsotropicGaussianEnergiesNearOne) {
  const auto p = fit_pca(gaussian_matrix(50000, 3, 5));
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(p.energies(i), 1.0, 0.05);
}

TEST(Pca, DuplicatedDatasetGivesSameModel) {
  const auto x = anisotropic(200, 4, 3);
  Eigen::MatrixXd twice(400, 4);
  twice << x, x;
  const auto a = fit_pca(x);
  const auto b = fit_pca(twice);
  EXPECT_LE((a.mean - b.mean).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((a.basis - b.basis).cwiseAbs().maxCoeff(), 1e-6);
  // divisor n-1: energies differ by the factor (n-1)/(2n-1) * 2
  EXPECT_LE((a.energies * (199.0 * 2.0 / 399.0) - b.energies).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Pca, BasisOrthonormalAndEnergiesSorted) {
  const auto p = fit_pca(anisotropic(1000, 6, 8));
  EXPECT_LE((p.basis.transpose() * p.basis - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff(), 1e-8);
  for (Eigen::Index k = 0; k + 1 < 6; ++k) EXPECT_GE(p.energies(k), p.energies(k + 1));
  for (Eigen::Index k = 0; k < 6; ++k) {
    Eigen::Index arg = 0;
    p.basis.col(k).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(p.basis(arg, k), 0.0) << "sign rule, column " << k;
  }
}

TEST(Pca, ProjectAndReconstruct) {
  const auto x = anisotropic(500, 5, 9);
  const auto p = fit_pca(x);
  EXPECT_LE(p.project(p.mean).cwiseAbs().maxCoeff(), 1e-15);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::VectorXd row = x.row(i).transpose();
    EXPECT_LE((p.reconstruct(p.project(row)) - row).norm(), 1e-9 * row.norm());
  }
  EXPECT_THROW(p.project(Eigen::VectorXd::Zero(4)), ValidationError);
}

TEST(Pca, CoefficientVarianceMatchesEnergy) {
  const auto x = anisotropic(10000, 4, 10);
  const auto p = fit_pca(x);
  Eigen::MatrixXd coeffs(x.rows(), 4);
  for (Eigen::Index i = 0; i < x.rows(); ++i) coeffs.row(i) = p.project(x.row(i).transpose()).transpose();
  for (Eigen::Index k = 0; k < 4; ++k) {
    const auto c = coeffs.col(k);
    const double var = (c.array() - c.mean()).square().sum() / static_cast<double>(x.rows() - 1);
    EXPECT_NEAR(var, p.energies(k), 0.02 * p.energies(k));
  }
}

TEST(Pca, RotationLeavesEnergiesUnchanged) {
  const auto x = anisotropic(300, 4, 12);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian_matrix(4, 4, 99));
  const Eigen::MatrixXd r = qr.householderQ();
  const auto a = fit_pca(x);
  const auto b = fit_pca(x * r.transpose());
  EXPECT_LE((a.energies - b.energies).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Pca, ShiftLeavesProjectionUnchanged) {
  const auto x = anisotropic(300, 4, 13);
  Eigen::RowVectorXd c(4);
  c << 10.0, -3.0, 0.5, 7.0;
  const auto a = fit_pca(x);
  const auto b = fit_pca(x.rowwise() + c);
  const Eigen::VectorXd q = gaussian_matrix(4, 1, 14);
  EXPECT_LE((a.project(q) - b.project(q + c.transpose())).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Pca, RejectsBadInput) {
  EXPECT_THROW(fit_pca(Eigen::MatrixXd::Ones(1, 3)), ValidationError);
  Eigen::MatrixXd x = gaussian_matrix(5, 2, 1);
  x(2, 1) = std::nan("");
  EXPECT_THROW(fit_pca(x), ValidationError);
}

PcaProjection projection(const std::string& id, std::initializer_list<std::initializer_list<double>> rows) {
  PcaProjection p{id, Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()))};
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) p.values(r, c++) = v;
    ++r;
  }
  return p;
}

TEST(Theta, LowestCoefficientPerLayer) {
  const std::vector<PcaProjection> p = {projection("a", {{1, 2, 3}}), projection("b", {{4, 5}})};
  EXPECT_EQ(select_theta_components(p), (Eigen::VectorXd(2) << 3, 5).finished());
}

TEST(Theta, OneLayerTwoRows) {
  const std::vector<PcaProjection> p = {projection("a", {{1, 2, 3}, {4, 5, 6}})};
  EXPECT_EQ(select_theta_components(p), (Eigen::VectorXd(2) << 3, 6).finished());
}

TEST(Theta, LayerMajorOrderForSeveralRows) {
  const std::vector<PcaProjection> p = {projection("a", {{1, 2}, {3, 4}}), projection("b", {{5, 6}, {7, 8}})};
  EXPECT_EQ(select_theta_components(p), (Eigen::VectorXd(4) << 2, 4, 6, 8).finished());
}

TEST(Theta, ExplicitIndexMatchesDirectLookup) {
  const std::vector<PcaProjection> p = {projection("a", {{1, 2, 3}, {4, 5, 6}}), projection("b", {{7, 8}})};
  EXPECT_EQ(select_theta_components(p, CoefficientChoice::one_based(1)), (Eigen::VectorXd(3) << 1, 4, 7).finished());
  EXPECT_EQ(select_theta_components(p, CoefficientChoice::one_based(2)), (Eigen::VectorXd(3) << 2, 5, 8).finished());
  EXPECT_THROW(select_theta_components(p, CoefficientChoice::one_based(3)), ValidationError);
  EXPECT_THROW(select_theta_components({}), ValidationError);
}

}  // namespace
}  // namespace tesda
