#include <cmath>
#include <numbers>
#include <set>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "tesda/dct.hpp"
#include "tesda/error.hpp"

namespace tesda {
namespace {

using testing::gaussian_matrix;

// Textbook orthonormal DCT-II evaluated term by term.
Eigen::MatrixXd naive_dct2(const Eigen::MatrixXd& img) {
  const auto rows = img.rows();
  const auto cols = img.cols();
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index u = 0; u < rows; ++u) {
    for (Eigen::Index v = 0; v < cols; ++v) {
      double sum = 0.0;
      for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
          sum += img(i, j) * std::cos(std::numbers::pi * (2 * i + 1) * u / (2.0 * rows)) *
                 std::cos(std::numbers::pi * (2 * j + 1) * v / (2.0 * cols));
        }
      }
      const double au = u == 0 ? std::sqrt(1.0 / rows) : std::sqrt(2.0 / rows);
      const double av = v == 0 ? std::sqrt(1.0 / cols) : std::sqrt(2.0 / cols);
      out(u, v) = au * av * sum;
    }
  }
  return out;
}

TEST(Dct, TwoByTwoOnesHasDcTwo) {
  const auto c = dct2(Eigen::MatrixXd::Ones(2, 2));
  EXPECT_NEAR(c(0, 0), 2.0, 1e-15);
  EXPECT_NEAR(c(0, 1), 0.0, 1e-15);
  EXPECT_NEAR(c(1, 0), 0.0, 1e-15);
  EXPECT_NEAR(c(1, 1), 0.0, 1e-15);
}

TEST(Dct, MatchesTextbookFormula) {
  for (auto [r, c] : {std::pair{1, 1}, {3, 3}, {7, 5}, {8, 8}, {2, 9}}) {
    const auto img = gaussian_matrix(r, c, 100 + r * c);
    EXPECT_LE((dct2(img) - naive_dct2(img)).cwiseAbs().maxCoeff(), 1e-12) << r << "x" << c;
  }
}

TEST(Dct, InverseOfZerosAndDcOnly) {
  EXPECT_EQ(idct2(Eigen::MatrixXd::Zero(3, 4)), Eigen::MatrixXd::Zero(3, 4));
  Eigen::MatrixXd coeffs = Eigen::MatrixXd::Zero(2, 2);
  coeffs(0, 0) = 3.0;
  EXPECT_LE((idct2(coeffs).array() - 1.5).abs().maxCoeff(), 1e-15);
}

TEST(Dct, RoundTripRandomEightByEight) {
  const auto img = gaussian_matrix(8, 8, 1);
  EXPECT_LE((idct2(dct2(img)) - img).norm(), 1e-10 * img.norm());
}

TEST(Dct, LinearAndInnerProductPreserving) {
  const auto x = gaussian_matrix(6, 4, 2);
  const auto y = gaussian_matrix(6, 4, 3);
  const double a = 1.7, b = -0.3;
  EXPECT_LE((dct2(a * x + b * y) - (a * dct2(x) + b * dct2(y))).cwiseAbs().maxCoeff(), 1e-10);
  const double ip = (x.array() * y.array()).sum();
  const double ip_dct = (dct2(x).array() * dct2(y).array()).sum();
  EXPECT_NEAR(ip_dct, ip, 1e-9 * std::abs(ip));
}

TEST(Dct, RejectsNonFiniteOrEmptyInput) {
  Eigen::MatrixXd img = Eigen::MatrixXd::Ones(2, 2);
  img(1, 0) = std::nan("");
  EXPECT_THROW(dct2(img), ValidationError);
  EXPECT_THROW(idct2(img), ValidationError);
  EXPECT_THROW(dct2(Eigen::MatrixXd(0, 3)), ValidationError);
}

TEST(Dct, BasisIsOrthonormal) {
  for (std::size_t n : {1u, 2u, 5u, 16u}) {
    const auto c = dct_basis(n);
    EXPECT_LE((c * c.transpose() - Eigen::MatrixXd::Identity(c.rows(), c.rows())).cwiseAbs().maxCoeff(), 1e-13);
  }
}

TEST(Extract, ConstantChannelGivesDcTwo) {
  const FeatureTensor t{"c", LayerKind::conv, {1, 2, 2}, {1, 1, 1, 1}};
  const auto d = extract_dct_matrix(t, DctSelection{});
  ASSERT_EQ(d.values.rows(), 1);
  ASSERT_EQ(d.values.cols(), 1);
  EXPECT_NEAR(d.values(0, 0), 2.0, 1e-15);
  EXPECT_EQ(d.layer_id, "c");
}

TEST(Extract, MatchesPerChannelFullDct) {
  const auto t = testing::random_tensor("c", {3, 5, 4}, 9);
  const DctSelection sel({{0, 0}, {0, 1}, {4, 3}});
  const auto d = extract_dct_matrix(t, sel);
  ASSERT_EQ(d.values.rows(), 3);
  ASSERT_EQ(d.values.cols(), 3);
  for (std::size_t m = 0; m < 3; ++m) {
    Eigen::MatrixXd img(5, 4);
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t j = 0; j < 4; ++j) img(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t.at(m, i, j);
    }
    const auto full = naive_dct2(img);
    for (std::size_t j = 0; j < sel.size(); ++j) {
      const auto [x, y] = sel.coefficients()[j];
      EXPECT_NEAR(d.values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(m)),
                  full(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)), 1e-12);
    }
  }
}

TEST(Extract, OutOfBoundsSelectionIsRejected) {
  const auto t = testing::random_tensor("c", {2, 3, 3}, 4);
  EXPECT_THROW(extract_dct_matrix(t, DctSelection({{3, 0}})), ValidationError);
  EXPECT_THROW(extract_dct_matrix(t, DctSelection({{0, 3}})), ValidationError);
}

TEST(Selection, RejectsEmptyAndDuplicates) {
  EXPECT_THROW(DctSelection(std::vector<CoefficientIndex>{}), ValidationError);
  EXPECT_THROW(DctSelection({{1, 1}, {0, 0}, {1, 1}}), ValidationError);
  EXPECT_EQ(DctSelection{}.size(), 1u);
}

TEST(Zigzag, FirstEntriesFollowJpegOrder) {
  const std::vector<CoefficientIndex> expected = {{0, 0}, {0, 1}, {1, 0}, {2, 0}, {1, 1}, {0, 2}, {0, 3}, {1, 2},
                                                  {2, 1}, {3, 0}, {4, 0}, {3, 1}, {2, 2}, {1, 3}, {0, 4}, {0, 5}};
  for (std::size_t k = 0; k < expected.size(); ++k) EXPECT_EQ(zigzag_index(k, 8, 8), expected[k]) << k;
  EXPECT_EQ(zigzag_index(63, 8, 8), (CoefficientIndex{7, 7}));
}

TEST(Zigzag, EnumerationIsAPermutation) {
  for (auto [r, c] : {std::pair{8u, 8u}, {7u, 5u}, {1u, 6u}, {4u, 1u}, {3u, 9u}}) {
    std::set<std::pair<std::size_t, std::size_t>> seen;
    std::size_t last_diag = 0;
    for (std::size_t k = 0; k < r * c; ++k) {
      const auto idx = zigzag_index(k, r, c);
      ASSERT_LT(idx.x, r);
      ASSERT_LT(idx.y, c);
      EXPECT_GE(idx.x + idx.y, last_diag);  // low-to-high frequency sweep
      last_diag = idx.x + idx.y;
      seen.insert({idx.x, idx.y});
    }
    EXPECT_EQ(seen.size(), r * c);
    EXPECT_THROW(zigzag_index(r * c, r, c), ValidationError);
  }
}

TEST(Zigzag, SelectionFactoryUsesConsecutiveOrdinals) {
  const auto sel = DctSelection::zigzag(3, 3, 8, 8);
  EXPECT_EQ(sel.coefficients(), (std::vector<CoefficientIndex>{{2, 0}, {1, 1}, {0, 2}}));
}

}  // namespace
}  // namespace tesda
