#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tesda/tensor_io.hpp"

namespace tesda {

/// Orthonormal DCT-II basis of size n: row u holds the u-th cosine, so
/// C * x is the 1-D transform of column vector x and C^T inverts it.
Eigen::MatrixXd dct_basis(std::size_t n);

/// Orthonormal 2-D DCT-II, rows then columns. Throws on non-finite input.
Eigen::MatrixXd dct2(const Eigen::MatrixXd& image);
Eigen::MatrixXd idct2(const Eigen::MatrixXd& coeffs);

/// A 2-D frequency index: x selects the row frequency (0..L-1), y the column
/// frequency (0..K-1).
struct CoefficientIndex {
  std::size_t x = 0;
  std::size_t y = 0;
  friend bool operator==(const CoefficientIndex&, const CoefficientIndex&) = default;
};

/// Position `ordinal` in JPEG zig-zag order over an L x K grid: (0,0), (0,1),
/// (1,0), (2,0), (1,1), (0,2), ... Rectangular grids skip out-of-range cells
/// along each anti-diagonal.
CoefficientIndex zigzag_index(std::size_t ordinal, std::size_t rows, std::size_t cols);

/// The J frequency components kept per channel.
class DctSelection {
 public:
  /// The DC coefficient only.
  DctSelection() : coefficients_{{0, 0}} {}
  explicit DctSelection(std::vector<CoefficientIndex> coefficients);

  /// First `count` zig-zag positions starting at `first_ordinal`.
  static DctSelection zigzag(std::size_t first_ordinal, std::size_t count, std::size_t rows, std::size_t cols);

  const std::vector<CoefficientIndex>& coefficients() const { return coefficients_; }
  std::size_t size() const { return coefficients_.size(); }

  /// Throws ValidationError unless every index fits inside rows x cols.
  void check_bounds(std::size_t rows, std::size_t cols, const std::string& layer_id = {}) const;

  friend bool operator==(const DctSelection&, const DctSelection&) = default;

 private:
  std::vector<CoefficientIndex> coefficients_;
};

/// D_i for one layer and one sample: entry (j, m) is coefficient j of the DCT
/// of channel m.
struct DctCoefficientMatrix {
  std::string layer_id;
  Eigen::MatrixXd values;  // J x M
};

DctCoefficientMatrix extract_dct_matrix(const FeatureTensor& t, const DctSelection& selection);

}  // namespace tesda
