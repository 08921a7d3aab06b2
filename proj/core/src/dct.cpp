#include "tesda/dct.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <set>
#include <utility>

#include "tesda/error.hpp"

namespace tesda {
namespace {

const Eigen::MatrixXd& cached_basis(std::size_t n) {
  static std::mutex mutex;
  static std::map<std::size_t, std::unique_ptr<Eigen::MatrixXd>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[n];
  if (!slot) {
    auto c = std::make_unique<Eigen::MatrixXd>(n, n);
    const double dn = static_cast<double>(n);
    for (std::size_t u = 0; u < n; ++u) {
      const double scale = u == 0 ? std::sqrt(1.0 / dn) : std::sqrt(2.0 / dn);
      for (std::size_t i = 0; i < n; ++i) {
        (*c)(u, i) = scale * std::cos(std::numbers::pi * (2.0 * i + 1.0) * u / (2.0 * dn));
      }
    }
    slot = std::move(c);
  }
  return *slot;
}

void require_finite(const Eigen::MatrixXd& m, const char* what) {
  if (m.size() == 0) throw ValidationError(std::string(what) + ": empty input");
  if (!m.allFinite()) throw ValidationError(std::string(what) + ": non-finite input");
}

}  // namespace

Eigen::MatrixXd dct_basis(std::size_t n) {
  if (n == 0) throw ValidationError("dct_basis: size must be >= 1");
  return cached_basis(n);
}

Eigen::MatrixXd dct2(const Eigen::MatrixXd& image) {
  require_finite(image, "dct2");
  const auto& rows = cached_basis(static_cast<std::size_t>(image.rows()));
  const auto& cols = cached_basis(static_cast<std::size_t>(image.cols()));
  return rows * image * cols.transpose();
}

Eigen::MatrixXd idct2(const Eigen::MatrixXd& coeffs) {
  require_finite(coeffs, "idct2");
  const auto& rows = cached_basis(static_cast<std::size_t>(coeffs.rows()));
  const auto& cols = cached_basis(static_cast<std::size_t>(coeffs.cols()));
  return rows.transpose() * coeffs * cols;
}

CoefficientIndex zigzag_index(std::size_t ordinal, std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) throw ValidationError("zigzag_index: empty grid");
  if (ordinal >= rows * cols) {
    throw ValidationError("zig-zag ordinal " + std::to_string(ordinal) + " out of range for " + std::to_string(rows) +
                          "x" + std::to_string(cols) + " map");
  }
  std::size_t seen = 0;
  for (std::size_t s = 0; s + 1 < rows + cols; ++s) {
    const std::size_t x_lo = s >= cols ? s - (cols - 1) : 0;
    const std::size_t x_hi = std::min(s, rows - 1);
    const std::size_t len = x_hi - x_lo + 1;
    if (ordinal < seen + len) {
      const std::size_t step = ordinal - seen;
      // Odd diagonals run down-left (x increasing), even ones up-right.
      const std::size_t x = (s % 2 == 1) ? x_lo + step : x_hi - step;
      return {x, s - x};
    }
    seen += len;
  }
  throw ValidationError("zigzag_index: unreachable");
}

DctSelection::DctSelection(std::vector<CoefficientIndex> coefficients) : coefficients_(std::move(coefficients)) {
  if (coefficients_.empty()) throw ValidationError("DCT selection needs at least one coefficient");
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& c : coefficients_) {
    if (!seen.emplace(c.x, c.y).second) {
      throw ValidationError("duplicate DCT coefficient (" + std::to_string(c.x) + "," + std::to_string(c.y) + ")");
    }
  }
}

DctSelection DctSelection::zigzag(std::size_t first_ordinal, std::size_t count, std::size_t rows, std::size_t cols) {
  std::vector<CoefficientIndex> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(zigzag_index(first_ordinal + i, rows, cols));
  return DctSelection(std::move(out));
}

void DctSelection::check_bounds(std::size_t rows, std::size_t cols, const std::string& layer_id) const {
  for (const auto& c : coefficients_) {
    if (c.x >= rows || c.y >= cols) {
      throw ValidationError("DCT index (" + std::to_string(c.x) + "," + std::to_string(c.y) + ") out of bounds for " +
                            std::to_string(rows) + "x" + std::to_string(cols) + " map" +
                            (layer_id.empty() ? "" : " of layer '" + layer_id + "'"));
    }
  }
}

DctCoefficientMatrix extract_dct_matrix(const FeatureTensor& t, const DctSelection& selection) {
  const auto& shape = t.shape;
  selection.check_bounds(shape.height, shape.width, t.layer_id);
  if (t.data.size() != shape.element_count()) throw ValidationError("tensor '" + t.layer_id + "': data/dims mismatch");

  const auto& row_basis = cached_basis(shape.height);
  const auto& col_basis = cached_basis(shape.width);
  const auto& coeffs = selection.coefficients();

  DctCoefficientMatrix out;
  out.layer_id = t.layer_id;
  out.values.resize(static_cast<Eigen::Index>(coeffs.size()), static_cast<Eigen::Index>(shape.channels));

  // Only the selected frequencies are needed: coefficient (x, y) of channel m
  // is row_basis.row(x) * X_m * col_basis.row(y)^T.
  for (std::size_t m = 0; m < shape.channels; ++m) {
    const auto ch = t.channel(m);
    for (std::size_t j = 0; j < coeffs.size(); ++j) {
      const auto [x, y] = coeffs[j];
      double acc = 0.0;
      for (std::size_t r = 0; r < shape.height; ++r) {
        double row_sum = 0.0;
        for (std::size_t c = 0; c < shape.width; ++c) {
          row_sum += static_cast<double>(ch[r * shape.width + c]) * col_basis(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(c));
        }
        acc += row_basis(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(r)) * row_sum;
      }
      if (!std::isfinite(acc)) throw ValidationError("tensor '" + t.layer_id + "': non-finite DCT coefficient");
      out.values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(m)) = acc;
    }
  }
  return out;
}

}  // namespace tesda
