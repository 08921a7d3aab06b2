#pragma once

// Synthetic activations with known structure, plus Monte Carlo and exact
// chi-squared oracles.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "tesda/ablation.hpp"
#include "tesda/manifest.hpp"
#include "tesda/tensor_io.hpp"

namespace tesda {

struct SyntheticLayer {
  std::string id;
  LayerKind kind = LayerKind::conv;
  TensorShape shape;
};

enum class ShiftDirection { pca_lowest, random, explicit_vector };

/// Adds delta * v * (DCT basis image at the ordinal) to every channel map, so
/// only that DCT bin moves. delta is `magnitude` standard deviations of the
/// clean coefficient along v. Dense layers ignore the ordinal.
struct MeanShift {
  std::vector<std::string> layers;  // empty: every layer
  ShiftDirection direction = ShiftDirection::pca_lowest;
  Eigen::VectorXd vector;  // used by explicit_vector; length M of each target
  double magnitude = 5.0;
  std::size_t dct_ordinal = 0;
};

/// Scales the fluctuation around the clean mean.
struct VarianceScale {
  std::string layer;
  double factor = 2.0;
};

/// Shift of `amplitude` standard deviations along the lowest-variance channel
/// direction, confined to the DCT bin at `ordinal` of one conv layer.
struct FrequencyInject {
  std::string layer;
  std::size_t ordinal = 0;
  double amplitude = 5.0;
};

using SyntheticAttack = std::variant<MeanShift, VarianceScale, FrequencyInject>;

struct SyntheticSpec {
  std::vector<SyntheticLayer> layers;
  std::size_t n_train = 1000;
  std::size_t n_test = 1000;
  std::size_t n_attacked = 1000;
  SyntheticAttack attack = MeanShift{};
  std::uint64_t seed = 0;
  double rho = 0.5;  // AR(1) correlation of neighbouring map cells

  void validate() const;
};

/// The fixed per-layer generative model: channel m of a conv layer is
/// offset_m + sum_r B(m, r) Z_r with B = Q diag(s) and Z_r independent
/// separable AR(1) fields. The covariance across channels of every DCT bin is
/// proportional to B B^T, so all bins share the principal directions Q.
class SyntheticModel {
 public:
  explicit SyntheticModel(SyntheticSpec spec);

  const SyntheticSpec& spec() const { return spec_; }

  std::vector<FeatureTensor> clean_sample(std::mt19937_64& rng) const;
  void apply_attack(std::vector<FeatureTensor>& sample) const;

  /// Unit channel direction with the smallest variance.
  Eigen::VectorXd lowest_direction(std::size_t layer) const;
  /// Channel covariance of DCT bin (x, y); dense layers take (0, 0).
  Eigen::MatrixXd bin_covariance(std::size_t layer, std::size_t x, std::size_t y) const;

 private:
  struct LayerModel {
    Eigen::MatrixXd mixing;       // B, M x M
    Eigen::VectorXd offsets;      // M
    Eigen::MatrixXd chol_rows;    // Cholesky factor of the L x L AR(1) correlation
    Eigen::MatrixXd chol_cols;    // same for K x K
    Eigen::VectorXd bin_var_rows;  // diag(C_L R_L C_L^T)
    Eigen::VectorXd bin_var_cols;
  };

  std::size_t layer_index(const std::string& id) const;
  void shift(FeatureTensor& t, std::size_t layer, const Eigen::VectorXd& direction, double magnitude,
             std::size_t ordinal) const;
  void scale(FeatureTensor& t, std::size_t layer, double factor) const;

  SyntheticSpec spec_;
  std::vector<LayerModel> models_;
  std::vector<Eigen::VectorXd> shift_directions_;  // per layer; empty if not shifted
};

/// Clean-train, clean-test and attacked splits in memory; deterministic per
/// seed and independent of `threads`.
AblationData generate_in_memory(const SyntheticSpec& spec, unsigned threads = 1);

struct GeneratedManifests {
  std::filesystem::path train;
  std::filesystem::path clean_test;
  std::filesystem::path attacked;
};

/// Writes TFT1 tensors under out_dir/<split>/ and one manifest per split.
GeneratedManifests generate(const SyntheticSpec& spec, const std::filesystem::path& out_dir, unsigned threads = 1);

struct TailEstimate {
  double estimate = 0.0;
  double standard_error = 0.0;
};

/// Monte Carlo P[chi2_k >= delta_sq] from sums of k squared standard normals.
/// draws >= 1e5.
TailEstimate chi2_tail_mc(std::size_t k, double delta_sq, std::size_t draws, std::uint64_t seed = 0);

/// Exact chi2_k inverse CDF, p in (0, 1).
double chi2_quantile(std::size_t k, double p);

}  // namespace tesda
