#pragma once

// End-to-end detector: per-layer DCT -> PCA -> theta, robust elliptic
// envelope(s) over theta, threshold from the training data or a tail bound.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tesda/dct.hpp"
#include "tesda/manifest.hpp"
#include "tesda/metrics.hpp"
#include "tesda/pca.hpp"
#include "tesda/robust.hpp"
#include "tesda/tensor_io.hpp"
#include "tesda/thresholds.hpp"

namespace tesda {

enum class ThresholdMethod { empirical, chebyshev, subexponential, chernoff };
enum class CombineMode { joint, per_coefficient_or };

const char* to_string(ThresholdMethod method);
ThresholdMethod threshold_method_from_string(const std::string& s);
const char* to_string(CombineMode mode);
CombineMode combine_mode_from_string(const std::string& s);

struct DetectorConfig {
  /// Tap points to monitor, in theta order. Empty selects every layer of the
  /// training manifest in manifest order.
  std::vector<std::string> layers;
  DctSelection dct;
  CoefficientChoice pca_coefficient;
  double epsilon = 0.01;
  ThresholdMethod threshold = ThresholdMethod::empirical;
  CombineMode mode = CombineMode::joint;
  std::uint64_t seed = 0;
  std::size_t mcd_starts = 500;
  bool mcd_reweight = true;
  /// Worker threads for extraction and MCD starts; never affects results.
  unsigned threads = 1;

  /// Throws ValidationError on an out-of-range epsilon or empty start count.
  void validate() const;
};

/// Fitted feature path of one monitored layer: one PcaModel per DCT row for
/// conv layers, a single PcaModel on the raw output for dense layers.
struct LayerPipeline {
  LayerSpec spec;
  std::vector<PcaModel> pcas;
};

/// Position of one theta entry: monitored layer index and DCT row (0 for
/// dense layers).
struct ThetaComponent {
  std::size_t layer = 0;
  std::size_t row = 0;
  friend bool operator==(const ThetaComponent&, const ThetaComponent&) = default;
};

/// One elliptic envelope over a subset of theta entries. Joint mode has a
/// single group with every retained entry; OR mode has one group per DCT row.
struct EnvelopeGroup {
  std::size_t dct_row = 0;
  std::vector<std::size_t> components;  // indices into the full theta vector
  EnvelopeModel envelope;
};

struct Provenance {
  std::uint32_t layout_hash = 0;
  std::uint64_t seed = 0;
  /// Seconds since the epoch; 0 unless the caller stamps it, so refits with
  /// the same inputs serialize identically.
  std::int64_t fit_timestamp = 0;
  std::size_t n_train = 0;
};

struct DetectionVerdict {
  std::string sample_id;
  bool is_attack = false;
  std::vector<double> d_sq;  // one per envelope group
  Eigen::VectorXd theta;
};

class FittedDetector {
 public:
  FittedDetector(DetectorConfig config, std::vector<LayerPipeline> layers, std::vector<ThetaComponent> components,
                 std::vector<EnvelopeGroup> groups, std::vector<std::size_t> dropped, Provenance provenance);

  const DetectorConfig& config() const { return config_; }
  const std::vector<LayerPipeline>& layers() const { return layers_; }
  const std::vector<ThetaComponent>& components() const { return components_; }
  const std::vector<EnvelopeGroup>& groups() const { return groups_; }
  /// Theta entries excluded for near-zero training variance.
  const std::vector<std::size_t>& dropped() const { return dropped_; }
  const Provenance& provenance() const { return provenance_; }
  std::size_t theta_dim() const { return components_.size(); }
  std::vector<LayerSpec> layer_specs() const;

  /// Full theta (every component, including dropped ones) for one sample.
  /// Tensors are matched to monitored layers by layer id.
  Eigen::VectorXd theta(std::span<const FeatureTensor> sample) const;

  /// Per-group squared distances and the combined verdict for a theta.
  DetectionVerdict classify(const Eigen::VectorXd& theta) const;

  DetectionVerdict score(std::span<const FeatureTensor> sample, std::string sample_id = {}) const;

  /// Same pipeline with every envelope's threshold replaced.
  FittedDetector with_thresholds(const std::vector<double>& delta_sq) const;

  /// Throws ValidationError unless `layers` provides every monitored layer
  /// with identical kind and dims.
  void check_layout(const std::vector<LayerSpec>& layers) const;

 private:
  DetectorConfig config_;
  std::vector<LayerPipeline> layers_;
  std::vector<ThetaComponent> components_;
  std::vector<EnvelopeGroup> groups_;
  std::vector<std::size_t> dropped_;
  Provenance provenance_;
};

struct FitResult {
  FittedDetector detector;
  /// Training theta, n x theta_dim, row i = sample i.
  Eigen::MatrixXd training_theta;
  std::vector<McdDiagnostics> mcd;
  std::vector<std::string> warnings;
};

FitResult fit_detailed(const DetectorConfig& config, const LoadedDataset& clean_train);
FittedDetector fit(const DetectorConfig& config, const LoadedDataset& clean_train);
FittedDetector fit(const DetectorConfig& config, const DatasetManifest& clean_train);

/// Threshold(s) for the given epsilon and method from an existing fit; PCA
/// and MCD are reused.
std::vector<double> thresholds_for(const FitResult& fit, double epsilon, ThresholdMethod method);

/// Thetas of every sample of a dataset (n x theta_dim).
Eigen::MatrixXd dataset_theta(const FittedDetector& detector, const LoadedDataset& data);

std::vector<DetectionVerdict> score_dataset(const FittedDetector& detector, const LoadedDataset& data);

DetectionReport evaluate(const FittedDetector& detector, const LoadedDataset& clean_test, const LoadedDataset& attacked);
DetectionReport evaluate(const FittedDetector& detector, const DatasetManifest& clean_test,
                         const DatasetManifest& attacked);

// "TSD1" model files; see docs/formats.md.
std::vector<std::uint8_t> encode_detector(const FittedDetector& detector);
FittedDetector decode_detector(std::span<const std::uint8_t> bytes, const std::string& source = "model");
void save(const FittedDetector& detector, const std::filesystem::path& path);
FittedDetector load(const std::filesystem::path& path);

}  // namespace tesda
