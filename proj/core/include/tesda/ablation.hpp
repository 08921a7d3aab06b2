#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "tesda/detector.hpp"

namespace tesda {

struct AblationData {
  LoadedDataset train;
  LoadedDataset clean_test;
  LoadedDataset attacked;
};

AblationData load_ablation_data(const DatasetManifest& train, const DatasetManifest& clean_test,
                                const DatasetManifest& attacked, unsigned threads = 1);

struct LayerAblationRow {
  std::string layer_id;
  DetectionReport report;
};

/// One single-layer detector per layer of `config.layers` (every training
/// layer when empty), each fitted and evaluated on its own.
std::vector<LayerAblationRow> ablate_layers(const DetectorConfig& config, const AblationData& data);

/// Fits once, then re-calibrates only the threshold for each epsilon.
/// Rows follow the order of `epsilons`.
std::vector<DetectionReport> ablate_thresholds(const DetectorConfig& config, const AblationData& data,
                                               const std::vector<double>& epsilons);

struct DctAblationRow {
  std::size_t ordinal = 0;
  CoefficientIndex index;
  DetectionReport report;
};

/// Refits with J = 1 at each zig-zag ordinal. Ordinals are laid out on the
/// smallest L x K grid among the monitored conv layers.
std::vector<DctAblationRow> ablate_dct(const DetectorConfig& config, const AblationData& data,
                                       const std::vector<std::size_t>& ordinals);

/// Zig-zag grid shared by the monitored conv layers (min L, min K).
std::pair<std::size_t, std::size_t> common_dct_grid(const DetectorConfig& config, const std::vector<LayerSpec>& layers);

}  // namespace tesda
