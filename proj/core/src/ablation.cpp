#include "tesda/ablation.hpp"

#include <algorithm>
#include <limits>

#include "tesda/error.hpp"
#include "tesda/parallel.hpp"

namespace tesda {
namespace {

std::vector<std::string> monitored_ids(const DetectorConfig& config, const std::vector<LayerSpec>& layers) {
  if (!config.layers.empty()) return config.layers;
  std::vector<std::string> ids;
  for (const auto& l : layers) ids.push_back(l.id);
  return ids;
}

// d^2 of every sample against every envelope: out[i][g].
std::vector<std::vector<double>> all_distances(const FittedDetector& det, const Eigen::MatrixXd& theta) {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(theta.rows()));
  parallel_for(out.size(), det.config().threads, [&](std::size_t i) {
    out[i] = det.classify(theta.row(static_cast<Eigen::Index>(i)).transpose()).d_sq;
  });
  return out;
}

std::size_t count_flagged(const std::vector<std::vector<double>>& d_sq, const std::vector<double>& delta_sq) {
  std::size_t flagged = 0;
  for (const auto& row : d_sq) {
    bool hit = false;
    for (std::size_t g = 0; g < row.size(); ++g) hit = hit || row[g] > delta_sq[g];
    flagged += hit ? 1 : 0;
  }
  return flagged;
}

}  // namespace

AblationData load_ablation_data(const DatasetManifest& train, const DatasetManifest& clean_test,
                                const DatasetManifest& attacked, unsigned threads) {
  return {load_dataset(train, threads), load_dataset(clean_test, threads), load_dataset(attacked, threads)};
}

std::vector<LayerAblationRow> ablate_layers(const DetectorConfig& config, const AblationData& data) {
  std::vector<LayerAblationRow> rows;
  for (const auto& id : monitored_ids(config, data.train.layers)) {
    DetectorConfig single = config;
    single.layers = {id};
    const auto det = fit(single, data.train);
    rows.push_back({id, evaluate(det, data.clean_test, data.attacked)});
  }
  return rows;
}

std::vector<DetectionReport> ablate_thresholds(const DetectorConfig& config, const AblationData& data,
                                               const std::vector<double>& epsilons) {
  const auto fitted = fit_detailed(config, data.train);
  const auto& det = fitted.detector;
  const auto clean = all_distances(det, dataset_theta(det, data.clean_test));
  const auto attacked = all_distances(det, dataset_theta(det, data.attacked));

  std::vector<DetectionReport> out;
  for (double eps : epsilons) {
    DetectorConfig probe = config;
    probe.epsilon = eps;
    probe.validate();
    const auto delta_sq = thresholds_for(fitted, eps, config.threshold);
    ConfusionCounts counts;
    counts.true_positive = count_flagged(attacked, delta_sq);
    counts.false_negative = attacked.size() - counts.true_positive;
    counts.false_positive = count_flagged(clean, delta_sq);
    counts.true_negative = clean.size() - counts.false_positive;
    out.push_back(compute_metrics(counts, eps));
  }
  return out;
}

std::pair<std::size_t, std::size_t> common_dct_grid(const DetectorConfig& config, const std::vector<LayerSpec>& layers) {
  std::size_t rows = std::numeric_limits<std::size_t>::max();
  std::size_t cols = rows;
  for (const auto& id : monitored_ids(config, layers)) {
    auto it = std::find_if(layers.begin(), layers.end(), [&](const LayerSpec& s) { return s.id == id; });
    if (it == layers.end()) throw ValidationError("unknown layer '" + id + "'");
    if (it->kind != LayerKind::conv) continue;
    rows = std::min(rows, it->shape.height);
    cols = std::min(cols, it->shape.width);
  }
  if (rows == std::numeric_limits<std::size_t>::max()) {
    throw ValidationError("DCT ablation needs at least one monitored conv layer");
  }
  return {rows, cols};
}

std::vector<DctAblationRow> ablate_dct(const DetectorConfig& config, const AblationData& data,
                                       const std::vector<std::size_t>& ordinals) {
  const auto [rows, cols] = common_dct_grid(config, data.train.layers);
  for (auto ord : ordinals) {
    if (ord >= rows * cols) {
      throw ValidationError("DCT ordinal " + std::to_string(ord) + " exceeds the " + std::to_string(rows) + "x" +
                            std::to_string(cols) + " map of the smallest monitored layer");
    }
  }
  std::vector<DctAblationRow> out;
  for (auto ord : ordinals) {
    DetectorConfig single = config;
    single.dct = DctSelection::zigzag(ord, 1, rows, cols);
    const auto det = fit(single, data.train);
    out.push_back({ord, single.dct.coefficients().front(), evaluate(det, data.clean_test, data.attacked)});
  }
  return out;
}

}  // namespace tesda
