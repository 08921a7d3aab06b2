#include "tesda/detector.hpp"

#include <algorithm>
#include <cmath>

#include "tesda/error.hpp"
#include "tesda/parallel.hpp"
#include "tesda/rng.hpp"

namespace tesda {
namespace {

constexpr double kDegenerateVariance = 1e-12;

const FeatureTensor& find_tensor(std::span<const FeatureTensor> sample, const LayerSpec& spec) {
  for (const auto& t : sample) {
    if (t.layer_id != spec.id) continue;
    if (t.kind != spec.kind || t.shape != spec.shape) {
      throw ValidationError("layer '" + spec.id + "': got " + to_string(t.kind) + " " + to_string(t.shape) +
                            ", detector expects " + to_string(spec.kind) + " " + to_string(spec.shape));
    }
    return t;
  }
  throw ValidationError("sample is missing monitored layer '" + spec.id + "'");
}

Eigen::VectorXd as_vector(const FeatureTensor& t) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(t.data.size()));
  for (std::size_t i = 0; i < t.data.size(); ++i) v(static_cast<Eigen::Index>(i)) = t.data[i];
  return v;
}

// Rows of D_i for one tensor: J x M for conv layers, 1 x M for dense layers.
Eigen::MatrixXd layer_rows(const FeatureTensor& t, const DctSelection& dct) {
  if (t.kind == LayerKind::dense) return as_vector(t).transpose();
  return extract_dct_matrix(t, dct).values;
}

// T_i: each row projected through its own PCA.
PcaProjection project_layer(const LayerPipeline& layer, const Eigen::MatrixXd& rows) {
  PcaProjection out;
  out.layer_id = layer.spec.id;
  out.values.resize(rows.rows(), rows.cols());
  for (Eigen::Index j = 0; j < rows.rows(); ++j) {
    out.values.row(j) = layer.pcas[static_cast<std::size_t>(j)].project(rows.row(j).transpose()).transpose();
  }
  return out;
}

Eigen::VectorXd compute_theta(const std::vector<LayerPipeline>& layers, const DetectorConfig& config,
                              std::span<const FeatureTensor> sample) {
  std::vector<PcaProjection> projections;
  projections.reserve(layers.size());
  for (const auto& layer : layers) {
    projections.push_back(project_layer(layer, layer_rows(find_tensor(sample, layer.spec), config.dct)));
  }
  return select_theta_components(projections, config.pca_coefficient);
}

std::vector<ThetaComponent> component_layout(const std::vector<LayerPipeline>& layers) {
  std::vector<ThetaComponent> out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (std::size_t j = 0; j < layers[l].pcas.size(); ++j) out.push_back({l, j});
  }
  return out;
}

Eigen::MatrixXd columns(const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t c = 0; c < idx.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = m.col(static_cast<Eigen::Index>(idx[c]));
  return out;
}

Eigen::VectorXd entries(const Eigen::VectorXd& v, const std::vector<std::size_t>& idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t c = 0; c < idx.size(); ++c) out(static_cast<Eigen::Index>(c)) = v(static_cast<Eigen::Index>(idx[c]));
  return out;
}

double analytic_threshold(ThresholdMethod method, std::size_t k, std::size_t n, double epsilon) {
  switch (method) {
    case ThresholdMethod::chebyshev: return delta_chebyshev(k, n, epsilon).delta_sq;
    case ThresholdMethod::subexponential: return delta_subexponential(k, epsilon).delta_sq;
    case ThresholdMethod::chernoff: return delta_chernoff(k, epsilon).delta_sq;
    case ThresholdMethod::empirical: break;
  }
  throw ValidationError("analytic_threshold: empirical is not an analytic bound");
}

}  // namespace

const char* to_string(ThresholdMethod method) {
  switch (method) {
    case ThresholdMethod::empirical: return "empirical";
    case ThresholdMethod::chebyshev: return "chebyshev";
    case ThresholdMethod::subexponential: return "subexponential";
    case ThresholdMethod::chernoff: return "chernoff";
  }
  return "?";
}

ThresholdMethod threshold_method_from_string(const std::string& s) {
  if (s == "empirical") return ThresholdMethod::empirical;
  if (s == "chebyshev") return ThresholdMethod::chebyshev;
  if (s == "subexponential") return ThresholdMethod::subexponential;
  if (s == "chernoff") return ThresholdMethod::chernoff;
  throw ValidationError("unknown bound \"" + s + "\" (expected empirical, chebyshev, subexponential or chernoff)");
}

const char* to_string(CombineMode mode) { return mode == CombineMode::joint ? "joint" : "or"; }

CombineMode combine_mode_from_string(const std::string& s) {
  if (s == "joint") return CombineMode::joint;
  if (s == "or" || s == "per-coefficient-or") return CombineMode::per_coefficient_or;
  throw ValidationError("unknown mode \"" + s + "\" (expected joint or or)");
}

void DetectorConfig::validate() const {
  if (threshold == ThresholdMethod::empirical) {
    if (!(epsilon > 0.0 && epsilon <= 0.5)) {
      throw ValidationError("epsilon must lie in (0, 0.5] for empirical calibration, got " + std::to_string(epsilon));
    }
  } else if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw ValidationError("epsilon must lie in (0, 1), got " + std::to_string(epsilon));
  }
  if (mcd_starts == 0) throw ValidationError("mcd_starts must be >= 1");
  std::vector<std::string> sorted = layers;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ValidationError("detector config lists a layer twice");
  }
}

FittedDetector::FittedDetector(DetectorConfig config, std::vector<LayerPipeline> layers,
                               std::vector<ThetaComponent> components, std::vector<EnvelopeGroup> groups,
                               std::vector<std::size_t> dropped, Provenance provenance)
    : config_(std::move(config)),
      layers_(std::move(layers)),
      components_(std::move(components)),
      groups_(std::move(groups)),
      dropped_(std::move(dropped)),
      provenance_(provenance) {
  if (layers_.empty()) throw ValidationError("detector: no monitored layers");
  if (groups_.empty()) throw ValidationError("detector: no envelopes");
  if (components_ != component_layout(layers_)) throw ValidationError("detector: theta layout inconsistent with layers");
  for (const auto& layer : layers_) {
    const std::size_t expected_rows = layer.spec.kind == LayerKind::conv ? config_.dct.size() : 1;
    if (layer.pcas.size() != expected_rows) throw ValidationError("detector: layer '" + layer.spec.id + "' PCA count mismatch");
    for (const auto& pca : layer.pcas) {
      if (pca.dim() != layer.spec.shape.channels) throw ValidationError("detector: PCA width mismatch in '" + layer.spec.id + "'");
    }
  }
  for (const auto& g : groups_) {
    if (g.components.empty() || g.envelope.dim() != g.components.size()) {
      throw ValidationError("detector: envelope dimension does not match its components");
    }
    for (auto c : g.components) {
      if (c >= components_.size()) throw ValidationError("detector: envelope references unknown theta entry");
    }
  }
}

std::vector<LayerSpec> FittedDetector::layer_specs() const {
  std::vector<LayerSpec> out;
  for (const auto& l : layers_) out.push_back(l.spec);
  return out;
}

Eigen::VectorXd FittedDetector::theta(std::span<const FeatureTensor> sample) const {
  return compute_theta(layers_, config_, sample);
}

DetectionVerdict FittedDetector::classify(const Eigen::VectorXd& theta) const {
  if (theta.size() != static_cast<Eigen::Index>(components_.size())) {
    throw ValidationError("classify: theta has " + std::to_string(theta.size()) + " entries, expected " +
                          std::to_string(components_.size()));
  }
  DetectionVerdict v;
  v.theta = theta;
  v.d_sq.reserve(groups_.size());
  for (const auto& g : groups_) {
    const auto slice = entries(theta, g.components);
    v.d_sq.push_back(g.envelope.mahalanobis_sq(slice).d_sq);
    if (g.envelope.is_outlier(slice)) v.is_attack = true;
  }
  return v;
}

DetectionVerdict FittedDetector::score(std::span<const FeatureTensor> sample, std::string sample_id) const {
  auto v = classify(theta(sample));
  v.sample_id = std::move(sample_id);
  return v;
}

FittedDetector FittedDetector::with_thresholds(const std::vector<double>& delta_sq) const {
  if (delta_sq.size() != groups_.size()) throw ValidationError("with_thresholds: one threshold per envelope required");
  FittedDetector copy = *this;
  for (std::size_t g = 0; g < copy.groups_.size(); ++g) copy.groups_[g].envelope.set_delta_sq(delta_sq[g]);
  return copy;
}

void FittedDetector::check_layout(const std::vector<LayerSpec>& layers) const {
  std::vector<LayerSpec> matched;
  for (const auto& mine : layers_) {
    auto it = std::find_if(layers.begin(), layers.end(), [&](const LayerSpec& s) { return s.id == mine.spec.id; });
    if (it == layers.end()) throw ValidationError("dataset lacks monitored layer '" + mine.spec.id + "'");
    if (!(*it == mine.spec)) {
      throw ValidationError("layer '" + mine.spec.id + "' is " + to_string(it->kind) + " " + to_string(it->shape) +
                            " in the dataset but " + to_string(mine.spec.kind) + " " + to_string(mine.spec.shape) +
                            " in the detector");
    }
    matched.push_back(*it);
  }
  if (layout_hash(matched) != provenance_.layout_hash) {
    throw ValidationError("dataset layout hash does not match the detector's training layout");
  }
}

FitResult fit_detailed(const DetectorConfig& config, const LoadedDataset& train) {
  config.validate();
  if (train.split != Split::clean_train) {
    throw ValidationError(std::string("fit needs a clean-train dataset, got ") + to_string(train.split));
  }
  const std::size_t n = train.sample_count();

  // Monitored layers, in config order.
  std::vector<std::size_t> source;
  if (config.layers.empty()) {
    for (std::size_t l = 0; l < train.layers.size(); ++l) source.push_back(l);
  } else {
    for (const auto& id : config.layers) source.push_back(train.layer_index(id));
  }
  std::vector<LayerPipeline> layers;
  for (auto l : source) {
    const auto& spec = train.layers[l];
    if (spec.kind == LayerKind::conv) config.dct.check_bounds(spec.shape.height, spec.shape.width, spec.id);
    LayerPipeline p;
    p.spec = spec;
    layers.push_back(std::move(p));
  }

  std::size_t joint_dim = 0;
  for (const auto& l : layers) joint_dim += l.spec.kind == LayerKind::conv ? config.dct.size() : 1;
  if (n <= joint_dim + 1) {
    throw ValidationError("fit: " + std::to_string(n) + " training samples is too few for theta of dimension " +
                          std::to_string(joint_dim) + " (need n > k + 1)");
  }

  // D_i rows for every sample: rows[l][j] is n x M.
  std::vector<std::vector<Eigen::MatrixXd>> rows(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::size_t r = layers[l].spec.kind == LayerKind::conv ? config.dct.size() : 1;
    rows[l].assign(r, Eigen::MatrixXd(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(layers[l].spec.shape.channels)));
  }
  parallel_for(n, config.threads, [&](std::size_t i) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto d = layer_rows(find_tensor(train.samples[i], layers[l].spec), config.dct);
      for (std::size_t j = 0; j < rows[l].size(); ++j) rows[l][j].row(static_cast<Eigen::Index>(i)) = d.row(static_cast<Eigen::Index>(j));
    }
  });

  std::vector<std::pair<std::size_t, std::size_t>> pca_jobs;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].pcas.resize(rows[l].size());
    for (std::size_t j = 0; j < rows[l].size(); ++j) pca_jobs.emplace_back(l, j);
  }
  parallel_for(pca_jobs.size(), config.threads, [&](std::size_t job) {
    const auto [l, j] = pca_jobs[job];
    layers[l].pcas[j] = fit_pca(rows[l][j], layers[l].spec.id, j);
  });
  rows.clear();

  const auto components = component_layout(layers);
  Eigen::MatrixXd theta(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(components.size()));
  parallel_for(n, config.threads, [&](std::size_t i) {
    theta.row(static_cast<Eigen::Index>(i)) = compute_theta(layers, config, train.samples[i]).transpose();
  });

  std::vector<std::string> warnings;
  std::vector<std::size_t> dropped;
  std::vector<bool> keep(components.size(), true);
  for (std::size_t c = 0; c < components.size(); ++c) {
    const auto col = theta.col(static_cast<Eigen::Index>(c));
    const double var = (col.array() - col.mean()).square().sum() / static_cast<double>(n - 1);
    if (var < kDegenerateVariance) {
      keep[c] = false;
      dropped.push_back(c);
      warnings.push_back("dropping theta entry " + std::to_string(c) + " (layer '" +
                         layers[components[c].layer].spec.id + "', DCT row " + std::to_string(components[c].row) +
                         "): training variance " + std::to_string(var) + " < 1e-12");
    }
  }

  std::vector<std::pair<std::size_t, std::vector<std::size_t>>> group_members;
  if (config.mode == CombineMode::joint) {
    std::vector<std::size_t> all;
    for (std::size_t c = 0; c < components.size(); ++c) {
      if (keep[c]) all.push_back(c);
    }
    group_members.emplace_back(0, std::move(all));
  } else {
    for (std::size_t j = 0; j < config.dct.size(); ++j) {
      std::vector<std::size_t> members;
      for (std::size_t c = 0; c < components.size(); ++c) {
        const auto& comp = components[c];
        const bool dense = layers[comp.layer].spec.kind == LayerKind::dense;
        if (keep[c] && (comp.row == j || dense)) members.push_back(c);
      }
      group_members.emplace_back(j, std::move(members));
    }
  }

  std::vector<EnvelopeGroup> groups;
  std::vector<McdDiagnostics> diagnostics;
  for (std::size_t g = 0; g < group_members.size(); ++g) {
    auto& [row, members] = group_members[g];
    if (members.empty()) {
      throw ValidationError("fit: every theta entry of envelope " + std::to_string(g) +
                            " is degenerate (constant activations)");
    }
    const Eigen::MatrixXd x = columns(theta, members);
    McdOptions mcd;
    mcd.n_starts = config.mcd_starts;
    mcd.seed = splitmix64(config.seed + g);
    mcd.threads = config.threads;
    mcd.reweight = config.mcd_reweight;
    auto fitted = fit_mcd(x, mcd);
    const double delta_sq = config.threshold == ThresholdMethod::empirical
                                ? calibrate_delta_empirical(fitted.model, x, config.epsilon)
                                : analytic_threshold(config.threshold, members.size(), n, config.epsilon);
    fitted.model.set_delta_sq(delta_sq);
    groups.push_back({row, std::move(members), std::move(fitted.model)});
    diagnostics.push_back(std::move(fitted.diagnostics));
  }

  Provenance prov;
  prov.seed = config.seed;
  prov.n_train = n;
  std::vector<LayerSpec> specs;
  for (const auto& l : layers) specs.push_back(l.spec);
  prov.layout_hash = layout_hash(specs);

  return FitResult{FittedDetector(config, std::move(layers), components, std::move(groups), std::move(dropped), prov),
                   std::move(theta), std::move(diagnostics), std::move(warnings)};
}

FittedDetector fit(const DetectorConfig& config, const LoadedDataset& clean_train) {
  return fit_detailed(config, clean_train).detector;
}

FittedDetector fit(const DetectorConfig& config, const DatasetManifest& clean_train) {
  return fit(config, load_dataset(clean_train, config.threads));
}

std::vector<double> thresholds_for(const FitResult& fit, double epsilon, ThresholdMethod method) {
  const auto& det = fit.detector;
  std::vector<double> out;
  for (const auto& g : det.groups()) {
    if (method == ThresholdMethod::empirical) {
      out.push_back(calibrate_delta_empirical(g.envelope, columns(fit.training_theta, g.components), epsilon));
    } else {
      out.push_back(analytic_threshold(method, g.components.size(), det.provenance().n_train, epsilon));
    }
  }
  return out;
}

Eigen::MatrixXd dataset_theta(const FittedDetector& detector, const LoadedDataset& data) {
  detector.check_layout(data.layers);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(data.sample_count()), static_cast<Eigen::Index>(detector.theta_dim()));
  parallel_for(data.sample_count(), detector.config().threads, [&](std::size_t i) {
    out.row(static_cast<Eigen::Index>(i)) = detector.theta(data.samples[i]).transpose();
  });
  return out;
}

std::vector<DetectionVerdict> score_dataset(const FittedDetector& detector, const LoadedDataset& data) {
  detector.check_layout(data.layers);
  std::vector<DetectionVerdict> out(data.sample_count());
  parallel_for(data.sample_count(), detector.config().threads, [&](std::size_t i) {
    out[i] = detector.score(data.samples[i], data.sample_ids.empty() ? std::string{} : data.sample_ids[i]);
  });
  return out;
}

DetectionReport evaluate(const FittedDetector& detector, const LoadedDataset& clean_test, const LoadedDataset& attacked) {
  if (clean_test.sample_count() == 0) throw ValidationError("evaluate: clean manifest is empty");
  if (attacked.sample_count() == 0) throw ValidationError("evaluate: attacked manifest is empty");
  ConfusionCounts counts;
  for (const auto& v : score_dataset(detector, attacked)) (v.is_attack ? counts.true_positive : counts.false_negative)++;
  for (const auto& v : score_dataset(detector, clean_test)) (v.is_attack ? counts.false_positive : counts.true_negative)++;
  return compute_metrics(counts, detector.config().epsilon);
}

DetectionReport evaluate(const FittedDetector& detector, const DatasetManifest& clean_test,
                         const DatasetManifest& attacked) {
  const unsigned threads = detector.config().threads;
  return evaluate(detector, load_dataset(clean_test, threads), load_dataset(attacked, threads));
}

}  // namespace tesda
