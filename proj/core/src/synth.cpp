#include "tesda/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <set>

#include "tesda/dct.hpp"
#include "tesda/error.hpp"
#include "tesda/parallel.hpp"
#include "tesda/rng.hpp"
#include "tesda/special.hpp"

namespace tesda {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// Stream tags: structure streams use the layer index, sample streams the
// split tag in the high bits.
constexpr std::uint64_t kAttackStream = 1ull << 32;
std::uint64_t sample_stream(int split, std::size_t i) { return (static_cast<std::uint64_t>(split + 1) << 40) | i; }

Eigen::MatrixXd standard_normal(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

Eigen::MatrixXd ar1_correlation(std::size_t n, double rho) {
  Eigen::MatrixXd r(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    for (Eigen::Index j = 0; j < r.cols(); ++j) r(i, j) = std::pow(rho, static_cast<double>(std::abs(i - j)));
  }
  return r;
}

Eigen::MatrixXd random_orthogonal(std::size_t m, std::mt19937_64& rng) {
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(standard_normal(m, m, rng));
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR();
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

std::string file_stem(const std::string& id) {
  std::string out = id;
  for (auto& c : out) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  }
  return out;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (layers.empty()) throw ValidationError("synthetic spec has no layers");
  std::set<std::string> ids;
  for (const auto& l : layers) {
    if (!ids.insert(l.id).second) throw ValidationError("synthetic spec repeats layer '" + l.id + "'");
    if (l.shape.element_count() == 0) throw ValidationError("synthetic layer '" + l.id + "' has a zero dim");
    if (l.kind == LayerKind::dense && l.shape.map_size() != 1) {
      throw ValidationError("dense synthetic layer '" + l.id + "' must have a 1x1 map");
    }
  }
  if (n_train < 2) throw ValidationError("synthetic spec needs n_train >= 2");
  if (!(rho > -1.0 && rho < 1.0)) throw ValidationError("rho must lie in (-1, 1)");

  auto find = [&](const std::string& id) -> const SyntheticLayer& {
    for (const auto& l : layers) {
      if (l.id == id) return l;
    }
    throw ValidationError("attack references unknown layer '" + id + "'");
  };
  auto check_ordinal = [](const SyntheticLayer& l, std::size_t ordinal) {
    if (l.kind == LayerKind::conv && ordinal >= l.shape.map_size()) {
      throw ValidationError("DCT ordinal " + std::to_string(ordinal) + " exceeds the map of layer '" + l.id + "'");
    }
  };
  std::visit(overloaded{
                 [&](const MeanShift& a) {
                   if (!(a.magnitude >= 0.0)) throw ValidationError("shift magnitude must be >= 0");
                   for (const auto& l : layers) {
                     if (!a.layers.empty() && std::find(a.layers.begin(), a.layers.end(), l.id) == a.layers.end()) continue;
                     check_ordinal(l, a.dct_ordinal);
                     if (a.direction == ShiftDirection::explicit_vector &&
                         a.vector.size() != static_cast<Eigen::Index>(l.shape.channels)) {
                       throw ValidationError("explicit shift vector has " + std::to_string(a.vector.size()) +
                                             " entries, layer '" + l.id + "' has " + std::to_string(l.shape.channels) +
                                             " channels");
                     }
                   }
                   for (const auto& id : a.layers) find(id);
                   if (a.direction == ShiftDirection::explicit_vector && !(a.vector.norm() > 0.0)) {
                     throw ValidationError("explicit shift vector must be non-zero");
                   }
                 },
                 [&](const VarianceScale& a) {
                   find(a.layer);
                   if (!(a.factor >= 0.0)) throw ValidationError("variance scale factor must be >= 0");
                 },
                 [&](const FrequencyInject& a) {
                   const auto& l = find(a.layer);
                   if (l.kind != LayerKind::conv) throw ValidationError("frequency injection needs a conv layer");
                   check_ordinal(l, a.ordinal);
                   if (!(a.amplitude >= 0.0)) throw ValidationError("injection amplitude must be >= 0");
                 },
             },
             attack);
}

SyntheticModel::SyntheticModel(SyntheticSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
    const auto& shape = spec_.layers[l].shape;
    auto rng = make_stream(spec_.seed, l);
    const std::size_t m = shape.channels;

    LayerModel lm;
    Eigen::VectorXd s(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) {
      s(static_cast<Eigen::Index>(i)) = m == 1 ? 1.0 : std::exp(-2.0 * static_cast<double>(i) / static_cast<double>(m - 1));
    }
    lm.mixing = random_orthogonal(m, rng) * s.asDiagonal();
    std::uniform_real_distribution<double> offset(0.5, 1.5);
    lm.offsets.resize(static_cast<Eigen::Index>(m));
    for (Eigen::Index i = 0; i < lm.offsets.size(); ++i) lm.offsets(i) = offset(rng);

    const auto r_rows = ar1_correlation(shape.height, spec_.rho);
    const auto r_cols = ar1_correlation(shape.width, spec_.rho);
    lm.chol_rows = r_rows.llt().matrixL();
    lm.chol_cols = r_cols.llt().matrixL();
    const auto c_rows = dct_basis(shape.height);
    const auto c_cols = dct_basis(shape.width);
    lm.bin_var_rows = (c_rows * r_rows * c_rows.transpose()).diagonal();
    lm.bin_var_cols = (c_cols * r_cols * c_cols.transpose()).diagonal();
    models_.push_back(std::move(lm));
  }

  shift_directions_.resize(spec_.layers.size());
  auto rng = make_stream(spec_.seed, kAttackStream);
  if (const auto* a = std::get_if<MeanShift>(&spec_.attack)) {
    for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
      const auto& id = spec_.layers[l].id;
      if (!a->layers.empty() && std::find(a->layers.begin(), a->layers.end(), id) == a->layers.end()) continue;
      switch (a->direction) {
        case ShiftDirection::pca_lowest: shift_directions_[l] = lowest_direction(l); break;
        case ShiftDirection::random: {
          Eigen::VectorXd v = standard_normal(spec_.layers[l].shape.channels, 1, rng);
          shift_directions_[l] = v.normalized();
          break;
        }
        case ShiftDirection::explicit_vector: shift_directions_[l] = a->vector.normalized(); break;
      }
    }
  } else if (const auto* f = std::get_if<FrequencyInject>(&spec_.attack)) {
    const auto l = layer_index(f->layer);
    shift_directions_[l] = lowest_direction(l);
  }
}

std::size_t SyntheticModel::layer_index(const std::string& id) const {
  for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
    if (spec_.layers[l].id == id) return l;
  }
  throw ValidationError("unknown synthetic layer '" + id + "'");
}

Eigen::VectorXd SyntheticModel::lowest_direction(std::size_t layer) const {
  const auto& b = models_.at(layer).mixing;
  return b.col(b.cols() - 1).normalized();
}

Eigen::MatrixXd SyntheticModel::bin_covariance(std::size_t layer, std::size_t x, std::size_t y) const {
  const auto& lm = models_.at(layer);
  const double scale = lm.bin_var_rows(static_cast<Eigen::Index>(x)) * lm.bin_var_cols(static_cast<Eigen::Index>(y));
  return scale * lm.mixing * lm.mixing.transpose();
}

std::vector<FeatureTensor> SyntheticModel::clean_sample(std::mt19937_64& rng) const {
  std::vector<FeatureTensor> out;
  out.reserve(spec_.layers.size());
  for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
    const auto& layer = spec_.layers[l];
    const auto& lm = models_[l];
    const std::size_t m = layer.shape.channels;
    const std::size_t rows = layer.shape.height;
    const std::size_t cols = layer.shape.width;

    FeatureTensor t;
    t.layer_id = layer.id;
    t.kind = layer.kind;
    t.shape = layer.shape;
    t.data.resize(layer.shape.element_count());

    // fields.row(r) holds the flattened (row-major) AR(1) field Z_r.
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> fields(static_cast<Eigen::Index>(m),
                                                                                  static_cast<Eigen::Index>(rows * cols));
    for (std::size_t r = 0; r < m; ++r) {
      const Eigen::MatrixXd z = lm.chol_rows * standard_normal(rows, cols, rng) * lm.chol_cols.transpose();
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
          fields(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i * cols + j)) =
              z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
      }
    }
    const Eigen::MatrixXd mixed = lm.mixing * fields;
    for (std::size_t c = 0; c < m; ++c) {
      for (std::size_t p = 0; p < rows * cols; ++p) {
        t.data[c * rows * cols + p] = static_cast<float>(lm.offsets(static_cast<Eigen::Index>(c)) +
                                                         mixed(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(p)));
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

void SyntheticModel::shift(FeatureTensor& t, std::size_t layer, const Eigen::VectorXd& direction, double magnitude,
                           std::size_t ordinal) const {
  const auto& shape = spec_.layers[layer].shape;
  const auto idx = t.kind == LayerKind::conv ? zigzag_index(ordinal, shape.height, shape.width) : CoefficientIndex{};
  const double sigma = std::sqrt(direction.dot(bin_covariance(layer, idx.x, idx.y) * direction));
  const double delta = magnitude * sigma;

  const Eigen::MatrixXd image = dct_basis(shape.height).row(static_cast<Eigen::Index>(idx.x)).transpose() *
                                dct_basis(shape.width).row(static_cast<Eigen::Index>(idx.y));
  const std::size_t map = shape.map_size();
  for (std::size_t c = 0; c < shape.channels; ++c) {
    const double w = delta * direction(static_cast<Eigen::Index>(c));
    for (std::size_t i = 0; i < shape.height; ++i) {
      for (std::size_t j = 0; j < shape.width; ++j) {
        t.data[c * map + i * shape.width + j] +=
            static_cast<float>(w * image(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      }
    }
  }
}

void SyntheticModel::scale(FeatureTensor& t, std::size_t layer, double factor) const {
  const auto& offsets = models_[layer].offsets;
  const std::size_t map = t.shape.map_size();
  for (std::size_t c = 0; c < t.shape.channels; ++c) {
    const double mu = offsets(static_cast<Eigen::Index>(c));
    for (std::size_t p = 0; p < map; ++p) {
      auto& v = t.data[c * map + p];
      v = static_cast<float>(mu + factor * (static_cast<double>(v) - mu));
    }
  }
}

void SyntheticModel::apply_attack(std::vector<FeatureTensor>& sample) const {
  if (sample.size() != spec_.layers.size()) throw ValidationError("apply_attack: sample does not match the spec");
  std::visit(overloaded{
                 [&](const MeanShift& a) {
                   for (std::size_t l = 0; l < sample.size(); ++l) {
                     if (shift_directions_[l].size() > 0) shift(sample[l], l, shift_directions_[l], a.magnitude, a.dct_ordinal);
                   }
                 },
                 [&](const VarianceScale& a) {
                   const auto l = layer_index(a.layer);
                   scale(sample[l], l, a.factor);
                 },
                 [&](const FrequencyInject& a) {
                   const auto l = layer_index(a.layer);
                   shift(sample[l], l, shift_directions_[l], a.amplitude, a.ordinal);
                 },
             },
             spec_.attack);
}

AblationData generate_in_memory(const SyntheticSpec& spec, unsigned threads) {
  const SyntheticModel model(spec);
  std::vector<LayerSpec> layers;
  for (const auto& l : spec.layers) layers.push_back({l.id, l.kind, l.shape});

  auto make_split = [&](int tag, Split split, std::size_t n, const char* prefix, bool attacked) {
    LoadedDataset d;
    d.layers = layers;
    d.split = split;
    d.samples.resize(n);
    d.sample_ids.resize(n);
    parallel_for(n, threads, [&](std::size_t i) {
      auto rng = make_stream(spec.seed, sample_stream(tag, i));
      d.samples[i] = model.clean_sample(rng);
      if (attacked) model.apply_attack(d.samples[i]);
      char id[32];
      std::snprintf(id, sizeof id, "%s-%06zu", prefix, i);
      d.sample_ids[i] = id;
    });
    return d;
  };
  return {make_split(0, Split::clean_train, spec.n_train, "train", false),
          make_split(1, Split::clean_test, spec.n_test, "test", false),
          make_split(2, Split::attacked, spec.n_attacked, "attacked", true)};
}

GeneratedManifests generate(const SyntheticSpec& spec, const std::filesystem::path& out_dir, unsigned threads) {
  const auto data = generate_in_memory(spec, threads);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  auto write_split = [&](const LoadedDataset& d, const std::string& name) {
    const auto dir = out_dir / name;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    DatasetManifest m;
    m.layers = d.layers;
    m.split = d.split;
    m.base_dir = out_dir;
    m.samples.resize(d.sample_count());
    for (std::size_t i = 0; i < d.sample_count(); ++i) {
      m.samples[i].id = d.sample_ids[i];
      for (const auto& layer : d.layers) {
        m.samples[i].files.push_back(std::filesystem::path(name) / (d.sample_ids[i] + "_" + file_stem(layer.id) + ".tft"));
      }
    }
    parallel_for(d.sample_count(), threads, [&](std::size_t i) {
      for (std::size_t l = 0; l < d.layers.size(); ++l) write_tensor(d.samples[i][l], out_dir / m.samples[i].files[l]);
    });
    const auto path = out_dir / (name + ".json");
    save_manifest(m, path);
    return path;
  };
  return {write_split(data.train, "train"), write_split(data.clean_test, "test"),
          write_split(data.attacked, "attacked")};
}

TailEstimate chi2_tail_mc(std::size_t k, double delta_sq, std::size_t draws, std::uint64_t seed) {
  if (k == 0) throw ValidationError("chi2_tail_mc: k must be >= 1");
  if (draws < 100000) throw ValidationError("chi2_tail_mc: need at least 1e5 draws");
  if (std::isnan(delta_sq)) throw ValidationError("chi2_tail_mc: threshold is NaN");
  auto rng = make_stream(seed, k);
  std::normal_distribution<double> normal;
  std::size_t hits = 0;
  for (std::size_t d = 0; d < draws; ++d) {
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double z = normal(rng);
      sum += z * z;
    }
    hits += sum >= delta_sq ? 1 : 0;
  }
  const double n = static_cast<double>(draws);
  const double p = static_cast<double>(hits) / n;
  return {p, std::sqrt(p * (1.0 - p) / n)};
}

double chi2_quantile(std::size_t k, double p) {
  if (k == 0) throw ValidationError("chi2_quantile: k must be >= 1");
  return special::chi2_quantile(static_cast<double>(k), p);
}

}  // namespace tesda
