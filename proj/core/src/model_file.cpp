#include <cstring>
#include <limits>

#include "binary_io.hpp"
#include "tesda/detector.hpp"
#include "tesda/error.hpp"

namespace tesda {
namespace {

using detail::ByteReader;
using detail::ByteWriter;

constexpr char kMagic[4] = {'T', 'S', 'D', '1'};
// Guards against absurd counts in corrupted files before any allocation.
constexpr std::uint64_t kMaxCount = 1u << 24;

void put_size(ByteWriter& w, std::size_t v) { w.put_u64(static_cast<std::uint64_t>(v)); }

void put_vector(ByteWriter& w, const Eigen::VectorXd& v) {
  put_size(w, static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) w.put_f64(v(i));
}

void put_matrix(ByteWriter& w, const Eigen::MatrixXd& m) {
  put_size(w, static_cast<std::size_t>(m.rows()));
  put_size(w, static_cast<std::size_t>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) w.put_f64(m(r, c));
  }
}

std::size_t get_size(ByteReader& r, const char* field) {
  const auto v = r.get_u64();
  if (v > kMaxCount) {
    throw FormatError(r.what() + ": implausible " + field + " " + std::to_string(v) + " at byte " +
                      std::to_string(r.position() - 8));
  }
  return static_cast<std::size_t>(v);
}

Eigen::VectorXd get_vector(ByteReader& r) {
  const auto n = get_size(r, "vector length");
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) v(static_cast<Eigen::Index>(i)) = r.get_f64();
  return v;
}

Eigen::MatrixXd get_matrix(ByteReader& r) {
  const auto rows = get_size(r, "matrix rows");
  const auto cols = get_size(r, "matrix cols");
  if (rows * cols > kMaxCount) throw FormatError(r.what() + ": implausible matrix size");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t row = 0; row < rows; ++row) m(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c)) = r.get_f64();
  }
  return m;
}

template <typename Enum>
Enum get_enum(ByteReader& r, std::uint8_t max, const char* field) {
  const auto v = r.get_u8();
  if (v > max) throw FormatError(r.what() + ": bad " + field + " tag " + std::to_string(v));
  return static_cast<Enum>(v);
}

void put_config(ByteWriter& w, const DetectorConfig& c) {
  put_size(w, c.layers.size());
  for (const auto& id : c.layers) w.put_string(id);
  put_size(w, c.dct.size());
  for (const auto& idx : c.dct.coefficients()) {
    put_size(w, idx.x);
    put_size(w, idx.y);
  }
  w.put_u8(c.pca_coefficient.index ? 1 : 0);
  put_size(w, c.pca_coefficient.index.value_or(0));
  w.put_f64(c.epsilon);
  w.put_u8(static_cast<std::uint8_t>(c.threshold));
  w.put_u8(static_cast<std::uint8_t>(c.mode));
  w.put_u64(c.seed);
  put_size(w, c.mcd_starts);
  w.put_u8(c.mcd_reweight ? 1 : 0);
}

DetectorConfig get_config(ByteReader& r) {
  DetectorConfig c;
  c.layers.resize(get_size(r, "layer count"));
  for (auto& id : c.layers) id = r.get_string();
  std::vector<CoefficientIndex> dct(get_size(r, "DCT selection size"));
  for (auto& idx : dct) {
    idx.x = get_size(r, "DCT index");
    idx.y = get_size(r, "DCT index");
  }
  try {
    c.dct = DctSelection(std::move(dct));
  } catch (const ValidationError& e) {
    throw FormatError(r.what() + ": " + e.what());
  }
  const bool has_index = r.get_u8() != 0;
  const auto index = get_size(r, "PCA coefficient");
  if (has_index) c.pca_coefficient = CoefficientChoice::one_based(index);
  c.epsilon = r.get_f64();
  c.threshold = get_enum<ThresholdMethod>(r, 3, "threshold");
  c.mode = get_enum<CombineMode>(r, 1, "mode");
  c.seed = r.get_u64();
  c.mcd_starts = get_size(r, "MCD start count");
  c.mcd_reweight = r.get_u8() != 0;
  return c;
}

}  // namespace

std::vector<std::uint8_t> encode_detector(const FittedDetector& det) {
  ByteWriter w;
  w.put_raw(std::string_view(kMagic, 4));
  put_config(w, det.config());

  put_size(w, det.layers().size());
  for (const auto& layer : det.layers()) {
    w.put_string(layer.spec.id);
    w.put_u8(static_cast<std::uint8_t>(layer.spec.kind));
    put_size(w, layer.spec.shape.channels);
    put_size(w, layer.spec.shape.height);
    put_size(w, layer.spec.shape.width);
    put_size(w, layer.pcas.size());
    for (const auto& pca : layer.pcas) {
      put_size(w, pca.row_index);
      put_vector(w, pca.mean);
      put_matrix(w, pca.basis);
      put_vector(w, pca.energies);
    }
  }

  put_size(w, det.groups().size());
  for (const auto& g : det.groups()) {
    put_size(w, g.dct_row);
    put_size(w, g.components.size());
    for (auto c : g.components) put_size(w, c);
    put_vector(w, g.envelope.mu());
    put_matrix(w, g.envelope.sigma());
    put_size(w, g.envelope.h());
    put_size(w, g.envelope.n());
    const auto delta = g.envelope.delta_sq();
    w.put_u8(delta ? 1 : 0);
    w.put_f64(delta.value_or(0.0));
  }

  put_size(w, det.dropped().size());
  for (auto d : det.dropped()) put_size(w, d);

  const auto& p = det.provenance();
  w.put_u32(p.layout_hash);
  w.put_u64(p.seed);
  w.put_i64(p.fit_timestamp);
  put_size(w, p.n_train);

  const auto crc = detail::crc32(w.bytes());
  w.put_u32(crc);
  return w.take();
}

FittedDetector decode_detector(std::span<const std::uint8_t> bytes, const std::string& source) {
  if (bytes.size() < 8) throw FormatError(source + ": too short to be a detector model");
  if (std::memcmp(bytes.data(), kMagic, 3) == 0 && bytes[3] != static_cast<std::uint8_t>(kMagic[3])) {
    throw VersionError(source + ": model format version '" + std::string(1, static_cast<char>(bytes[3])) +
                       "' is not supported by this build (expects TSD1); refit the detector with this version");
  }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError(source + ": not a detector model (bad magic)");

  const auto body = bytes.first(bytes.size() - 4);
  ByteReader tail(bytes.last(4), source);
  if (tail.get_u32() != detail::crc32(body)) throw FormatError(source + ": checksum mismatch, file is corrupted");

  ByteReader r(body, source);
  r.get_bytes(4);
  auto config = get_config(r);

  std::vector<LayerPipeline> layers(get_size(r, "layer count"));
  for (auto& layer : layers) {
    layer.spec.id = r.get_string();
    layer.spec.kind = get_enum<LayerKind>(r, 1, "layer kind");
    layer.spec.shape.channels = get_size(r, "channels");
    layer.spec.shape.height = get_size(r, "height");
    layer.spec.shape.width = get_size(r, "width");
    layer.pcas.resize(get_size(r, "PCA count"));
    for (auto& pca : layer.pcas) {
      pca.layer_id = layer.spec.id;
      pca.row_index = get_size(r, "PCA row");
      pca.mean = get_vector(r);
      pca.basis = get_matrix(r);
      pca.energies = get_vector(r);
      const auto m = pca.mean.size();
      if (pca.basis.rows() != m || pca.basis.cols() != m || pca.energies.size() != m) {
        throw FormatError(source + ": PCA dimensions disagree in layer '" + layer.spec.id + "'");
      }
    }
  }

  std::vector<EnvelopeGroup> groups(get_size(r, "envelope count"));
  for (auto& g : groups) {
    g.dct_row = get_size(r, "DCT row");
    g.components.resize(get_size(r, "component count"));
    for (auto& c : g.components) c = get_size(r, "component index");
    auto mu = get_vector(r);
    auto sigma = get_matrix(r);
    const auto h = get_size(r, "h");
    const auto n = get_size(r, "n");
    const bool has_delta = r.get_u8() != 0;
    const double delta = r.get_f64();
    if (sigma.rows() != mu.size() || sigma.cols() != mu.size()) {
      throw FormatError(source + ": envelope covariance does not match its mean");
    }
    try {
      g.envelope = EnvelopeModel(std::move(mu), std::move(sigma), h, n);
      if (has_delta) g.envelope.set_delta_sq(delta);
    } catch (const ValidationError& e) {
      throw FormatError(source + ": " + e.what());
    }
  }

  std::vector<std::size_t> dropped(get_size(r, "dropped count"));
  for (auto& d : dropped) d = get_size(r, "dropped index");

  Provenance p;
  p.layout_hash = r.get_u32();
  p.seed = r.get_u64();
  p.fit_timestamp = r.get_i64();
  p.n_train = get_size(r, "n_train");
  if (r.remaining() != 0) throw FormatError(source + ": " + std::to_string(r.remaining()) + " trailing bytes");

  std::vector<ThetaComponent> components;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (std::size_t j = 0; j < layers[l].pcas.size(); ++j) components.push_back({l, j});
  }
  try {
    return FittedDetector(std::move(config), std::move(layers), std::move(components), std::move(groups),
                          std::move(dropped), p);
  } catch (const ValidationError& e) {
    throw FormatError(source + ": " + e.what());
  }
}

void save(const FittedDetector& detector, const std::filesystem::path& path) {
  detail::write_file(path, encode_detector(detector));
}

FittedDetector load(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  return decode_detector(bytes, path.string());
}

}  // namespace tesda
