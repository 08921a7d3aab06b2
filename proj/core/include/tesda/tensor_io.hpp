#pragma once

// "TFT1" feature-tensor files: one layer's activations for one sample.
//
// Layout (all integers little-endian):
//   "TFT1"                      4 bytes magic
//   kind                        u8   (0 = conv, 1 = dense)
//   name length, layer id       u32 + UTF-8 bytes
//   ndim                        u32  (3 for conv: M, L, K; 1 for dense: M)
//   dims[ndim]                  u32 each
//   payload                     f32 x prod(dims), row-major, channel-major

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace tesda {

enum class LayerKind : std::uint8_t { conv = 0, dense = 1 };

const char* to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& s);

/// Channel count M and per-channel map size L x K. Dense layers use L = K = 1.
struct TensorShape {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t map_size() const { return height * width; }
  std::size_t element_count() const { return channels * height * width; }
  friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

std::string to_string(const TensorShape& shape);

struct FeatureTensor {
  std::string layer_id;
  LayerKind kind = LayerKind::conv;
  TensorShape shape;
  std::vector<float> data;

  /// Row-major view of channel `m` (height x width values).
  std::span<const float> channel(std::size_t m) const {
    return std::span<const float>(data).subspan(m * shape.map_size(), shape.map_size());
  }
  float at(std::size_t m, std::size_t row, std::size_t col) const {
    return data[(m * shape.height + row) * shape.width + col];
  }

  friend bool operator==(const FeatureTensor&, const FeatureTensor&) = default;
};

/// Throws ValidationError on empty dims, size mismatch or non-finite values.
void validate(const FeatureTensor& t);

std::vector<std::uint8_t> encode_tensor(const FeatureTensor& t);
FeatureTensor decode_tensor(std::span<const std::uint8_t> bytes, const std::string& source = "tensor");

void write_tensor(const FeatureTensor& t, const std::filesystem::path& path);
FeatureTensor read_tensor(const std::filesystem::path& path);

/// Header fields only; the payload length is still checked against the dims.
struct TensorHeader {
  std::string layer_id;
  LayerKind kind = LayerKind::conv;
  TensorShape shape;
};
TensorHeader read_tensor_header(const std::filesystem::path& path);

}  // namespace tesda
