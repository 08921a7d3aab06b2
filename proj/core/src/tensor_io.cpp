#include "tesda/tensor_io.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "binary_io.hpp"
#include "tesda/error.hpp"

namespace tesda {
namespace {

constexpr std::string_view kMagic = "TFT1";

struct DecodedHeader {
  TensorHeader header;
  std::size_t payload_offset = 0;
};

DecodedHeader decode_header(detail::ByteReader& in) {
  auto magic = in.get_bytes(4);
  if (std::string_view(reinterpret_cast<const char*>(magic.data()), 4) != kMagic) {
    throw FormatError(in.what() + ": bad magic (expected \"TFT1\")");
  }
  DecodedHeader out;
  const auto kind = in.get_u8();
  if (kind > 1) throw FormatError(in.what() + ": unknown layer kind tag " + std::to_string(kind));
  out.header.kind = static_cast<LayerKind>(kind);
  out.header.layer_id = in.get_string();
  const auto ndim = in.get_u32();
  const std::uint32_t expected_ndim = out.header.kind == LayerKind::conv ? 3 : 1;
  if (ndim != expected_ndim) {
    throw FormatError(in.what() + ": ndim " + std::to_string(ndim) + " does not match kind " +
                      to_string(out.header.kind));
  }
  std::vector<std::size_t> dims(ndim);
  for (auto& d : dims) {
    d = in.get_u32();
    if (d == 0) throw FormatError(in.what() + ": zero-sized dimension");
  }
  out.header.shape.channels = dims[0];
  if (ndim == 3) {
    out.header.shape.height = dims[1];
    out.header.shape.width = dims[2];
  }
  out.payload_offset = in.position();
  return out;
}

void check_payload(const detail::ByteReader& in, const TensorShape& shape) {
  const std::size_t expected = shape.element_count() * sizeof(float);
  if (in.remaining() < expected) {
    throw FormatError(in.what() + ": truncated payload (" + std::to_string(in.remaining()) + " bytes, dims " +
                      to_string(shape) + " need " + std::to_string(expected) + ")");
  }
  if (in.remaining() > expected) {
    throw FormatError(in.what() + ": payload longer than dims " + to_string(shape) + " imply");
  }
}

}  // namespace

const char* to_string(LayerKind kind) { return kind == LayerKind::conv ? "conv" : "dense"; }

LayerKind layer_kind_from_string(const std::string& s) {
  if (s == "conv") return LayerKind::conv;
  if (s == "dense") return LayerKind::dense;
  throw ValidationError("unknown layer kind \"" + s + "\" (expected conv or dense)");
}

std::string to_string(const TensorShape& shape) {
  return std::to_string(shape.channels) + "x" + std::to_string(shape.height) + "x" + std::to_string(shape.width);
}

void validate(const FeatureTensor& t) {
  const auto& s = t.shape;
  if (s.channels == 0 || s.height == 0 || s.width == 0) {
    throw ValidationError("tensor '" + t.layer_id + "': dims must be >= 1, got " + to_string(s));
  }
  if (t.kind == LayerKind::dense && (s.height != 1 || s.width != 1)) {
    throw ValidationError("tensor '" + t.layer_id + "': dense layer must have 1x1 maps");
  }
  if (t.data.size() != s.element_count()) {
    throw ValidationError("tensor '" + t.layer_id + "': data length " + std::to_string(t.data.size()) +
                          " != M*L*K = " + std::to_string(s.element_count()));
  }
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    if (!std::isfinite(t.data[i])) {
      throw ValidationError("tensor '" + t.layer_id + "': non-finite value at index " + std::to_string(i));
    }
  }
}

std::vector<std::uint8_t> encode_tensor(const FeatureTensor& t) {
  validate(t);
  detail::ByteWriter out;
  out.put_raw(kMagic);
  out.put_u8(static_cast<std::uint8_t>(t.kind));
  out.put_string(t.layer_id);
  if (t.kind == LayerKind::conv) {
    out.put_u32(3);
    out.put_u32(static_cast<std::uint32_t>(t.shape.channels));
    out.put_u32(static_cast<std::uint32_t>(t.shape.height));
    out.put_u32(static_cast<std::uint32_t>(t.shape.width));
  } else {
    out.put_u32(1);
    out.put_u32(static_cast<std::uint32_t>(t.shape.channels));
  }
  for (float v : t.data) out.put_f32(v);
  return out.take();
}

FeatureTensor decode_tensor(std::span<const std::uint8_t> bytes, const std::string& source) {
  detail::ByteReader in(bytes, source);
  auto decoded = decode_header(in);
  check_payload(in, decoded.header.shape);

  FeatureTensor t;
  t.layer_id = std::move(decoded.header.layer_id);
  t.kind = decoded.header.kind;
  t.shape = decoded.header.shape;
  t.data.resize(t.shape.element_count());
  for (auto& v : t.data) v = in.get_f32();
  validate(t);
  return t;
}

void write_tensor(const FeatureTensor& t, const std::filesystem::path& path) {
  detail::write_file(path, encode_tensor(t));
}

FeatureTensor read_tensor(const std::filesystem::path& path) {
  return decode_tensor(detail::read_file(path), path.string());
}

TensorHeader read_tensor_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  // Magic, kind, name length.
  std::vector<std::uint8_t> head(9);
  in.read(reinterpret_cast<char*>(head.data()), 9);
  if (in.gcount() != 9) throw FormatError(path.string() + ": truncated header");
  const std::uint32_t name_len = head[5] | (head[6] << 8) | (head[7] << 16) | (static_cast<std::uint32_t>(head[8]) << 24);
  if (name_len > (1u << 20)) throw FormatError(path.string() + ": implausible layer id length");
  head.resize(9 + name_len + 4 + 3 * 4);
  in.read(reinterpret_cast<char*>(head.data() + 9), static_cast<std::streamsize>(head.size() - 9));
  head.resize(9 + static_cast<std::size_t>(in.gcount()));

  detail::ByteReader reader(head, path.string());
  auto decoded = decode_header(reader);

  in.clear();
  in.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::size_t>(in.tellg());
  const std::size_t expected = decoded.payload_offset + decoded.header.shape.element_count() * sizeof(float);
  if (file_size < expected) {
    throw FormatError(path.string() + ": truncated payload (dims " + to_string(decoded.header.shape) + ")");
  }
  if (file_size > expected) {
    throw FormatError(path.string() + ": payload longer than dims " + to_string(decoded.header.shape) + " imply");
  }
  return decoded.header;
}

}  // namespace tesda
