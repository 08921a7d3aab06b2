#include "tesda/manifest.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "binary_io.hpp"
#include "tesda/error.hpp"
#include "tesda/parallel.hpp"

namespace tesda {
namespace {

using nlohmann::json;

template <typename T>
T required(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ValidationError(where + ": missing field \"" + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(where + ": field \"" + key + "\" has the wrong type (" + e.what() + ")");
  }
}

LayerSpec parse_layer(const json& j, const std::string& where) {
  LayerSpec layer;
  layer.id = required<std::string>(j, "id", where);
  layer.kind = layer_kind_from_string(required<std::string>(j, "kind", where));
  const auto dims = required<std::vector<std::size_t>>(j, "dims", where);
  if (layer.kind == LayerKind::conv) {
    if (dims.size() != 3) throw ValidationError(where + ": conv layer '" + layer.id + "' needs dims [M, L, K]");
    layer.shape = {dims[0], dims[1], dims[2]};
  } else {
    if (dims.size() != 1) throw ValidationError(where + ": dense layer '" + layer.id + "' needs dims [M]");
    layer.shape = {dims[0], 1, 1};
  }
  if (layer.shape.element_count() == 0) throw ValidationError(where + ": layer '" + layer.id + "' has a zero dim");
  return layer;
}

}  // namespace

const char* to_string(Split split) {
  switch (split) {
    case Split::clean_train: return "clean-train";
    case Split::clean_test: return "clean-test";
    case Split::attacked: return "attacked";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "clean-train") return Split::clean_train;
  if (s == "clean-test") return Split::clean_test;
  if (s == "attacked") return Split::attacked;
  throw ValidationError("unknown split \"" + s + "\" (expected clean-train, clean-test or attacked)");
}

std::size_t DatasetManifest::layer_index(const std::string& id) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].id == id) return i;
  }
  throw ValidationError("layer '" + id + "' not in manifest");
}

std::filesystem::path DatasetManifest::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : base_dir / p;
}

std::size_t LoadedDataset::layer_index(const std::string& id) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].id == id) return i;
  }
  throw ValidationError("layer '" + id + "' not in dataset");
}

void validate_structure(const DatasetManifest& manifest) {
  if (manifest.layers.empty()) throw ValidationError("manifest lists no layers");
  std::set<std::string> seen;
  for (const auto& layer : manifest.layers) {
    if (!seen.insert(layer.id).second) throw ValidationError("duplicate layer_id '" + layer.id + "' in manifest");
  }
  for (const auto& sample : manifest.samples) {
    if (sample.files.size() != manifest.layers.size()) {
      throw ValidationError("sample '" + sample.id + "' lists " + std::to_string(sample.files.size()) +
                            " files for " + std::to_string(manifest.layers.size()) + " layers");
    }
  }
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": invalid JSON (" + e.what() + ")");
  }
  const std::string where = path.string();

  DatasetManifest m;
  m.base_dir = path.parent_path();
  m.split = split_from_string(required<std::string>(doc, "split", where));

  if (!doc.contains("layers") || !doc["layers"].is_array()) throw ValidationError(where + ": \"layers\" must be an array");
  for (const auto& jl : doc["layers"]) m.layers.push_back(parse_layer(jl, where));

  std::set<std::string> seen;
  for (const auto& layer : m.layers) {
    if (!seen.insert(layer.id).second) throw ValidationError(where + ": duplicate layer_id '" + layer.id + "'");
  }

  if (!doc.contains("samples") || !doc["samples"].is_array()) throw ValidationError(where + ": \"samples\" must be an array");
  for (const auto& js : doc["samples"]) {
    SampleEntry s;
    s.id = required<std::string>(js, "id", where);
    if (!js.contains("files") || !js["files"].is_object()) {
      throw ValidationError(where + ": sample '" + s.id + "' needs a \"files\" object");
    }
    const auto& files = js["files"];
    for (const auto& layer : m.layers) {
      if (!files.contains(layer.id)) {
        throw ValidationError(where + ": sample '" + s.id + "' has no file for layer '" + layer.id + "'");
      }
      s.files.emplace_back(files[layer.id].get<std::string>());
    }
    if (files.size() != m.layers.size()) {
      throw ValidationError(where + ": sample '" + s.id + "' lists files for undeclared layers");
    }
    m.samples.push_back(std::move(s));
  }
  if (doc.contains("sample_count") && doc["sample_count"].get<std::size_t>() != m.samples.size()) {
    throw ValidationError(where + ": sample_count " + doc["sample_count"].dump() + " != " +
                          std::to_string(m.samples.size()) + " listed samples");
  }

  for (const auto& sample : m.samples) {
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      const auto file = m.resolve(sample.files[l]);
      if (!std::filesystem::exists(file)) {
        throw IoError(where + ": sample '" + sample.id + "' references missing file " + file.string());
      }
      const auto header = read_tensor_header(file);
      const auto& layer = m.layers[l];
      if (header.kind != layer.kind || header.shape != layer.shape) {
        throw ValidationError(file.string() + ": " + to_string(header.kind) + " " + to_string(header.shape) +
                              " does not match declared " + to_string(layer.kind) + " " + to_string(layer.shape) +
                              " for layer '" + layer.id + "'");
      }
    }
  }
  return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  validate_structure(manifest);
  json doc;
  doc["format"] = "tesda-manifest";
  doc["version"] = 1;
  doc["split"] = to_string(manifest.split);
  doc["sample_count"] = manifest.samples.size();
  doc["layers"] = json::array();
  for (const auto& layer : manifest.layers) {
    json jl;
    jl["id"] = layer.id;
    jl["kind"] = to_string(layer.kind);
    if (layer.kind == LayerKind::conv) {
      jl["dims"] = {layer.shape.channels, layer.shape.height, layer.shape.width};
    } else {
      jl["dims"] = {layer.shape.channels};
    }
    doc["layers"].push_back(std::move(jl));
  }
  doc["samples"] = json::array();
  for (const auto& sample : manifest.samples) {
    json js;
    js["id"] = sample.id;
    json files = json::object();
    for (std::size_t l = 0; l < manifest.layers.size(); ++l) {
      files[manifest.layers[l].id] = sample.files[l].generic_string();
    }
    js["files"] = std::move(files);
    doc["samples"].push_back(std::move(js));
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << doc.dump(1) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::uint32_t layout_hash(const std::vector<LayerSpec>& layers) {
  detail::ByteWriter w;
  for (const auto& layer : layers) {
    w.put_string(layer.id);
    w.put_u8(static_cast<std::uint8_t>(layer.kind));
    w.put_u64(layer.shape.channels);
    w.put_u64(layer.shape.height);
    w.put_u64(layer.shape.width);
  }
  return detail::crc32(w.bytes());
}

LoadedDataset load_dataset(const DatasetManifest& manifest, unsigned threads) {
  validate_structure(manifest);
  LoadedDataset data;
  data.layers = manifest.layers;
  data.split = manifest.split;
  data.samples.resize(manifest.samples.size());
  data.sample_ids.reserve(manifest.samples.size());
  for (const auto& s : manifest.samples) data.sample_ids.push_back(s.id);

  parallel_for(manifest.samples.size(), threads, [&](std::size_t i) {
    const auto& sample = manifest.samples[i];
    auto& row = data.samples[i];
    row.reserve(manifest.layers.size());
    for (std::size_t l = 0; l < manifest.layers.size(); ++l) {
      const auto file = manifest.resolve(sample.files[l]);
      auto t = read_tensor(file);
      const auto& layer = manifest.layers[l];
      if (t.kind != layer.kind || t.shape != layer.shape) {
        throw ValidationError(file.string() + ": dims " + to_string(t.shape) + " do not match layer '" + layer.id +
                              "' (" + to_string(layer.shape) + ")");
      }
      row.push_back(std::move(t));
    }
  });
  return data;
}

}  // namespace tesda
