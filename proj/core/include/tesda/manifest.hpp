#pragma once

// JSON dataset manifest: the ordered layer list plus one tensor file per
// (sample, layer). Schema documented in docs/formats.md.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tesda/tensor_io.hpp"

namespace tesda {

enum class Split { clean_train, clean_test, attacked };

const char* to_string(Split split);
Split split_from_string(const std::string& s);

struct LayerSpec {
  std::string id;
  LayerKind kind = LayerKind::conv;
  TensorShape shape;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct SampleEntry {
  std::string id;
  /// One path per manifest layer, in layer order. Relative paths resolve
  /// against DatasetManifest::base_dir.
  std::vector<std::filesystem::path> files;
};

struct DatasetManifest {
  std::vector<LayerSpec> layers;
  std::vector<SampleEntry> samples;
  Split split = Split::clean_train;
  std::filesystem::path base_dir;

  std::size_t sample_count() const { return samples.size(); }
  std::size_t layer_index(const std::string& id) const;
  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

/// Parses and validates: unique layer ids, every file present and its header
/// matching the declared kind/dims.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Writes the manifest as JSON. File paths are written as stored.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Structural checks that do not touch the filesystem.
void validate_structure(const DatasetManifest& manifest);

/// CRC32 over the canonical layer list (ids, kinds, dims). Two manifests with
/// the same hash produce tensors the same fitted detector can score.
std::uint32_t layout_hash(const std::vector<LayerSpec>& layers);

/// All tensors of a manifest held in memory: samples[i][l] is layer l of sample i.
struct LoadedDataset {
  std::vector<LayerSpec> layers;
  std::vector<std::string> sample_ids;
  std::vector<std::vector<FeatureTensor>> samples;
  Split split = Split::clean_train;

  std::size_t sample_count() const { return samples.size(); }
  std::size_t layer_index(const std::string& id) const;
};

LoadedDataset load_dataset(const DatasetManifest& manifest, unsigned threads = 1);

}  // namespace tesda
