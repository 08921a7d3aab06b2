#include <fstream>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "tesda/error.hpp"
#include "tesda/manifest.hpp"

namespace tesda {
namespace {

using testing::TempDir;
using testing::random_tensor;

// Writes `n` samples of a conv layer "a" (2x3x3) and a dense layer "b" (4).
DatasetManifest write_dataset(const TempDir& dir, std::size_t n) {
  DatasetManifest m;
  m.layers = {{"a", LayerKind::conv, {2, 3, 3}}, {"b", LayerKind::dense, {4, 1, 1}}};
  m.split = Split::clean_train;
  std::filesystem::create_directories(dir / "t");
  for (std::size_t i = 0; i < n; ++i) {
    SampleEntry s{"s" + std::to_string(i), {}};
    for (const auto& l : m.layers) {
      const auto rel = std::filesystem::path("t") / (s.id + "_" + l.id + ".tft");
      write_tensor(random_tensor(l.id, l.shape, i * 10 + s.files.size(), l.kind), dir.path() / rel);
      s.files.push_back(rel);
    }
    m.samples.push_back(s);
  }
  save_manifest(m, dir / "m.json");
  return m;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

TEST(Manifest, LoadsTwoLayersTenSamples) {
  TempDir dir;
  write_dataset(dir, 10);
  const auto m = load_manifest(dir / "m.json");
  EXPECT_EQ(m.sample_count(), 10u);
  ASSERT_EQ(m.layers.size(), 2u);
  EXPECT_EQ(m.layers[0].id, "a");
  EXPECT_EQ(m.layers[1].kind, LayerKind::dense);
  EXPECT_EQ(m.layers[1].shape, (TensorShape{4, 1, 1}));
  EXPECT_EQ(m.split, Split::clean_train);
  EXPECT_EQ(m.layer_index("b"), 1u);
  EXPECT_THROW(m.layer_index("zzz"), ValidationError);
}

TEST(Manifest, MissingFileErrorNamesThePath) {
  TempDir dir;
  write_dataset(dir, 3);
  std::filesystem::remove(dir / "t" / "s1_b.tft");
  try {
    load_manifest(dir / "m.json");
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("s1_b.tft"), std::string::npos) << e.what();
  }
}

TEST(Manifest, DuplicateLayerIdIsValidationError) {
  TempDir dir;
  write_text(dir / "m.json", R"({"split":"clean-train","layers":[{"id":"a","kind":"dense","dims":[2]},
    {"id":"a","kind":"dense","dims":[2]}],"samples":[]})");
  EXPECT_THROW(load_manifest(dir / "m.json"), ValidationError);
}

TEST(Manifest, DeclaredDimsMustMatchFiles) {
  TempDir dir;
  write_tensor(random_tensor("a", {2, 3, 3}, 1), dir / "x.tft");
  write_text(dir / "m.json", R"({"split":"attacked","layers":[{"id":"a","kind":"conv","dims":[2,3,4]}],
    "samples":[{"id":"s0","files":{"a":"x.tft"}}]})");
  EXPECT_THROW(load_manifest(dir / "m.json"), ValidationError);
}

TEST(Manifest, SampleCountMustMatchListedSamples) {
  TempDir dir;
  write_tensor(random_tensor("a", {4, 1, 1}, 1, LayerKind::dense), dir / "x.tft");
  write_text(dir / "m.json", R"({"split":"clean-test","sample_count":2,"layers":[{"id":"a","kind":"dense","dims":[4]}],
    "samples":[{"id":"s0","files":{"a":"x.tft"}}]})");
  EXPECT_THROW(load_manifest(dir / "m.json"), ValidationError);
}

TEST(Manifest, RejectsMalformedDocuments) {
  TempDir dir;
  write_text(dir / "bad.json", "{ not json");
  EXPECT_THROW(load_manifest(dir / "bad.json"), FormatError);
  write_text(dir / "split.json", R"({"split":"validation","layers":[],"samples":[]})");
  EXPECT_THROW(load_manifest(dir / "split.json"), ValidationError);
  write_text(dir / "dims.json", R"({"split":"attacked","layers":[{"id":"a","kind":"conv","dims":[2]}],"samples":[]})");
  EXPECT_THROW(load_manifest(dir / "dims.json"), ValidationError);
  EXPECT_THROW(load_manifest(dir / "absent.json"), IoError);
}

TEST(Manifest, SaveLoadRoundTripAndDatasetLoad) {
  TempDir dir;
  const auto written = write_dataset(dir, 4);
  const auto m = load_manifest(dir / "m.json");
  EXPECT_EQ(m.layers, written.layers);
  ASSERT_EQ(m.samples.size(), 4u);
  EXPECT_EQ(m.samples[2].id, "s2");
  EXPECT_EQ(m.samples[2].files, written.samples[2].files);

  const auto data = load_dataset(m, 2);
  ASSERT_EQ(data.sample_count(), 4u);
  EXPECT_EQ(data.sample_ids[3], "s3");
  EXPECT_EQ(data.samples[1][0], read_tensor(dir / "t" / "s1_a.tft"));
  EXPECT_EQ(data.samples[1][1].kind, LayerKind::dense);
}

TEST(Manifest, LayoutHashDependsOnIdsKindsAndDims) {
  const std::vector<LayerSpec> base = {{"a", LayerKind::conv, {2, 3, 3}}, {"b", LayerKind::dense, {4, 1, 1}}};
  auto renamed = base;
  renamed[0].id = "c";
  auto resized = base;
  resized[0].shape.width = 4;
  auto reordered = std::vector<LayerSpec>{base[1], base[0]};
  EXPECT_EQ(layout_hash(base), layout_hash(base));
  EXPECT_NE(layout_hash(base), layout_hash(renamed));
  EXPECT_NE(layout_hash(base), layout_hash(resized));
  EXPECT_NE(layout_hash(base), layout_hash(reordered));
}

TEST(Manifest, SplitNamesRoundTrip) {
  for (auto s : {Split::clean_train, Split::clean_test, Split::attacked}) EXPECT_EQ(split_from_string(to_string(s)), s);
}

}  // namespace
}  // namespace tesda
