#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "tesda/synth.hpp"
#include "tesda/tensor_io.hpp"

namespace tesda::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("tesda-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline FeatureTensor random_tensor(const std::string& id, TensorShape shape, std::uint64_t seed,
                                   LayerKind kind = LayerKind::conv) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal;
  FeatureTensor t{id, kind, shape, {}};
  t.data.resize(shape.element_count());
  for (auto& v : t.data) v = normal(rng);
  return t;
}

inline Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

/// Two conv layers (8 channels, 4x4) with a pca-lowest mean shift on both.
inline SyntheticSpec two_layer_spec(std::size_t n_train, std::size_t n_test, std::size_t n_attacked, double magnitude,
                                    std::uint64_t seed) {
  SyntheticSpec spec;
  spec.layers = {{"block1", LayerKind::conv, {8, 4, 4}}, {"block2", LayerKind::conv, {8, 4, 4}}};
  spec.n_train = n_train;
  spec.n_test = n_test;
  spec.n_attacked = n_attacked;
  MeanShift shift;
  shift.magnitude = magnitude;
  spec.attack = shift;
  spec.seed = seed;
  return spec;
}

}  // namespace tesda::testing
