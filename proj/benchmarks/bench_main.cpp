#include <random>

#include <benchmark/benchmark.h>

#include "tesda/dct.hpp"
#include "tesda/detector.hpp"
#include "tesda/robust.hpp"
#include "tesda/synth.hpp"

namespace {

using namespace tesda;

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

SyntheticSpec spec_for(std::size_t channels, std::size_t map, std::size_t n) {
  SyntheticSpec spec;
  spec.layers = {{"block1", LayerKind::conv, {channels, map, map}}, {"block2", LayerKind::conv, {channels, map, map}}};
  spec.n_train = n;
  spec.n_test = 256;
  spec.n_attacked = 1;
  return spec;
}

void BM_Dct2(benchmark::State& state) {
  const auto n = state.range(0);
  const auto img = gaussian(n, n, 1);
  for (auto _ : state) benchmark::DoNotOptimize(dct2(img));
}
BENCHMARK(BM_Dct2)->Arg(4)->Arg(8)->Arg(16)->Arg(32);

void BM_ExtractDct(benchmark::State& state) {
  const auto channels = static_cast<std::size_t>(state.range(0));
  const auto data = generate_in_memory(spec_for(channels, 16, 2));
  const auto selection = DctSelection::zigzag(0, 4, 16, 16);
  const auto& tensor = data.train.samples[0][0];
  for (auto _ : state) benchmark::DoNotOptimize(extract_dct_matrix(tensor, selection));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(channels));
}
BENCHMARK(BM_ExtractDct)->Arg(16)->Arg(64)->Arg(256);

void BM_FitMcd(benchmark::State& state) {
  const auto x = gaussian(state.range(0), state.range(1), 2);
  for (auto _ : state) benchmark::DoNotOptimize(fit_mcd(x, {.n_starts = 100}));
}
BENCHMARK(BM_FitMcd)->Args({1000, 2})->Args({5000, 2})->Args({5000, 8})->Unit(benchmark::kMillisecond);

void BM_Mahalanobis(benchmark::State& state) {
  const auto k = state.range(0);
  const auto fit = fit_mcd(gaussian(500, k, 3), {.n_starts = 20});
  const Eigen::VectorXd theta = gaussian(k, 1, 4);
  for (auto _ : state) benchmark::DoNotOptimize(fit.model.mahalanobis_sq(theta));
}
BENCHMARK(BM_Mahalanobis)->Arg(2)->Arg(8)->Arg(32);

void BM_ScoreSample(benchmark::State& state) {
  const auto channels = static_cast<std::size_t>(state.range(0));
  const auto data = generate_in_memory(spec_for(channels, 8, 2000));
  DetectorConfig config;
  config.dct = DctSelection::zigzag(0, 2, 8, 8);
  config.mcd_starts = 50;
  const auto det = fit(config, data.train);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(det.score(data.clean_test.samples[i % data.clean_test.sample_count()]));
    ++i;
  }
}
BENCHMARK(BM_ScoreSample)->Arg(8)->Arg(64);

}  // namespace
BENCHMARK_MAIN();
