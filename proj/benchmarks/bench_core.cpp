#include <benchmark/benchmark.h>

#include <memory>

#include "tscert/certmath.hpp"
#include "tscert/evalkit.hpp"
#include "tscert/masks.hpp"
#include "tscert/nnkit.hpp"
#include "tscert/smoothing.hpp"
#include "tscert/tsdata.hpp"

using namespace tscert;

namespace {

nnkit::ModelParams desk_model(std::size_t length) {
  return nnkit::init_model({length, 3, {{16, 7}, {16, 5}}, 11});
}

void BM_Forward(benchmark::State& state) {
  const auto length = static_cast<std::size_t>(state.range(0));
  const auto params = desk_model(length);
  const auto data = tsdata::generate_cbf(1, std::max<std::size_t>(length, 64), 3);
  std::vector<double> x(data.series[0].values.begin(), data.series[0].values.begin() + length);
  for (auto _ : state) benchmark::DoNotOptimize(nnkit::forward(params, x));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Forward)->Arg(60)->Arg(128)->Arg(512);

void BM_InputGradient(benchmark::State& state) {
  const nnkit::ConvNet net(desk_model(128));
  const auto x = tsdata::generate_cbf(1, 128, 3).series[0].values;
  const std::vector<double> g{0.2, -0.5, 0.3};
  for (auto _ : state) benchmark::DoNotOptimize(net.input_gradient(x, g));
}
BENCHMARK(BM_InputGradient);

void BM_CertifiedRadius(benchmark::State& state) {
  double pa = 0.6;
  for (auto _ : state) {
    benchmark::DoNotOptimize(certmath::certified_radius(pa, 1.0 - pa, 0.4));
    pa = pa > 0.999 ? 0.6 : pa + 1e-4;
  }
}
BENCHMARK(BM_CertifiedRadius);

void BM_ClopperPearson(benchmark::State& state) {
  std::size_t k = 500;
  for (auto _ : state) {
    benchmark::DoNotOptimize(certmath::clopper_pearson_lower(k, 1000, 0.0005));
    k = k == 1000 ? 500 : k + 1;
  }
}
BENCHMARK(BM_ClopperPearson);

void BM_SampleCounts(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  auto model = std::make_shared<const nnkit::ConvNet>(desk_model(128));
  const auto x = tsdata::generate_cbf(1, 128, 3).series[0].values;
  const auto clf = m == 1 ? smoothing::EnsembleClassifier::single(model)
                          : smoothing::EnsembleClassifier::self_ensemble(
                                model, masks::fixed_mask_set(9, m, {masks::MaskKind::binomial, 0.9, 128}));
  std::uint64_t id = 0;
  for (auto _ : state) benchmark::DoNotOptimize(smoothing::sample_counts(clf, x, 0.4, 100, 7, id++));
  state.SetItemsProcessed(state.iterations() * 100);
}
BENCHMARK(BM_SampleCounts)->Arg(1)->Arg(5)->Unit(benchmark::kMillisecond);

void BM_ContinuousMask(benchmark::State& state) {
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(masks::continuous_mask(512, 0.7, seed++));
  }
}
BENCHMARK(BM_ContinuousMask);

}  // namespace

BENCHMARK_MAIN();
