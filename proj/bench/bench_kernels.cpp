// Serial vs OpenMP timings for the training and evaluation kernels.
// Arg(0) is the serial reference, Arg(1) the OpenMP path.

#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "cml/calibration.hpp"
#include "cml/data.hpp"
#include "cml/kernels.hpp"
#include "cml/model.hpp"

namespace {

struct Fixture {
  cml::Dataset data;
  cml::ClassifierParams params;
  std::vector<std::size_t> indices;
  std::vector<cml::MaskChain> chains;

  Fixture() {
    cml::SyntheticSpec s;
    s.num_classes = 4;
    s.modality_dims = {32, 32, 32, 32};
    s.samples_per_class = {128, 128, 128, 128};
    s.class_separation = {3.0, 2.0, 1.5, 1.0};
    s.noise_std = {1.0, 1.0, 1.0, 1.0};
    s.seed = 7;
    data = cml::generate_synthetic(s);

    cml::ModelSpec m;
    m.modality_dims = s.modality_dims;
    m.num_classes = 4;
    m.hidden_dim = 128;
    m.latent_dim = 64;
    params = cml::init_params(m, 7);

    indices.resize(data.size());
    std::iota(indices.begin(), indices.end(), 0);
    for (std::size_t i = 0; i < data.size(); ++i) chains.push_back(cml::evaluation_chain(4, 7, 0, i));
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

cml::Exec policy(const benchmark::State& state) { return state.range(0) == 0 ? cml::Exec::kSerial : cml::Exec::kParallel; }

void BM_BatchObjective(benchmark::State& state) {
  const Fixture& f = fixture();
  cml::ObjectiveOptions opts;
  opts.variant = cml::RegularizerKind::kHinge;
  opts.lambda = 10.0;
  for (auto _ : state) {
    auto r = cml::batch_objective(f.params, f.data, f.indices, f.chains, opts, policy(state));
    benchmark::DoNotOptimize(r.total_loss);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.data.size()));
}
BENCHMARK(BM_BatchObjective)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_EvaluateVrrExhaustive(benchmark::State& state) {
  const Fixture& f = fixture();
  for (auto _ : state) {
    auto r = cml::evaluate_vrr(f.params, f.data, 7, cml::VrrMode::kExhaustive, 1, policy(state));
    benchmark::DoNotOptimize(r.vrr);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.data.size()));
}
BENCHMARK(BM_EvaluateVrrExhaustive)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_PredictAll(benchmark::State& state) {
  const Fixture& f = fixture();
  const cml::SubsetMask full = cml::SubsetMask::full(4);
  for (auto _ : state) {
    auto r = cml::predict_all(f.params, f.data, full, policy(state));
    benchmark::DoNotOptimize(r.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.data.size()));
}
BENCHMARK(BM_PredictAll)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
