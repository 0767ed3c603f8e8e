#include "solstab/flow.hpp"
#include "solstab/solitons.hpp"
#include "solstab/spectral.hpp"
#include "solstab/stability.hpp"

#include <benchmark/benchmark.h>

#include <map>

using namespace solstab;

namespace {

const solitons::SolitonProfile& bryant(std::size_t N) {
    static std::map<std::size_t, solitons::SolitonProfile> cache;
    auto it = cache.find(N);
    if (it == cache.end()) it = cache.emplace(N, solitons::shoot_soliton(1, 3, 0.7, 15.0, 1e-9, N)).first;
    return it->second;
}

void BM_Shoot(benchmark::State& st) {
    const auto N = static_cast<std::size_t>(st.range(0));
    for (auto _ : st) benchmark::DoNotOptimize(solitons::shoot_soliton(1, 3, 0.7, 15.0, 1e-9, N));
}
BENCHMARK(BM_Shoot)->Arg(500)->Arg(2000)->Arg(8000)->Unit(benchmark::kMillisecond);

void BM_TensorBottom(benchmark::State& st) {
    const auto& p = bryant(static_cast<std::size_t>(st.range(0)));
    const spectral::SpectralProblem prob{p, spectral::Sector::DiagonalTensor, spectral::window_upto(p.grid(), 12.0)};
    for (auto _ : st) benchmark::DoNotOptimize(spectral::bottom_lichnerowicz(prob).lambda_min);
    st.SetComplexityN(st.range(0));
}
BENCHMARK(BM_TensorBottom)->Arg(500)->Arg(1000)->Arg(2000)->Arg(4000)->Arg(8000)->Complexity()->Unit(benchmark::kMillisecond);

void BM_DenseOracle(benchmark::State& st) {
    const auto& p = bryant(static_cast<std::size_t>(st.range(0)));
    const spectral::SpectralProblem prob{p, spectral::Sector::DiagonalTensor, spectral::window_upto(p.grid(), 12.0)};
    for (auto _ : st) benchmark::DoNotOptimize(spectral::bottom_lichnerowicz(prob, spectral::Method::Dense).lambda_min);
}
BENCHMARK(BM_DenseOracle)->Arg(250)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_Rotsym(benchmark::State& st) {
    const auto& p = bryant(2000);
    for (auto _ : st) benchmark::DoNotOptimize(stability::rotsym_pointwise_inequality(p, 1, 100, p.size()).min_margin);
}
BENCHMARK(BM_Rotsym)->Unit(benchmark::kMillisecond);

void BM_Mrhf(benchmark::State& st) {
    const auto& p = bryant(static_cast<std::size_t>(st.range(0)));
    flow::FlowConfig c{.profile = p, .r_window = 8.0, .horizon = 0.5, .sample_dt = 0.05};
    c.perturbation.amplitude = 1e-2;
    for (auto _ : st) benchmark::DoNotOptimize(flow::run_mrhf(c).steps);
}
BENCHMARK(BM_Mrhf)->Arg(241)->Arg(481)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
