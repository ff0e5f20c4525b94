#include <benchmark/benchmark.h>

#include "pavecast/baselines.hpp"
#include "pavecast/data.hpp"
#include "pavecast/rng.hpp"
#include "pavecast/transformer.hpp"
#include "pavecast/windows.hpp"

namespace {

pavecast::Matrix random_matrix(int rows, int cols, std::uint64_t seed) {
    pavecast::Rng rng(seed);
    pavecast::Matrix m(rows, cols);
    for (double& v : m.data) v = rng.normal();
    return m;
}

void BM_Matmul(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const pavecast::Matrix a = random_matrix(n, n, 1);
    const pavecast::Matrix b = random_matrix(n, n, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(pavecast::matmul(a, b));
    }
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(128);

void BM_TransformerForward(benchmark::State& state) {
    pavecast::TransformerConfig cfg;
    cfg.seed = 3;
    const pavecast::TransformerParams params = pavecast::init_params(cfg);
    const pavecast::Matrix window = random_matrix(cfg.window_length, cfg.d_x, 4);
    for (auto _ : state) {
        benchmark::DoNotOptimize(pavecast::forward(window, params, cfg));
    }
}
BENCHMARK(BM_TransformerForward);

void BM_SyntheticGeneration(benchmark::State& state) {
    pavecast::SyntheticConfig cfg;
    cfg.n_sections = static_cast<int>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(pavecast::generate_synthetic(cfg, 7));
    }
}
BENCHMARK(BM_SyntheticGeneration)->Arg(100)->Arg(500);

void BM_TreeFit(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    pavecast::DesignMatrix d;
    d.x = random_matrix(n, 48, 5);
    pavecast::Rng rng(6);
    for (int i = 0; i < n; ++i) d.y.push_back(rng.normal());
    const pavecast::TreeConfig cfg{8, 2};
    for (auto _ : state) {
        benchmark::DoNotOptimize(pavecast::fit_tree(d, cfg));
    }
}
BENCHMARK(BM_TreeFit)->Arg(200)->Arg(400);

}  // namespace

BENCHMARK_MAIN();
