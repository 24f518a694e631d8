#include "splat4d/io/ply.hpp"
#include "splat4d/trainer.hpp"

#include <benchmark/benchmark.h>

using namespace splat4d;

namespace {

void BM_PlyEncode(benchmark::State& state) {
    const GaussianCloud c = initialize_cloud(static_cast<int>(state.range(0)), 0.5, 4);
    for (auto _ : state) benchmark::DoNotOptimize(io::encode_cloud(c));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PlyEncode)->Arg(5000)->Arg(50000);

void BM_PlyDecode(benchmark::State& state) {
    const std::string bytes = io::encode_cloud(initialize_cloud(static_cast<int>(state.range(0)), 0.5, 4));
    for (auto _ : state) benchmark::DoNotOptimize(io::decode_cloud(bytes));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PlyDecode)->Arg(5000)->Arg(50000);

}  // namespace
