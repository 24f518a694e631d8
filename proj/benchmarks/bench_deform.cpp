#include "splat4d/deformation.hpp"
#include "splat4d/trainer.hpp"

#include <benchmark/benchmark.h>

using namespace splat4d;

namespace {

void BM_Deform(benchmark::State& state) {
    const GaussianCloud c = initialize_cloud(static_cast<int>(state.range(0)), 0.5, 2);
    DeformationModel m = DeformationModel::create(32, 32, 32, 64, 5);
    for (double& p : m.decoder.parameters()) p = 0.01;
    for (auto _ : state) benchmark::DoNotOptimize(deform(c, m, 0.3));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Deform)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);

void BM_QueryGradients(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const GaussianCloud c = initialize_cloud(static_cast<int>(n), 0.5, 2);
    DeformationModel m = DeformationModel::create(32, 32, 32, 64, 5);
    GaussianDelta up(n);
    for (std::size_t i = 0; i < n; ++i) {
        up.d_position[i] = Vec3::Constant(0.1);
        up.d_rotation[i] = Vec4::Constant(0.1);
        up.d_log_scale[i] = Vec3::Constant(0.1);
    }
    for (auto _ : state) benchmark::DoNotOptimize(query_gradients(m.field, m.decoder, c, 0.3, up));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_QueryGradients)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);

}  // namespace
