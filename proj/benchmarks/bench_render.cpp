#include "splat4d/gradcheck.hpp"
#include "splat4d/rasterizer.hpp"
#include "splat4d/trainer.hpp"

#include <benchmark/benchmark.h>

using namespace splat4d;

namespace {

GaussianCloud scene(int n) {
    GaussianCloud c = initialize_cloud(n, 0.5, 1);
    for (auto& o : c.opacity_logits) o = 0.0;
    return c;
}

void BM_Render(benchmark::State& state) {
    const GaussianCloud c = scene(static_cast<int>(state.range(0)));
    const Camera cam = Camera{}.with_size(static_cast<int>(state.range(1)), static_cast<int>(state.range(1)));
    for (auto _ : state) benchmark::DoNotOptimize(render(c, cam));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Render)->Args({1000, 128})->Args({5000, 128})->Args({5000, 256})->Unit(benchmark::kMillisecond);

void BM_RenderBackward(benchmark::State& state) {
    const GaussianCloud c = scene(static_cast<int>(state.range(0)));
    const int s = static_cast<int>(state.range(1));
    const Camera cam = Camera{}.with_size(s, s);
    const Image up = random_image(3, s, s, -1.0, 1.0);
    for (auto _ : state) benchmark::DoNotOptimize(render_backward(c, cam, kWhite, up));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RenderBackward)->Args({1000, 128})->Args({5000, 128})->Args({5000, 256})->Unit(benchmark::kMillisecond);

}  // namespace
