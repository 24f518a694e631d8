#include "splat4d/mesh.hpp"
#include "splat4d/mesh_render.hpp"
#include "splat4d/trainer.hpp"

#include <benchmark/benchmark.h>

using namespace splat4d;

namespace {

GaussianCloud blob() {
    GaussianCloud c = initialize_cloud(2000, 0.4, 3);
    for (auto& o : c.opacity_logits) o = 2.0;
    return c;
}

void BM_DensityGrid(benchmark::State& state) {
    const GaussianCloud c = blob();
    for (auto _ : state) benchmark::DoNotOptimize(build_density_grid(c, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_DensityGrid)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_MarchingCubesSphere(benchmark::State& state) {
    const int g = static_cast<int>(state.range(0));
    const DensityGrid grid = DensityGrid::from_function(g, Box3{}, [](const Vec3& p) { return 1.0 - p.norm(); });
    for (auto _ : state) benchmark::DoNotOptimize(marching_cubes(grid, 0.3));
}
BENCHMARK(BM_MarchingCubesSphere)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_UnwrapUv(benchmark::State& state) {
    const DensityGrid grid = DensityGrid::from_function(64, Box3{}, [](const Vec3& p) { return 1.0 - p.norm(); });
    const Mesh m = marching_cubes(grid, 0.3);
    for (auto _ : state) benchmark::DoNotOptimize(unwrap_uv(m));
    state.counters["faces"] = static_cast<double>(m.faces.size());
}
BENCHMARK(BM_UnwrapUv)->Unit(benchmark::kMillisecond);

void BM_RasterizeMesh(benchmark::State& state) {
    const DensityGrid grid = DensityGrid::from_function(64, Box3{}, [](const Vec3& p) { return 1.0 - p.norm(); });
    const Mesh m = marching_cubes(grid, 0.3);
    const Camera cam = Camera{}.with_size(256, 256);
    for (auto _ : state) benchmark::DoNotOptimize(rasterize_mesh(m, cam));
}
BENCHMARK(BM_RasterizeMesh)->Unit(benchmark::kMillisecond);

}  // namespace
