#pragma once

#include "splat4d/camera.hpp"
#include "splat4d/mesh.hpp"
#include "splat4d/rasterizer.hpp"

#include <functional>
#include <vector>

namespace splat4d {

/// Visibility buffer of a triangle mesh: nearest face per pixel center.
struct MeshFragments {
    int width = 0;
    int height = 0;
    std::vector<int> face;     // -1 where nothing is hit
    std::vector<double> depth;  // camera z, +inf where nothing is hit
    std::vector<Vec3> bary;     // perspective-correct barycentrics

    [[nodiscard]] std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
};

/// Same pinhole model and pixel-center convention as the splat rasterizer.
/// Triangles with a vertex in front of the near plane are dropped. Equal
/// depths keep the lower face index.
[[nodiscard]] MeshFragments rasterize_mesh(const Mesh& mesh, const Camera& camera);

/// Flat, unlit texture lookup (bilinear, v up) over a background.
[[nodiscard]] Image shade_mesh(const MeshFragments& fragments, const UvLayout& uv, const Image& texture,
                               const Rgb& background = kWhite);

[[nodiscard]] Image render_mesh(const TexturedMesh& mesh, const Camera& camera, const Rgb& background = kWhite);

/// Adds d(Σ upstream · shade_mesh)/d(texture) to `d_texture`. Geometry is
/// treated as constant.
void shade_mesh_backward(const MeshFragments& fragments, const UvLayout& uv, const Image& upstream,
                         Image& d_texture);

/// Scene renderer used as the colour source for back-projection.
using SceneRenderer = std::function<Image(const Camera&)>;

struct BackprojectOptions {
    std::vector<Camera> views;     // empty: default_backprojection_views()
    double depth_tolerance = 0.01;  // scene units
    Rgb fill = Rgb::Constant(0.5);  // used only when no texel is seen at all
};

/// 8 azimuths × elevations ±30°.
[[nodiscard]] std::vector<Camera> default_backprojection_views(const Camera& base);

/// Texture for `uv` whose texels hold the cosine-weighted average of their
/// projections into every view that sees them; the rest copy their nearest
/// observed texel.
[[nodiscard]] Image backproject_colors(const Mesh& mesh, const UvLayout& uv, const SceneRenderer& scene,
                                       const BackprojectOptions& options = {});

}  // namespace splat4d
