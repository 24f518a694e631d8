#pragma once

#include "splat4d/gaussians.hpp"
#include "splat4d/image.hpp"

#include <array>
#include <cstddef>
#include <functional>
#include <vector>

namespace splat4d {

using Face = std::array<int, 3>;

/// Triangle soup with shared vertices. Faces are counter-clockwise seen
/// from outside (normals point toward lower density).
struct Mesh {
    std::vector<Vec3> vertices;
    std::vector<Face> faces;

    [[nodiscard]] bool empty() const { return faces.empty(); }
    /// Throws DimensionError if a face indexes a missing vertex.
    void validate() const;
};

[[nodiscard]] Vec3 face_normal(const Mesh& mesh, std::size_t face);  // unnormalized, |n| = 2·area

/// Every undirected edge is used by exactly two faces, once in each
/// direction.
[[nodiscard]] bool is_two_manifold(const Mesh& mesh);

struct Box3 {
    Vec3 lo = Vec3::Constant(-1.0);
    Vec3 hi = Vec3::Constant(1.0);
};

/// Scalar samples at the centers of a G³ voxel grid over `bounds`.
struct DensityGrid {
    int resolution = 0;
    Box3 bounds;
    std::vector<double> values;  // x fastest, then y, then z

    DensityGrid() = default;
    DensityGrid(int resolution, const Box3& bounds);

    [[nodiscard]] double voxel_size(int axis) const { return (bounds.hi[axis] - bounds.lo[axis]) / resolution; }
    [[nodiscard]] Vec3 center(int i, int j, int k) const;
    [[nodiscard]] double& at(int i, int j, int k) {
        return values[(static_cast<std::size_t>(k) * resolution + j) * resolution + i];
    }
    [[nodiscard]] double at(int i, int j, int k) const {
        return values[(static_cast<std::size_t>(k) * resolution + j) * resolution + i];
    }

    /// Grid sampled from an analytic field.
    [[nodiscard]] static DensityGrid from_function(int resolution, const Box3& bounds,
                                                   const std::function<double(const Vec3&)>& f);
};

/// Σ sigmoid(opacity)·exp(−½ dᵀΣ⁻¹d) over Gaussians with dᵀΣ⁻¹d < 9 at each
/// voxel center. Throws RangeError for an empty cloud or resolution < 2.
[[nodiscard]] DensityGrid build_density_grid(const GaussianCloud& cloud, int resolution, const Box3& bounds = {});

/// Density of the cloud at one point, same kernel as build_density_grid.
[[nodiscard]] double density_at(const GaussianCloud& cloud, const Vec3& p);

/// Iso-surface of {value > iso}. Face ambiguities are resolved with the
/// asymptotic decider so neighbouring cubes agree and the surface is closed
/// wherever it does not leave the grid. An iso outside the value range
/// gives an empty mesh.
[[nodiscard]] Mesh marching_cubes(const DensityGrid& grid, double iso = 1.0);

/// Per-corner texture coordinates. uv_faces[f] indexes `uvs` for face f.
struct UvLayout {
    std::vector<Vec2> uvs;  // (u, v), v up as in OBJ
    std::vector<Face> uv_faces;
    std::vector<int> face_chart;                // -1 for skipped faces
    std::vector<std::size_t> skipped_faces;     // zero-area faces
    int charts = 0;
    int texture_size = 0;
};

struct UnwrapOptions {
    int texture_size = 1024;
    int gutter = 4;  // texels between charts and around the border
};

/// Charts from 6-way dominant-axis clustering of face normals (connected
/// components per axis), projected along their axis and shelf-packed.
[[nodiscard]] UvLayout unwrap_uv(const Mesh& mesh, const UnwrapOptions& options = {});

/// Fraction of texels whose centers fall inside some UV triangle.
[[nodiscard]] double texel_utilization(const UvLayout& uv);

struct TexturedMesh {
    Mesh mesh;
    UvLayout uv;
    Image texture;  // texture_size² RGB, row 0 at v = 1
};

/// Calls f(x, y, b0, b1, b2) for every texel center covered by UV triangle
/// `face`. Barycentrics are with respect to the triangle's corners.
void for_each_texel(const UvLayout& uv, std::size_t face,
                    const std::function<void(int, int, double, double, double)>& f);

}  // namespace splat4d
