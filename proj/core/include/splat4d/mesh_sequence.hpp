#pragma once

#include "splat4d/deformation.hpp"
#include "splat4d/guidance.hpp"
#include "splat4d/mesh.hpp"
#include "splat4d/mesh_render.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace splat4d {

struct MeshFrame {
    Mesh mesh;
    double tau = 0.0;
    int layout = 0;   // index into TexturedMeshSequence::layouts
    int texture = 0;  // index into TexturedMeshSequence::textures
};

/// Per-frame meshes. Frames that share topology share a UV layout; a
/// texture may be shared by several frames (one texture for the whole
/// sequence is the joint-refinement case).
struct TexturedMeshSequence {
    std::vector<MeshFrame> frames;
    std::vector<UvLayout> layouts;
    std::vector<Image> textures;

    [[nodiscard]] int frame_count() const { return static_cast<int>(frames.size()); }
    [[nodiscard]] TexturedMesh textured(int frame) const;
    /// Throws DimensionError on bad indices, a layout that does not match its
    /// mesh, or a texture of the wrong size; RangeError on UVs outside [0,1]²
    /// or negative texels.
    void validate() const;
};

struct ExtractOptions {
    int frames = 14;
    int grid_resolution = 128;
    Box3 bounds;
    double iso = 1.0;
    UnwrapOptions unwrap;
    BackprojectOptions backproject;
    Camera view = Camera{}.with_size(256, 256);  // size/radius/fov of back-projection views
    Rgb background = Rgb(1.0, 1.0, 1.0);
    /// Advected frames with more flipped faces than this are re-extracted.
    double max_flipped_fraction = 0.05;
};

/// Extracts the canonical mesh from `cloud`, advects its vertices with the
/// deformation at τ = i/(frames−1) and paints one shared texture from the
/// canonical scene. Frames whose advected mesh flips too many faces get
/// their own extraction, layout and texture. `model` may be null (static).
[[nodiscard]] TexturedMeshSequence extract_sequence(const GaussianCloud& cloud, const DeformationModel* model,
                                                    const ExtractOptions& options = {});

/// Fraction of faces whose normal reverses between two vertex sets of the
/// same topology.
[[nodiscard]] double flipped_fraction(const Mesh& before, const Mesh& after);

/// Constant-speed orbit at elevation 0 from a random start azimuth.
struct OrbitTrajectory {
    double start_azimuth = 0.0;  // degrees
    double step = 0.0;           // degrees per frame
    std::vector<Camera> cameras;
};

/// Start azimuth drawn from U[0, 360) keyed by (seed, iteration); the orbit
/// covers 360° over `frames` frames.
[[nodiscard]] OrbitTrajectory make_orbit(int frames, const Camera& base, std::uint64_t seed, int iteration);

struct TextureRefineOptions {
    int iterations = 50;
    double noise_level = 0.7;
    double lr = 0.01;
    Camera view = Camera{}.with_size(256, 256);
    Rgb background = Rgb(1.0, 1.0, 1.0);
    std::uint64_t seed = 0;
};

struct TextureRefineLog {
    int iteration = 0;
    double loss = 0.0;  // mean squared error per pixel, channel and frame
};
using TextureRefineCallback = std::function<void(const TextureRefineLog&)>;

/// Joint refinement: every iteration renders all frames along one orbit,
/// sends the noisy video to the refiner in a single request and takes an
/// Adam step on all textures at once. Geometry is frozen.
[[nodiscard]] TexturedMeshSequence refine_textures(const TexturedMeshSequence& seq, const VideoRefiner& refiner,
                                                   const TextureRefineOptions& options = {},
                                                   const TextureRefineCallback& on_iteration = {});

/// Per-frame baseline: textures are untied and each frame is refined with
/// its own single-frame requests.
[[nodiscard]] TexturedMeshSequence refine_textures_per_frame(const TexturedMeshSequence& seq,
                                                             const VideoRefiner& refiner,
                                                             const TextureRefineOptions& options = {},
                                                             const TextureRefineCallback& on_iteration = {});

/// Gives every frame its own copy of its texture.
[[nodiscard]] TexturedMeshSequence untie_textures(const TexturedMeshSequence& seq);

/// Mean over texels and channels of the variance across frames. All frames
/// must share one layout.
[[nodiscard]] double frame_texel_variance(const TexturedMeshSequence& seq);

}  // namespace splat4d
