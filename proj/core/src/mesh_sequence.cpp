#include "splat4d/mesh_sequence.hpp"

#include "splat4d/adam.hpp"
#include "splat4d/errors.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace splat4d {

TexturedMesh TexturedMeshSequence::textured(int frame) const {
    if (frame < 0 || frame >= frame_count()) throw RangeError("frame " + std::to_string(frame) + " out of range");
    const MeshFrame& f = frames[static_cast<std::size_t>(frame)];
    return {f.mesh, layouts.at(static_cast<std::size_t>(f.layout)), textures.at(static_cast<std::size_t>(f.texture))};
}

void TexturedMeshSequence::validate() const {
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const MeshFrame& f = frames[i];
        const std::string where = "frame " + std::to_string(i) + ": ";
        f.mesh.validate();
        if (f.layout < 0 || f.layout >= static_cast<int>(layouts.size())) throw DimensionError(where + "bad layout index");
        if (f.texture < 0 || f.texture >= static_cast<int>(textures.size())) {
            throw DimensionError(where + "bad texture index");
        }
        const UvLayout& uv = layouts[static_cast<std::size_t>(f.layout)];
        if (uv.uv_faces.size() != f.mesh.faces.size()) throw DimensionError(where + "layout face count differs");
        const Image& t = textures[static_cast<std::size_t>(f.texture)];
        if (t.width != uv.texture_size || t.height != uv.texture_size) {
            throw DimensionError(where + "texture size differs from its layout");
        }
    }
    for (const UvLayout& uv : layouts) {
        for (const Face& face : uv.uv_faces) {
            for (int c : face) {
                if (c < 0 || c >= static_cast<int>(uv.uvs.size())) throw DimensionError("UV face index out of range");
            }
        }
        for (const Vec2& t : uv.uvs) {
            if (!(t.x() >= 0.0 && t.x() <= 1.0 && t.y() >= 0.0 && t.y() <= 1.0)) {
                throw RangeError("UV coordinate outside [0,1]²");
            }
        }
    }
    for (const Image& t : textures) {
        if (std::any_of(t.data.begin(), t.data.end(), [](double v) { return !(v >= 0.0); })) {
            throw RangeError("texture has negative or non-finite texels");
        }
    }
}

double flipped_fraction(const Mesh& before, const Mesh& after) {
    if (before.faces != after.faces) throw DimensionError("flipped_fraction needs identical topology");
    if (before.faces.empty()) return 0.0;
    std::size_t flipped = 0;
    for (std::size_t f = 0; f < before.faces.size(); ++f) {
        if (face_normal(before, f).dot(face_normal(after, f)) < 0.0) ++flipped;
    }
    return static_cast<double>(flipped) / static_cast<double>(before.faces.size());
}

namespace {

SceneRenderer cloud_scene(const GaussianCloud& cloud, const Rgb& background) {
    return [&cloud, background](const Camera& c) { return render(cloud, c, background).rgb; };
}

BackprojectOptions views_for(const ExtractOptions& o) {
    BackprojectOptions b = o.backproject;
    if (b.views.empty()) b.views = default_backprojection_views(o.view);
    return b;
}

// Vertex positions moved by the deformation's position offset at τ.
Mesh advect(const Mesh& mesh, const DeformationModel& model, double tau) {
    GaussianCloud probe(mesh.vertices.size());
    probe.positions = mesh.vertices;
    const GaussianDelta d = compute_delta(probe, model.field, model.decoder, tau);
    Mesh out = mesh;
    for (std::size_t i = 0; i < out.vertices.size(); ++i) out.vertices[i] += d.d_position[i];
    return out;
}

}  // namespace

TexturedMeshSequence extract_sequence(const GaussianCloud& cloud, const DeformationModel* model,
                                      const ExtractOptions& o) {
    if (o.frames < 1) throw RangeError("extract_sequence needs at least one frame");
    if (!(o.max_flipped_fraction >= 0.0)) throw RangeError("max_flipped_fraction must be >= 0");
    const BackprojectOptions bp = views_for(o);

    TexturedMeshSequence seq;
    const Mesh canonical = marching_cubes(build_density_grid(cloud, o.grid_resolution, o.bounds), o.iso);
    seq.layouts.push_back(unwrap_uv(canonical, o.unwrap));
    seq.textures.push_back(backproject_colors(canonical, seq.layouts[0], cloud_scene(cloud, o.background), bp));

    for (int i = 0; i < o.frames; ++i) {
        MeshFrame frame;
        frame.tau = o.frames < 2 ? 0.0 : static_cast<double>(i) / (o.frames - 1);
        if (model == nullptr) {
            frame.mesh = canonical;
        } else {
            frame.mesh = advect(canonical, *model, frame.tau);
            if (flipped_fraction(canonical, frame.mesh) > o.max_flipped_fraction) {
                const GaussianCloud moved = deform(cloud, *model, frame.tau);
                frame.mesh = marching_cubes(build_density_grid(moved, o.grid_resolution, o.bounds), o.iso);
                frame.layout = static_cast<int>(seq.layouts.size());
                frame.texture = static_cast<int>(seq.textures.size());
                seq.layouts.push_back(unwrap_uv(frame.mesh, o.unwrap));
                seq.textures.push_back(
                    backproject_colors(frame.mesh, seq.layouts.back(), cloud_scene(moved, o.background), bp));
            }
        }
        seq.frames.push_back(std::move(frame));
    }
    return seq;
}

OrbitTrajectory make_orbit(int frames, const Camera& base, std::uint64_t seed, int iteration) {
    if (frames < 1) throw RangeError("orbit needs at least one frame");
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(iteration)));
    OrbitTrajectory t;
    t.start_azimuth = std::uniform_real_distribution<double>(0.0, 360.0)(rng);
    t.step = 360.0 / frames;
    for (int i = 0; i < frames; ++i) {
        Camera c = base;
        c.azimuth = std::fmod(t.start_azimuth + t.step * i, 360.0);
        c.elevation = 0.0;
        t.cameras.push_back(c);
    }
    return t;
}

TexturedMeshSequence untie_textures(const TexturedMeshSequence& seq) {
    TexturedMeshSequence out = seq;
    out.textures.clear();
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
        out.textures.push_back(seq.textures.at(static_cast<std::size_t>(seq.frames[i].texture)));
        out.frames[i].texture = static_cast<int>(i);
    }
    return out;
}

namespace {

void check_refine_options(const TextureRefineOptions& o) {
    if (o.iterations < 0) throw RangeError("refinement iterations must be >= 0");
    if (!(o.noise_level >= 0.0)) throw RangeError("refinement noise level must be >= 0");
    if (!(o.lr > 0.0)) throw RangeError("refinement learning rate must be positive");
    o.view.validate();
}

struct TextureAdam {
    std::vector<AdamState> states;
    std::vector<Image> grads;
    AdamHyper hyper;

    explicit TextureAdam(const TexturedMeshSequence& seq, double lr) {
        hyper.lr = lr;
        for (const Image& t : seq.textures) {
            states.emplace_back(t.data.size());
            grads.emplace_back(t.width, t.height, 0.0);
        }
    }

    void zero() {
        for (Image& g : grads) std::fill(g.data.begin(), g.data.end(), 0.0);
    }

    void step(TexturedMeshSequence& seq, const std::vector<int>& which) {
        for (int t : which) {
            const auto i = static_cast<std::size_t>(t);
            adam_step(seq.textures[i].data, grads[i].data, states[i], hyper);
            for (double& v : seq.textures[i].data) v = std::clamp(v, 0.0, 1.0);
        }
    }
};

void check_finite(double loss, int iteration) {
    if (!std::isfinite(loss)) {
        throw NumericalError("texture refinement loss is not finite at iteration " + std::to_string(iteration));
    }
}

// Renders `frames` of seq along `cameras`, refines them in one request and
// accumulates dL/dtexture into adam.grads. Returns the mean per-frame MSE.
double refine_once(const TexturedMeshSequence& seq, const std::vector<int>& frames,
                   const std::vector<Camera>& cameras, const VideoRefiner& refiner, const TextureRefineOptions& o,
                   int iteration, TextureAdam& adam) {
    const std::size_t n = frames.size();
    std::vector<MeshFragments> fragments;
    std::vector<Image> clean, noisy;
    std::vector<double> taus;
    const std::uint64_t noise_seed = mix_seed(o.seed, static_cast<std::uint64_t>(iteration));
    for (std::size_t k = 0; k < n; ++k) {
        const MeshFrame& f = seq.frames[static_cast<std::size_t>(frames[k])];
        fragments.push_back(rasterize_mesh(f.mesh, cameras[k]));
        clean.push_back(shade_mesh(fragments.back(), seq.layouts[static_cast<std::size_t>(f.layout)],
                                   seq.textures[static_cast<std::size_t>(f.texture)], o.background));
        noisy.push_back(add_noise(clean.back(), o.noise_level, noise_seed, static_cast<std::uint64_t>(frames[k])));
        taus.push_back(f.tau);
    }
    RefineRequest req;
    req.noisy = noisy;
    req.clean = clean;
    req.cameras = cameras;
    req.taus = taus;
    req.noise_level = o.noise_level;
    req.seed = o.seed;
    req.iteration = iteration;
    const std::vector<Image> refined = refiner.refine(req);
    if (refined.size() != n) throw DimensionError("refiner returned the wrong number of frames");

    double loss = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (!refined[k].same_shape(clean[k])) throw DimensionError("refiner changed the frame size");
        const double scale = 2.0 / (3.0 * static_cast<double>(clean[k].pixel_count()) * static_cast<double>(n));
        Image upstream(clean[k].width, clean[k].height, 0.0);
        for (std::size_t i = 0; i < upstream.data.size(); ++i) {
            upstream.data[i] = scale * (clean[k].data[i] - refined[k].data[i]);
        }
        loss += mse(clean[k], refined[k]) / static_cast<double>(n);
        const MeshFrame& f = seq.frames[static_cast<std::size_t>(frames[k])];
        shade_mesh_backward(fragments[k], seq.layouts[static_cast<std::size_t>(f.layout)], upstream,
                            adam.grads[static_cast<std::size_t>(f.texture)]);
    }
    check_finite(loss, iteration);
    for (const Image& g : adam.grads) {
        if (std::any_of(g.data.begin(), g.data.end(), [](double v) { return !std::isfinite(v); })) {
            throw NumericalError("texture gradient is not finite at iteration " + std::to_string(iteration));
        }
    }
    return loss;
}

}  // namespace

TexturedMeshSequence refine_textures(const TexturedMeshSequence& seq, const VideoRefiner& refiner,
                                     const TextureRefineOptions& o, const TextureRefineCallback& on_iteration) {
    check_refine_options(o);
    seq.validate();
    TexturedMeshSequence out = seq;
    if (out.frames.empty()) return out;
    TextureAdam adam(out, o.lr);
    std::vector<int> all_frames(out.frames.size());
    for (std::size_t i = 0; i < all_frames.size(); ++i) all_frames[i] = static_cast<int>(i);
    std::vector<int> all_textures(out.textures.size());
    for (std::size_t i = 0; i < all_textures.size(); ++i) all_textures[i] = static_cast<int>(i);

    for (int it = 0; it < o.iterations; ++it) {
        const OrbitTrajectory orbit = make_orbit(out.frame_count(), o.view, o.seed, it);
        adam.zero();
        const double loss = refine_once(out, all_frames, orbit.cameras, refiner, o, it, adam);
        adam.step(out, all_textures);
        if (on_iteration) on_iteration({it, loss});
    }
    return out;
}

TexturedMeshSequence refine_textures_per_frame(const TexturedMeshSequence& seq, const VideoRefiner& refiner,
                                               const TextureRefineOptions& o,
                                               const TextureRefineCallback& on_iteration) {
    check_refine_options(o);
    seq.validate();
    TexturedMeshSequence out = untie_textures(seq);
    if (out.frames.empty()) return out;
    TextureAdam adam(out, o.lr);
    for (int it = 0; it < o.iterations; ++it) {
        // same cameras as the joint path so the two differ only in coupling
        const OrbitTrajectory orbit = make_orbit(out.frame_count(), o.view, o.seed, it);
        adam.zero();
        double loss = 0.0;
        for (int i = 0; i < out.frame_count(); ++i) {
            loss += refine_once(out, {i}, {orbit.cameras[static_cast<std::size_t>(i)]}, refiner, o, it, adam) /
                    out.frame_count();
        }
        std::vector<int> all(out.textures.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
        adam.step(out, all);
        if (on_iteration) on_iteration({it, loss});
    }
    return out;
}

double frame_texel_variance(const TexturedMeshSequence& seq) {
    if (seq.frames.empty()) return 0.0;
    const int layout = seq.frames[0].layout;
    for (const MeshFrame& f : seq.frames) {
        if (f.layout != layout) throw DimensionError("frame_texel_variance needs one shared layout");
    }
    const std::size_t n = seq.textures.at(static_cast<std::size_t>(seq.frames[0].texture)).data.size();
    const double frames = static_cast<double>(seq.frames.size());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        // shifted by the first frame so identical frames give exactly zero
        const double v0 = seq.textures[static_cast<std::size_t>(seq.frames[0].texture)].data[i];
        double sum = 0.0, sq = 0.0;
        for (const MeshFrame& f : seq.frames) {
            const double v = seq.textures[static_cast<std::size_t>(f.texture)].data[i] - v0;
            sum += v;
            sq += v * v;
        }
        const double mean = sum / frames;
        total += std::max(0.0, sq / frames - mean * mean);
    }
    return total / static_cast<double>(n);
}

}  // namespace splat4d
