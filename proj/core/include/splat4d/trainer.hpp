#pragma once

#include "splat4d/adam.hpp"
#include "splat4d/camera.hpp"
#include "splat4d/deformation.hpp"
#include "splat4d/gaussians.hpp"
#include "splat4d/guidance.hpp"
#include "splat4d/image.hpp"
#include "splat4d/rasterizer.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <vector>

namespace splat4d {

/// Orbit cameras drawn for guidance views.
struct ViewSampling {
    double azimuth_min = -180.0, azimuth_max = 180.0;
    double elevation_min = -30.0, elevation_max = 30.0;
    double radius = 2.0;
    double fov_y = 49.1;
    int render_size = 256;

    bool operator==(const ViewSampling&) const = default;
};

/// Per-group Adam learning rates for the static cloud. The position rate
/// decays exponentially from position_init to position_final over the run.
struct StaticLearningRates {
    double position_init = 0.001;
    double position_final = 0.00002;
    double color = 0.01 * 0.28209479177387814;  // SH-DC rate mapped to raw RGB
    double opacity = 0.05;
    double scale = 0.005;
    double rotation = 0.005;

    bool operator==(const StaticLearningRates&) const = default;
};

struct StaticFitConfig {
    int iterations = 500;
    int views_per_iteration = 16;
    Rgb background = Rgb(1.0, 1.0, 1.0);
    int initial_gaussians = 5000;
    double init_radius = 0.5;
    bool densify = true;
    int densify_interval = 100;
    double densify_grad_threshold = 0.05;
    double dense_percent = 0.1;
    /// Scene extent the dense-percent threshold is relative to.
    double scene_extent = 0.5;
    double prune_opacity = 0.01;
    /// Pruning never takes the cloud below this fraction of initial_gaussians.
    double min_keep_fraction = 0.1;
    NoiseSchedule t_schedule = kStaticSchedule;
    StaticLearningRates lr;
    ViewSampling views;
    double ref_weight = 1.0;
    double guidance_weight = 1.0;
    std::uint64_t seed = 0;

    /// Throws ConfigError on non-positive counts or thresholds.
    void validate() const;
    bool operator==(const StaticFitConfig&) const = default;
};

struct DynamicFitConfig {
    int iterations = 200;
    int views_per_timestep = 4;
    NoiseSchedule t_schedule = kDynamicSchedule;
    bool freeze_static = true;
    double grid_lr = 0.0064;
    double mlp_lr = 0.00064;
    /// Used only when freeze_static is false.
    StaticLearningRates static_lr;
    int spatial_resolution = 32;
    int temporal_resolution = 32;
    int feature_dim = 32;
    int hidden_dim = 64;
    SpaceTimeBox domain;
    Rgb background = Rgb(1.0, 1.0, 1.0);
    ViewSampling views;
    double ref_weight = 1.0;
    double guidance_weight = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const DynamicFitConfig&) const = default;
};

/// 𝒯 reference frames seen from one camera; frame i sits at τ = i/(𝒯−1).
struct DrivingVideo {
    std::vector<Image> frames;
    Camera reference_camera;

    [[nodiscard]] int frame_count() const { return static_cast<int>(frames.size()); }
    [[nodiscard]] double tau(int frame) const;
    /// Throws DimensionError on fewer than two frames or mixed resolutions.
    void validate() const;
};

struct IterationLog {
    std::string stage;
    int iteration = 0;
    double ref_loss = 0.0;
    /// Mean squared guidance gradient per pixel, a scale-free progress proxy.
    double guidance_energy = 0.0;
    double noise_level = 0.0;
    double tau = 0.0;
    std::size_t gaussians = 0;
    double wall_seconds = 0.0;
};
using IterationCallback = std::function<void(const IterationLog&)>;

/// Gradients for everything a step may update.
struct SceneGradients {
    RenderGradients cloud;
    DeformationGradients deformation;
    double loss = 0.0;
};

/// Reference-view MSE averaged over frames:
/// (1/𝒯) Σ_τ mean((render(φ(S, τ), o_Ref) − I_τ)²). Gradients flow to the
/// field and decoder and, through the deformation, to the cloud.
[[nodiscard]] SceneGradients loss_ref(const GaussianCloud& cloud, const DeformationModel& model,
                                      const DrivingVideo& video, const Rgb& background);

/// Samples `views` cameras, asks the provider for a gradient image on each
/// render of φ(S, τ) and chains it back. `model` may be null for a static
/// scene. Each view's gradient image is divided by (3·H·W·views).
[[nodiscard]] SceneGradients sds_step(const GaussianCloud& cloud, const DeformationModel* model, double tau,
                                      const GuidanceProvider& provider, const NoiseSchedule& schedule,
                                      int iteration, int views, const ViewSampling& sampling,
                                      const Rgb& background, std::uint64_t seed,
                                      const Image* reference = nullptr);

/// The cameras sds_step uses for (seed, iteration).
[[nodiscard]] std::vector<Camera> sample_views(const ViewSampling& sampling, int views, std::uint64_t seed,
                                               int iteration);

/// `count` Gaussians uniform in a ball: identity rotation, opacity 0.1, grey
/// color, scale from the mean squared distance to the 3 nearest neighbours.
[[nodiscard]] GaussianCloud initialize_cloud(int count, double radius, std::uint64_t seed);

struct StaticFitInput {
    Image reference;
    Camera reference_camera;
    std::shared_ptr<const GuidanceProvider> guidance;  // null: reference loss only
};

[[nodiscard]] GaussianCloud fit_static(const StaticFitInput& input, const StaticFitConfig& config,
                                       const IterationCallback& on_iteration = {});

struct DynamicFitResult {
    DeformationModel model;
    GaussianCloud cloud;  // equals the input when freeze_static is set
    double final_ref_loss = 0.0;
};

[[nodiscard]] DynamicFitResult fit_dynamic(const GaussianCloud& cloud, const DrivingVideo& video,
                                           std::shared_ptr<const GuidanceProvider> provider,
                                           const DynamicFitConfig& config,
                                           const IterationCallback& on_iteration = {});

/// Adam state for every per-Gaussian parameter group.
struct CloudOptimizer {
    AdamState positions, rotations, log_scales, opacity_logits, colors;

    explicit CloudOptimizer(std::size_t n = 0);
    void step(GaussianCloud& cloud, const RenderGradients& g, const StaticLearningRates& lr, double position_lr);
    /// Rebuilds moments after densification: `source[i]` is the old index of
    /// new Gaussian i, or -1 for a fresh Gaussian with zero moments.
    void remap(const std::vector<std::ptrdiff_t>& source);
};

struct DensifyStats {
    std::vector<double> grad_sum;
    std::vector<int> count;

    explicit DensifyStats(std::size_t n = 0) : grad_sum(n, 0.0), count(n, 0) {}
    void add(const RenderGradients& g, double scale);
};

struct DensifyResult {
    std::size_t cloned = 0, split = 0, pruned = 0;
    std::vector<std::ptrdiff_t> source;  // see CloudOptimizer::remap
};

/// Clone (small) or split (large) Gaussians whose mean screen gradient
/// reaches the threshold, then prune opacity below `prune_opacity` without
/// going under `min_count`.
DensifyResult densify_and_prune(GaussianCloud& cloud, const DensifyStats& stats, const StaticFitConfig& config,
                                std::size_t min_count, std::mt19937_64& rng);

}  // namespace splat4d
