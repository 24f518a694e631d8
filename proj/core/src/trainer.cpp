#include "splat4d/trainer.hpp"

#include "splat4d/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

namespace splat4d {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
}

void check_views(const ViewSampling& v) {
    require(v.render_size >= 1, "render_size must be >= 1");
    require(v.radius > 0.0, "camera radius must be positive");
    require(v.fov_y > 0.0 && v.fov_y < 180.0, "fov_y must be in (0, 180)");
    require(v.azimuth_min <= v.azimuth_max, "azimuth range is empty");
    require(v.elevation_min <= v.elevation_max, "elevation range is empty");
}

void check_schedule(const NoiseSchedule& s) {
    require(s.t_start > 0.0 && s.t_start <= 1.0 && s.t_end > 0.0 && s.t_end <= 1.0,
            "noise levels must lie in (0, 1]");
    require(s.total_iterations >= 0, "schedule length must be >= 0");
}

void check_finite(double loss, const char* stage, int iteration) {
    if (!std::isfinite(loss)) {
        throw NumericalError(std::string(stage) + ": non-finite loss at iteration " + std::to_string(iteration));
    }
}

template <typename Vec>
bool all_finite(const std::vector<Vec>& v) {
    return std::all_of(v.begin(), v.end(), [](const Vec& x) { return x.allFinite(); });
}

bool all_finite(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void check_finite(const RenderGradients& g, const char* stage, int iteration) {
    if (!all_finite(g.positions) || !all_finite(g.rotations) || !all_finite(g.log_scales) ||
        !all_finite(g.opacity_logits) || !all_finite(g.colors)) {
        throw NumericalError(std::string(stage) + ": non-finite gradient at iteration " + std::to_string(iteration));
    }
}

// Mean-MSE gradient image 2(Î − I)·weight / (3HW).
Image mse_upstream(const Image& rendered, const Image& target, double weight) {
    if (!rendered.same_shape(target)) {
        throw DimensionError("reference image is " + std::to_string(target.width) + "x" +
                             std::to_string(target.height) + ", render is " + std::to_string(rendered.width) +
                             "x" + std::to_string(rendered.height));
    }
    Image g(rendered.width, rendered.height);
    const double s = 2.0 * weight / static_cast<double>(rendered.data.size());
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = s * (rendered.data[i] - target.data[i]);
    return g;
}

// Gradient on the static cloud given gradients on φ(S, τ) and the
// deformation's own position gradient.
void pull_back_to_static(const GaussianCloud& cloud, const GaussianDelta& delta, RenderGradients& g,
                         const DeformationGradients& deformation) {
    const GaussianDelta gd = apply_delta_backward(cloud, delta, g);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        g.positions[i] += deformation.positions[i];
        g.rotations[i] = gd.d_rotation[i];
    }
}

double position_lr_at(const StaticLearningRates& lr, int iteration, int total) {
    if (total <= 0) return lr.position_init;
    const double r = std::clamp(static_cast<double>(iteration) / total, 0.0, 1.0);
    return std::exp(std::log(lr.position_init) * (1.0 - r) + std::log(lr.position_final) * r);
}

}  // namespace

void StaticFitConfig::validate() const {
    require(iterations >= 0, "static.iterations must be >= 0");
    require(views_per_iteration >= 0, "static.views_per_iteration must be >= 0");
    require(initial_gaussians >= 1, "static.initial_gaussians must be >= 1");
    require(init_radius > 0.0, "static.init_radius must be positive");
    require(densify_interval >= 1, "static.densify_interval must be >= 1");
    require(densify_grad_threshold > 0.0, "static.densify_grad_threshold must be positive");
    require(dense_percent > 0.0, "static.dense_percent must be positive");
    require(scene_extent > 0.0, "static.scene_extent must be positive");
    require(prune_opacity >= 0.0 && prune_opacity < 1.0, "static.prune_opacity must be in [0, 1)");
    require(min_keep_fraction > 0.0 && min_keep_fraction <= 1.0, "static.min_keep_fraction must be in (0, 1]");
    require(lr.position_init > 0.0 && lr.position_final > 0.0, "position learning rates must be positive");
    check_schedule(t_schedule);
    check_views(views);
}

void DynamicFitConfig::validate() const {
    require(iterations >= 0, "dynamic.iterations must be >= 0");
    require(views_per_timestep >= 0, "dynamic.views_per_timestep must be >= 0");
    require(grid_lr > 0.0 && mlp_lr > 0.0, "dynamic learning rates must be positive");
    require(spatial_resolution >= 2 && temporal_resolution >= 2, "HexPlane resolutions must be >= 2");
    require(feature_dim >= 1 && hidden_dim >= 1, "HexPlane feature and hidden sizes must be >= 1");
    check_schedule(t_schedule);
    check_views(views);
}

double DrivingVideo::tau(int frame) const {
    const int n = frame_count();
    if (frame < 0 || frame >= n) throw RangeError("frame index " + std::to_string(frame) + " out of range");
    return n < 2 ? 0.0 : static_cast<double>(frame) / (n - 1);
}

void DrivingVideo::validate() const {
    if (frames.size() < 2) {
        throw DimensionError("driving video needs at least 2 frames, got " + std::to_string(frames.size()));
    }
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (!frames[i].same_shape(frames[0])) {
            throw DimensionError("frame " + std::to_string(i) + " is " + std::to_string(frames[i].width) + "x" +
                                 std::to_string(frames[i].height) + ", frame 0 is " +
                                 std::to_string(frames[0].width) + "x" + std::to_string(frames[0].height));
        }
    }
    if (frames[0].width != reference_camera.width || frames[0].height != reference_camera.height) {
        throw DimensionError("reference camera resolution differs from the video");
    }
}

SceneGradients loss_ref(const GaussianCloud& cloud, const DeformationModel& model, const DrivingVideo& video,
                        const Rgb& background) {
    video.validate();
    SceneGradients out;
    out.cloud = RenderGradients(cloud.size());
    out.deformation = DeformationGradients(model, cloud.size());
    const double inv_t = 1.0 / video.frame_count();
    for (int f = 0; f < video.frame_count(); ++f) {
        const double tau = video.tau(f);
        const GaussianDelta delta = compute_delta(cloud, model.field, model.decoder, tau);
        const GaussianCloud deformed = apply_delta(cloud, delta);
        const RenderOutput r = render(deformed, video.reference_camera, background);
        out.loss += mse(r.rgb, video.frames[f]) * inv_t;
        const Image up = mse_upstream(r.rgb, video.frames[f], inv_t);
        RenderGradients g = render_backward(deformed, video.reference_camera, background, up);
        const GaussianDelta gd = apply_delta_backward(cloud, delta, g);
        DeformationGradients dg(model, cloud.size());
        accumulate_query_gradients(model.field, model.decoder, cloud, tau, gd, dg);
        pull_back_to_static(cloud, delta, g, dg);
        out.cloud += g;
        for (std::size_t k = 0; k < dg.field.size(); ++k) out.deformation.field[k] += dg.field[k];
        for (std::size_t k = 0; k < dg.decoder.size(); ++k) out.deformation.decoder[k] += dg.decoder[k];
    }
    // positions in out.cloud already include the field-lookup term
    std::fill(out.deformation.positions.begin(), out.deformation.positions.end(), Vec3::Zero());
    return out;
}

std::vector<Camera> sample_views(const ViewSampling& s, int views, std::uint64_t seed, int iteration) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(iteration)));
    std::uniform_real_distribution<double> az(s.azimuth_min, s.azimuth_max);
    std::uniform_real_distribution<double> el(s.elevation_min, s.elevation_max);
    std::vector<Camera> cams;
    cams.reserve(static_cast<std::size_t>(std::max(views, 0)));
    for (int v = 0; v < views; ++v) {
        Camera c;
        c.azimuth = az(rng);
        c.elevation = el(rng);
        c.radius = s.radius;
        c.fov_y = s.fov_y;
        c.width = c.height = s.render_size;
        cams.push_back(c);
    }
    return cams;
}

namespace {

// Guidance over sampled views on an already deformed cloud. Returns the
// gradient on the deformed cloud and the mean guidance energy.
RenderGradients guidance_views(const GaussianCloud& deformed, double tau, const GuidanceProvider& provider,
                               double noise_level, int iteration, const std::vector<Camera>& cams,
                               const Rgb& background, std::uint64_t seed, const Image* reference, double weight,
                               DensifyStats* stats, double* energy) {
    RenderGradients total(deformed.size());
    double e = 0.0;
    for (std::size_t v = 0; v < cams.size(); ++v) {
        const RenderOutput r = render(deformed, cams[v], background);
        GuidanceRequest req;
        req.rendered = &r.rgb;
        req.camera = cams[v];
        req.reference = reference;
        req.noise_level = noise_level;
        req.tau = tau;
        req.seed = mix_seed(seed, static_cast<std::uint64_t>(iteration) * 4096 + v);
        req.iteration = iteration;
        req.view = static_cast<int>(v);
        Image g = provider.gradient(req);
        if (!g.same_shape(r.rgb)) throw DimensionError("guidance gradient has the wrong size");
        double sq = 0.0;
        for (double x : g.data) sq += x * x;
        e += sq / static_cast<double>(g.data.size());
        const double norm = static_cast<double>(g.data.size()) * static_cast<double>(cams.size());
        for (double& x : g.data) x *= weight / norm;
        const RenderGradients rg = render_backward(deformed, cams[v], background, g);
        if (stats != nullptr) stats->add(rg, norm);
        total += rg;
    }
    if (energy != nullptr) *energy = cams.empty() ? 0.0 : e / static_cast<double>(cams.size());
    return total;
}

}  // namespace

SceneGradients sds_step(const GaussianCloud& cloud, const DeformationModel* model, double tau,
                        const GuidanceProvider& provider, const NoiseSchedule& schedule, int iteration, int views,
                        const ViewSampling& sampling, const Rgb& background, std::uint64_t seed,
                        const Image* reference) {
    const double t = noise_at(schedule, iteration);
    const std::vector<Camera> cams = sample_views(sampling, views, seed, iteration);
    SceneGradients out;
    if (model == nullptr) {
        out.cloud = guidance_views(cloud, tau, provider, t, iteration, cams, background, seed, reference, 1.0,
                                   nullptr, &out.loss);
        return out;
    }
    const GaussianDelta delta = compute_delta(cloud, model->field, model->decoder, tau);
    const GaussianCloud deformed = apply_delta(cloud, delta);
    out.cloud = guidance_views(deformed, tau, provider, t, iteration, cams, background, seed, reference, 1.0,
                               nullptr, &out.loss);
    const GaussianDelta gd = apply_delta_backward(cloud, delta, out.cloud);
    out.deformation = query_gradients(model->field, model->decoder, cloud, tau, gd);
    pull_back_to_static(cloud, delta, out.cloud, out.deformation);
    std::fill(out.deformation.positions.begin(), out.deformation.positions.end(), Vec3::Zero());
    return out;
}

GaussianCloud initialize_cloud(int count, double radius, std::uint64_t seed) {
    if (count < 1) throw RangeError("initialize_cloud needs at least one Gaussian");
    std::mt19937_64 rng(mix_seed(seed, 0x1417));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Vec3> pts(static_cast<std::size_t>(count));
    for (Vec3& p : pts) {
        const double phi = u(rng) * 2.0 * 3.14159265358979323846;
        const double cos_theta = u(rng) * 2.0 - 1.0;
        const double r = radius * std::cbrt(u(rng));
        const double sin_theta = std::sqrt(std::max(0.0, 1.0 - cos_theta * cos_theta));
        p = Vec3(r * sin_theta * std::cos(phi), r * sin_theta * std::sin(phi), r * cos_theta);
    }
    GaussianCloud cloud;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        std::array<double, 3> best{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                                   std::numeric_limits<double>::infinity()};
        for (std::size_t j = 0; j < pts.size(); ++j) {
            if (j == i) continue;
            const double d = (pts[i] - pts[j]).squaredNorm();
            if (d < best[2]) {
                best[2] = d;
                std::sort(best.begin(), best.end());
            }
        }
        double mean_sq = 0.0;
        int k = 0;
        for (double d : best) {
            if (std::isfinite(d)) {
                mean_sq += d;
                ++k;
            }
        }
        mean_sq = k > 0 ? mean_sq / k : radius * radius;
        const double log_s = std::log(std::sqrt(std::max(mean_sq, 1e-7)));
        const Vec3 color = Vec3::Constant(0.5) + 0.28209479177387814 / 255.0 * Vec3(u(rng), u(rng), u(rng));
        cloud.push_back(pts[i], Vec4(1, 0, 0, 0), Vec3::Constant(log_s), logit(0.1), color);
    }
    return cloud;
}

CloudOptimizer::CloudOptimizer(std::size_t n)
    : positions(3 * n), rotations(4 * n), log_scales(3 * n), opacity_logits(n), colors(3 * n) {}

void CloudOptimizer::step(GaussianCloud& cloud, const RenderGradients& g, const StaticLearningRates& lr,
                          double position_lr) {
    adam_step(flat(cloud.positions), flat(g.positions), positions, {.lr = position_lr});
    adam_step(flat(cloud.rotations), flat(g.rotations), rotations, {.lr = lr.rotation});
    adam_step(flat(cloud.log_scales), flat(g.log_scales), log_scales, {.lr = lr.scale});
    adam_step(cloud.opacity_logits, g.opacity_logits, opacity_logits, {.lr = lr.opacity});
    adam_step(flat(cloud.colors), flat(g.colors), colors, {.lr = lr.color});
    for (Vec3& c : cloud.colors) c = c.cwiseMax(0.0).cwiseMin(1.0);
}

void CloudOptimizer::remap(const std::vector<std::ptrdiff_t>& source) {
    auto remap_one = [&](AdamState& s, std::size_t width) {
        AdamState out(source.size() * width);
        out.step = s.step;
        for (std::size_t i = 0; i < source.size(); ++i) {
            if (source[i] < 0) continue;
            const auto from = static_cast<std::size_t>(source[i]);
            for (std::size_t k = 0; k < width; ++k) {
                out.m[i * width + k] = s.m[from * width + k];
                out.v[i * width + k] = s.v[from * width + k];
            }
        }
        s = std::move(out);
    };
    remap_one(positions, 3);
    remap_one(rotations, 4);
    remap_one(log_scales, 3);
    remap_one(opacity_logits, 1);
    remap_one(colors, 3);
}

void DensifyStats::add(const RenderGradients& g, double scale) {
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!g.visible[i]) continue;
        grad_sum[i] += g.screen_grad_norm[i] * scale;
        ++count[i];
    }
}

DensifyResult densify_and_prune(GaussianCloud& cloud, const DensifyStats& stats, const StaticFitConfig& config,
                                std::size_t min_count, std::mt19937_64& rng) {
    const std::size_t n = cloud.size();
    DensifyResult res;
    const double size_limit = config.dense_percent * config.scene_extent;
    std::vector<char> selected(n, 0), split(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (stats.count[i] == 0) continue;
        if (stats.grad_sum[i] / stats.count[i] < config.densify_grad_threshold) continue;
        selected[i] = 1;
        split[i] = cloud.log_scales[i].array().exp().maxCoeff() > size_limit ? 1 : 0;
    }

    GaussianCloud out;
    std::vector<std::ptrdiff_t> source;
    for (std::size_t i = 0; i < n; ++i) {
        if (split[i]) continue;
        out.push_back(cloud.positions[i], cloud.rotations[i], cloud.log_scales[i], cloud.opacity_logits[i],
                      cloud.colors[i]);
        source.push_back(static_cast<std::ptrdiff_t>(i));
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!selected[i] || split[i]) continue;
        out.push_back(cloud.positions[i], cloud.rotations[i], cloud.log_scales[i], cloud.opacity_logits[i],
                      cloud.colors[i]);
        source.push_back(-1);
        ++res.cloned;
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    const double shrink = std::log(0.8 * 2.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!split[i]) continue;
        const Mat3 r = quaternion_to_matrix(normalize_quaternion(cloud.rotations[i]));
        const Vec3 s = cloud.log_scales[i].array().exp();
        for (int c = 0; c < 2; ++c) {
            const Vec3 offset = r * s.cwiseProduct(Vec3(normal(rng), normal(rng), normal(rng)));
            out.push_back(cloud.positions[i] + offset, cloud.rotations[i], cloud.log_scales[i] - Vec3::Constant(shrink),
                          cloud.opacity_logits[i], cloud.colors[i]);
            source.push_back(-1);
        }
        ++res.split;
    }

    // Prune transparent Gaussians, lowest opacity first, never below min_count.
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out.opacity(i) < config.prune_opacity) candidates.push_back(i);
    }
    const std::size_t allowed = out.size() > min_count ? out.size() - min_count : 0;
    if (candidates.size() > allowed) {
        std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
            return out.opacity_logits[a] < out.opacity_logits[b];
        });
        candidates.resize(allowed);
    }
    std::vector<bool> keep(out.size(), true);
    for (std::size_t i : candidates) keep[i] = false;
    std::vector<std::ptrdiff_t> kept_source;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (keep[i]) kept_source.push_back(source[i]);
    }
    out.filter(keep);
    res.pruned = candidates.size();
    res.source = std::move(kept_source);
    cloud = std::move(out);
    return res;
}

GaussianCloud fit_static(const StaticFitInput& input, const StaticFitConfig& config,
                         const IterationCallback& on_iteration) {
    config.validate();
    if (input.reference.width != input.reference_camera.width ||
        input.reference.height != input.reference_camera.height) {
        throw DimensionError("reference image does not match the reference camera resolution");
    }
    const auto start = Clock::now();
    GaussianCloud cloud = initialize_cloud(config.initial_gaussians, config.init_radius, config.seed);
    const auto min_count = static_cast<std::size_t>(
        std::ceil(config.min_keep_fraction * static_cast<double>(config.initial_gaussians)));
    CloudOptimizer opt(cloud.size());
    DensifyStats stats(cloud.size());
    std::mt19937_64 split_rng(mix_seed(config.seed, 0x5b11));
    NoiseSchedule schedule = config.t_schedule;
    schedule.total_iterations = config.iterations;
    const Image* reference = &input.reference;

    for (int it = 0; it < config.iterations; ++it) {
        const RenderOutput r = render(cloud, input.reference_camera, config.background);
        const double ref_loss = mse(r.rgb, input.reference);
        check_finite(ref_loss, "fit_static", it);
        const Image up = mse_upstream(r.rgb, input.reference, config.ref_weight);
        RenderGradients g = render_backward(cloud, input.reference_camera, config.background, up);
        stats.add(g, static_cast<double>(up.data.size()) / config.ref_weight);

        const double t = noise_at(schedule, it);
        double energy = 0.0;
        if (input.guidance && config.views_per_iteration > 0) {
            const std::vector<Camera> cams = sample_views(config.views, config.views_per_iteration, config.seed, it);
            g += guidance_views(cloud, 0.0, *input.guidance, t, it, cams, config.background, config.seed, reference,
                                config.guidance_weight, &stats, &energy);
        }
        check_finite(g, "fit_static", it);
        opt.step(cloud, g, config.lr, position_lr_at(config.lr, it, config.iterations));

        if (config.densify && (it + 1) % config.densify_interval == 0 && it + 1 < config.iterations) {
            const DensifyResult d = densify_and_prune(cloud, stats, config, min_count, split_rng);
            opt.remap(d.source);
            stats = DensifyStats(cloud.size());
        }
        if (on_iteration) {
            on_iteration({"static", it, ref_loss, energy, t, 0.0, cloud.size(), seconds_since(start)});
        }
    }
    return cloud;
}

DynamicFitResult fit_dynamic(const GaussianCloud& cloud_in, const DrivingVideo& video,
                             std::shared_ptr<const GuidanceProvider> provider, const DynamicFitConfig& config,
                             const IterationCallback& on_iteration) {
    config.validate();
    video.validate();
    const auto start = Clock::now();
    DynamicFitResult res;
    res.cloud = cloud_in;
    res.model = DeformationModel::create(config.spatial_resolution, config.temporal_resolution, config.feature_dim,
                                         config.hidden_dim, mix_seed(config.seed, 0x4e7), config.domain);
    GaussianCloud& cloud = res.cloud;
    DeformationModel& model = res.model;
    AdamState field_state(model.field.values().size());
    AdamState decoder_state(model.decoder.parameter_count());
    CloudOptimizer cloud_opt(cloud.size());
    NoiseSchedule schedule = config.t_schedule;
    schedule.total_iterations = config.iterations;

    for (int it = 0; it < config.iterations; ++it) {
        std::mt19937_64 frame_rng(mix_seed(config.seed ^ 0xf7a3e5ULL, static_cast<std::uint64_t>(it)));
        const int frame = std::uniform_int_distribution<int>(0, video.frame_count() - 1)(frame_rng);
        const double tau = video.tau(frame);
        const Image& target = video.frames[static_cast<std::size_t>(frame)];

        const GaussianDelta delta = compute_delta(cloud, model.field, model.decoder, tau);
        const GaussianCloud deformed = apply_delta(cloud, delta);
        const RenderOutput r = render(deformed, video.reference_camera, config.background);
        const double ref_loss = mse(r.rgb, target);
        check_finite(ref_loss, "fit_dynamic", it);
        RenderGradients g = render_backward(deformed, video.reference_camera, config.background,
                                            mse_upstream(r.rgb, target, config.ref_weight));
        const double t = noise_at(schedule, it);
        double energy = 0.0;
        if (provider && config.views_per_timestep > 0) {
            const std::vector<Camera> cams = sample_views(config.views, config.views_per_timestep, config.seed, it);
            g += guidance_views(deformed, tau, *provider, t, it, cams, config.background, config.seed, &target,
                                config.guidance_weight, nullptr, &energy);
        }
        check_finite(g, "fit_dynamic", it);
        const GaussianDelta gd = apply_delta_backward(cloud, delta, g);
        DeformationGradients dg = query_gradients(model.field, model.decoder, cloud, tau, gd);
        if (!all_finite(dg.field) || !all_finite(dg.decoder)) {
            throw NumericalError("fit_dynamic: non-finite deformation gradient at iteration " + std::to_string(it));
        }
        adam_step(model.field.values(), dg.field, field_state, {.lr = config.grid_lr});
        adam_step(model.decoder.parameters(), dg.decoder, decoder_state, {.lr = config.mlp_lr});
        if (!config.freeze_static) {
            pull_back_to_static(cloud, delta, g, dg);
            cloud_opt.step(cloud, g, config.static_lr,
                           position_lr_at(config.static_lr, it, config.iterations));
        }
        if (on_iteration) {
            on_iteration({"dynamic", it, ref_loss, energy, t, tau, cloud.size(), seconds_since(start)});
        }
    }

    double final_loss = 0.0;
    for (int f = 0; f < video.frame_count(); ++f) {
        const RenderOutput r = render(deform(cloud, model, video.tau(f)), video.reference_camera, config.background);
        final_loss += mse(r.rgb, video.frames[static_cast<std::size_t>(f)]);
    }
    res.final_ref_loss = final_loss / video.frame_count();
    return res;
}

}  // namespace splat4d
