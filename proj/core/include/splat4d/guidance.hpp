#pragma once

#include "splat4d/camera.hpp"
#include "splat4d/gaussians.hpp"
#include "splat4d/image.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace splat4d {

/// Linear noise-level schedule over [0, total_iterations].
struct NoiseSchedule {
    double t_start = 0.98;
    double t_end = 0.02;
    int total_iterations = 500;

    bool operator==(const NoiseSchedule&) const = default;
};

inline constexpr NoiseSchedule kStaticSchedule{0.98, 0.02, 500};
inline constexpr NoiseSchedule kDynamicSchedule{0.5, 0.02, 200};
inline constexpr NoiseSchedule kRefineSchedule{0.7, 0.7, 50};

/// Noise level at `iteration`; the endpoints return t_start and t_end
/// exactly. Throws RangeError outside [0, total_iterations].
[[nodiscard]] double noise_at(const NoiseSchedule& schedule, int iteration);

/// Everything a guidance provider may look at for one sampled view.
struct GuidanceRequest {
    const Image* rendered = nullptr;
    Camera camera;
    const Image* reference = nullptr;  // may be null
    double noise_level = 0.0;
    double tau = 0.0;
    std::uint64_t seed = 0;
    int iteration = 0;
    int view = 0;
};

/// Stand-in for the diffusion noise predictor: returns dL/dÎ for one view.
/// Implementations must be deterministic and safe to call concurrently.
class GuidanceProvider {
public:
    virtual ~GuidanceProvider() = default;
    [[nodiscard]] virtual Image gradient(const GuidanceRequest& request) const = 0;
};

/// Ground-truth image for a camera at time τ. Throws CoverageError when the
/// view is not available.
using FrameSource = std::function<Image(const Camera&, double tau)>;

/// Renders a fixed cloud (every τ sees the same scene).
[[nodiscard]] FrameSource render_source(GaussianCloud target, const Rgb& background);
/// Renders a time-varying cloud.
[[nodiscard]] FrameSource render_source(std::function<GaussianCloud(double)> target, const Rgb& background);

struct ViewImage {
    Camera camera;
    double tau = 0.0;
    Image image;
};
/// Serves only the listed (camera, τ) pairs; anything else is a coverage error.
[[nodiscard]] FrameSource image_set_source(std::vector<ViewImage> views);

/// SDS weight w(t).
using NoiseWeight = std::function<double(double)>;
[[nodiscard]] inline NoiseWeight linear_weight() {
    return [](double t) { return t; };
}

/// A perfect denoiser: gradient = w(t)·(Î − I_gt(o, τ)).
class OracleGuidance final : public GuidanceProvider {
public:
    explicit OracleGuidance(FrameSource truth, NoiseWeight weight = linear_weight());
    [[nodiscard]] Image gradient(const GuidanceRequest& request) const override;

private:
    FrameSource truth_;
    NoiseWeight weight_;
};

class ZeroGuidance final : public GuidanceProvider {
public:
    [[nodiscard]] Image gradient(const GuidanceRequest& request) const override;
};

[[nodiscard]] std::shared_ptr<GuidanceProvider> oracle_guidance(FrameSource truth,
                                                                 NoiseWeight weight = linear_weight());
[[nodiscard]] std::shared_ptr<GuidanceProvider> oracle_guidance(const GaussianCloud& target,
                                                                 const Rgb& background);

/// One refinement call: a rendered orbit video, its noisy copy, and the
/// per-frame cameras and times it was rendered with.
struct RefineRequest {
    std::span<const Image> noisy;
    std::span<const Image> clean;
    std::span<const Camera> cameras;
    std::span<const double> taus;
    const Image* input_image = nullptr;  // may be null
    double noise_level = 0.0;
    std::uint64_t seed = 0;
    int iteration = 0;
};

/// Stand-in for the video-to-video refiner. Must preserve frame count and
/// resolution, be deterministic, and be safe to call concurrently.
class VideoRefiner {
public:
    virtual ~VideoRefiner() = default;
    [[nodiscard]] virtual std::vector<Image> refine(const RefineRequest& request) const = 0;
};

/// Returns the pre-noise video, i.e. strips the added noise exactly.
class IdentityRefiner final : public VideoRefiner {
public:
    [[nodiscard]] std::vector<Image> refine(const RefineRequest& request) const override;
};

/// Ignores its input and returns ground truth along the trajectory.
class OracleRefiner final : public VideoRefiner {
public:
    explicit OracleRefiner(FrameSource truth);
    [[nodiscard]] std::vector<Image> refine(const RefineRequest& request) const override;

private:
    FrameSource truth_;
};

[[nodiscard]] std::shared_ptr<VideoRefiner> identity_refiner();
[[nodiscard]] std::shared_ptr<VideoRefiner> oracle_refiner(FrameSource truth);

/// Adds N(0, level²) noise per channel and clamps to [0, 1]. The stream is
/// keyed by (seed, stream) so different frames get independent noise.
[[nodiscard]] Image add_noise(const Image& image, double level, std::uint64_t seed, std::uint64_t stream);

/// Mixes seed material into a 64-bit stream id (splitmix64 finalizer).
[[nodiscard]] std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace splat4d
