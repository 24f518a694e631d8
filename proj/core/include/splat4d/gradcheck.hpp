#pragma once

#include "splat4d/camera.hpp"
#include "splat4d/gaussians.hpp"
#include "splat4d/image.hpp"

#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace splat4d {

struct GradCheckTolerance {
    double step = 1e-4;
    double relative = 1e-3;
    double absolute = 1e-5;
};

struct GradCheckFailure {
    std::string parameter;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

struct GradCheckReport {
    std::size_t checked = 0;
    double max_abs_error = 0.0;
    std::vector<GradCheckFailure> failures;

    [[nodiscard]] bool ok() const { return failures.empty(); }
    void merge(const GradCheckReport& o);
};

/// |analytic - numeric| <= max(absolute, relative * max(|analytic|, |numeric|)).
[[nodiscard]] bool gradients_agree(double analytic, double numeric, const GradCheckTolerance& tol);

/// Central difference of `loss` with respect to every entry of `params`,
/// compared against `analytic`. `params` is perturbed in place and restored.
void check_by_central_differences(const std::string& name, std::span<double> params,
                                  std::span<const double> analytic,
                                  const std::function<double()>& loss,
                                  const GradCheckTolerance& tol, GradCheckReport& report);

/// Random scene with up to `max_gaussians` Gaussians around the origin.
[[nodiscard]] GaussianCloud random_cloud(std::uint64_t seed, std::size_t count);
[[nodiscard]] Camera random_camera(std::uint64_t seed, int size);
[[nodiscard]] Image random_image(std::uint64_t seed, int width, int height, double lo, double hi);

/// Smallest camera-space depth difference between any two Gaussians. Depth
/// ordering is discontinuous, so probes closer than a few FD steps are
/// redrawn by the suite.
[[nodiscard]] double min_depth_gap(const GaussianCloud& cloud, const Camera& camera);

/// Finite-difference check of render_backward for L = Σ upstream · render.
[[nodiscard]] GradCheckReport check_rasterizer_gradients(const GaussianCloud& cloud,
                                                         const Camera& camera, const Rgb& background,
                                                         const Image& upstream,
                                                         const GradCheckTolerance& tol = {});

struct GradCheckSuiteOptions {
    std::uint64_t seed = 0;
    int scenes = 20;
    int max_gaussians = 10;
    int image_size = 32;
    GradCheckTolerance tolerance;
};

struct GradCheckSuiteResult {
    GradCheckReport rasterizer;
    GradCheckReport deformation;
    [[nodiscard]] bool ok() const { return rasterizer.ok() && deformation.ok(); }
};

/// Seeded suite over random scenes: rasterizer gradients and the full
/// HexPlane + decoder + rasterizer chain.
[[nodiscard]] GradCheckSuiteResult run_gradcheck_suite(const GradCheckSuiteOptions& options,
                                                       std::ostream* log = nullptr);

}  // namespace splat4d
