#pragma once

#include "splat4d/camera.hpp"
#include "splat4d/gaussians.hpp"
#include "splat4d/image.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace splat4d {

inline const Rgb kWhite{1.0, 1.0, 1.0};
inline const Rgb kBlack{0.0, 0.0, 0.0};

namespace raster {
inline constexpr int kTileSize = 16;
/// Compositing stops once the accumulated transmittance drops below this.
inline constexpr double kMinTransmittance = 1e-4;
/// Splats are truncated at Mahalanobis distance 3 (q = dᵀΣ⁻¹d < 9).
inline constexpr double kCutoffQuad = 9.0;
/// Added to the screen covariance diagonal (px²).
inline constexpr double kLowPassDilation = 0.3;
}  // namespace raster

struct RenderOutput {
    Image rgb;
    std::vector<double> alpha;
    std::vector<int> contributors;

    [[nodiscard]] int width() const { return rgb.width; }
    [[nodiscard]] int height() const { return rgb.height; }
};

/// Gradients with the same layout as GaussianCloud.
struct RenderGradients {
    std::vector<Vec3> positions;
    std::vector<Vec4> rotations;
    std::vector<Vec3> log_scales;
    std::vector<double> opacity_logits;
    std::vector<Vec3> colors;
    /// |dL/d(screen mean)| in normalized device units; zero when not visible.
    /// Diagnostics for densification, not a parameter gradient.
    std::vector<double> screen_grad_norm;
    /// 1 where the Gaussian had screen support in the rendered view.
    std::vector<std::uint8_t> visible;

    RenderGradients() = default;
    explicit RenderGradients(std::size_t n);

    [[nodiscard]] std::size_t size() const { return positions.size(); }
    void resize(std::size_t n);
    void set_zero();
    RenderGradients& operator+=(const RenderGradients& o);
    RenderGradients& operator*=(double s);
    [[nodiscard]] bool all_zero() const;
    [[nodiscard]] double squared_norm() const;
};

/// Splats the cloud with perspective EWA projection and front-to-back
/// alpha compositing over `background`. Gaussians outside (near, far) are
/// culled. Depth ties are ordered by Gaussian index.
[[nodiscard]] RenderOutput render(const GaussianCloud& cloud, const Camera& camera,
                                  const Rgb& background = kWhite);

/// Reverse-mode pass of render() for the scalar L = Σ upstream · rgb.
/// `upstream` must have the camera's resolution.
[[nodiscard]] RenderGradients render_backward(const GaussianCloud& cloud, const Camera& camera,
                                              const Rgb& background, const Image& upstream);

[[nodiscard]] std::vector<RenderOutput> render_views(const GaussianCloud& cloud,
                                                     std::span<const Camera> cameras,
                                                     const Rgb& background = kWhite);

}  // namespace splat4d
