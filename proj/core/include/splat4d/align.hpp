#pragma once

#include "splat4d/camera.hpp"
#include "splat4d/gaussians.hpp"
#include "splat4d/image.hpp"
#include "splat4d/rasterizer.hpp"

namespace splat4d {

struct AzimuthFit {
    double azimuth = 0.0;
    double squared_l2 = 0.0;
};

/// Renders `cloud` from azimuths k·step in [−180°, 180°] at elevation 0
/// (other camera parameters from `base`) and returns the one closest to
/// `reference` in pixel L2. Distances within a relative 1e-9 count as
/// ties; ties go to the smallest |azimuth|, then to the
/// positive one. Throws DimensionError if the reference size differs from
/// the camera, RangeError for a step outside (0, 180].
[[nodiscard]] AzimuthFit align_azimuth(const GaussianCloud& cloud, const Image& reference, const Camera& base,
                                       double step = 1.0, const Rgb& background = kWhite);

}  // namespace splat4d
