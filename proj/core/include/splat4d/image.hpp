#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <vector>

namespace splat4d {

using Rgb = Eigen::Vector3d;

/// Row-major H×W×3 floating-point image.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, double fill = 0.0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}
    Image(int w, int h, const Rgb& fill);

    [[nodiscard]] std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    [[nodiscard]] bool empty() const { return data.empty(); }

    double& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    [[nodiscard]] double at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    [[nodiscard]] Rgb pixel(int x, int y) const {
        const double* p = &data[(static_cast<std::size_t>(y) * width + x) * 3];
        return {p[0], p[1], p[2]};
    }
    void set_pixel(int x, int y, const Rgb& c) {
        double* p = &data[(static_cast<std::size_t>(y) * width + x) * 3];
        p[0] = c.x();
        p[1] = c.y();
        p[2] = c.z();
    }

    [[nodiscard]] bool same_shape(const Image& o) const { return width == o.width && height == o.height; }

    bool operator==(const Image&) const = default;
};

/// Mean over pixels and channels of (a - b)². Throws DimensionError on shape mismatch.
[[nodiscard]] double mse(const Image& a, const Image& b);

/// Peak signal-to-noise ratio for images in [0,1]. Infinite for identical images.
[[nodiscard]] double psnr(const Image& a, const Image& b);

/// Sum of squared differences.
[[nodiscard]] double squared_l2(const Image& a, const Image& b);

/// The four pixels and weights a bilinear lookup at (x, y) blends.
struct BilinearTaps {
    int x0, y0, x1, y1;
    double w00, w10, w01, w11;  // w<dx><dy>
};
[[nodiscard]] BilinearTaps bilinear_taps(int width, int height, double x, double y);

/// Bilinear lookup with clamp-to-edge, pixel centers at (i + 0.5, j + 0.5).
[[nodiscard]] Rgb sample_bilinear(const Image& img, double x, double y);

}  // namespace splat4d
