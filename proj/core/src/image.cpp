#include "splat4d/image.hpp"

#include "splat4d/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace splat4d {

Image::Image(int w, int h, const Rgb& fill) : Image(w, h) {
    for (std::size_t i = 0; i < pixel_count(); ++i) {
        data[3 * i + 0] = fill.x();
        data[3 * i + 1] = fill.y();
        data[3 * i + 2] = fill.z();
    }
}

double squared_l2(const Image& a, const Image& b) {
    if (!a.same_shape(b)) {
        throw DimensionError("image shapes differ: " + std::to_string(a.width) + "x" +
                             std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                             std::to_string(b.height));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return s;
}

double mse(const Image& a, const Image& b) {
    const double s = squared_l2(a, b);
    return a.data.empty() ? 0.0 : s / static_cast<double>(a.data.size());
}

double psnr(const Image& a, const Image& b) {
    const double m = mse(a, b);
    if (m <= 0.0) return std::numeric_limits<double>::infinity();
    return -10.0 * std::log10(m);
}

BilinearTaps bilinear_taps(int width, int height, double x, double y) {
    const double fx = std::clamp(x - 0.5, 0.0, static_cast<double>(width - 1));
    const double fy = std::clamp(y - 0.5, 0.0, static_cast<double>(height - 1));
    BilinearTaps t{};
    t.x0 = static_cast<int>(std::floor(fx));
    t.y0 = static_cast<int>(std::floor(fy));
    t.x1 = std::min(t.x0 + 1, width - 1);
    t.y1 = std::min(t.y0 + 1, height - 1);
    const double tx = fx - t.x0;
    const double ty = fy - t.y0;
    t.w00 = (1 - tx) * (1 - ty);
    t.w10 = tx * (1 - ty);
    t.w01 = (1 - tx) * ty;
    t.w11 = tx * ty;
    return t;
}

Rgb sample_bilinear(const Image& img, double x, double y) {
    const BilinearTaps t = bilinear_taps(img.width, img.height, x, y);
    return t.w00 * img.pixel(t.x0, t.y0) + t.w10 * img.pixel(t.x1, t.y0) + t.w01 * img.pixel(t.x0, t.y1) +
           t.w11 * img.pixel(t.x1, t.y1);
}

}  // namespace splat4d
