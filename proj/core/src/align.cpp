#include "splat4d/align.hpp"

#include "splat4d/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace splat4d {

namespace {
constexpr double kTieTolerance = 1e-9;
}  // namespace

AzimuthFit align_azimuth(const GaussianCloud& cloud, const Image& reference, const Camera& base, double step,
                         const Rgb& background) {
    if (!(step > 0.0 && step <= 180.0)) throw RangeError("azimuth step must be in (0, 180]");
    if (reference.width != base.width || reference.height != base.height) {
        throw DimensionError("reference is " + std::to_string(reference.width) + "x" +
                             std::to_string(reference.height) + ", camera renders " + std::to_string(base.width) +
                             "x" + std::to_string(base.height));
    }
    // candidates in tie-break order: 0, +s, -s, +2s, -2s, ...
    const int n = static_cast<int>(std::floor(180.0 / step + 1e-9));
    std::vector<double> order{0.0};
    for (int k = 1; k <= n; ++k) {
        order.push_back(k * step);
        order.push_back(-k * step);
    }
    AzimuthFit best{0.0, std::numeric_limits<double>::infinity()};
    for (double az : order) {
        Camera c = base;
        c.azimuth = az;
        c.elevation = 0.0;
        const double d = squared_l2(render(cloud, c, background).rgb, reference);
        // renders of a symmetric cloud differ only by rounding; keep those as ties
        if (d < best.squared_l2 - kTieTolerance * std::max(best.squared_l2, 1e-12) || !std::isfinite(best.squared_l2)) {
            best = {az, d};
        }
    }
    return best;
}

}  // namespace splat4d
