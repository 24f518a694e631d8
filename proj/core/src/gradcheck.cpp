#include "splat4d/gradcheck.hpp"

#include "splat4d/deformation.hpp"
#include "splat4d/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace splat4d {

void GradCheckReport::merge(const GradCheckReport& o) {
    checked += o.checked;
    max_abs_error = std::max(max_abs_error, o.max_abs_error);
    failures.insert(failures.end(), o.failures.begin(), o.failures.end());
}

bool gradients_agree(double analytic, double numeric, const GradCheckTolerance& tol) {
    const double err = std::abs(analytic - numeric);
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    return err <= std::max(tol.absolute, tol.relative * scale);
}

void check_by_central_differences(const std::string& name, std::span<double> params,
                                  std::span<const double> analytic,
                                  const std::function<double()>& loss,
                                  const GradCheckTolerance& tol, GradCheckReport& report) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double original = params[i];
        params[i] = original + tol.step;
        const double up = loss();
        params[i] = original - tol.step;
        const double down = loss();
        params[i] = original;
        const double numeric = (up - down) / (2.0 * tol.step);
        ++report.checked;
        report.max_abs_error = std::max(report.max_abs_error, std::abs(numeric - analytic[i]));
        if (!gradients_agree(analytic[i], numeric, tol)) {
            report.failures.push_back({name, i, analytic[i], numeric});
        }
    }
}

GaussianCloud random_cloud(std::uint64_t seed, std::size_t count) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> pos(-0.35, 0.35);
    std::uniform_real_distribution<double> scale(std::log(0.06), std::log(0.2));
    std::normal_distribution<double> quat(0.0, 1.0);
    std::uniform_real_distribution<double> opacity(-1.5, 1.5);
    std::uniform_real_distribution<double> color(0.0, 1.0);
    GaussianCloud cloud;
    for (std::size_t i = 0; i < count; ++i) {
        Vec3 p(pos(rng), pos(rng), pos(rng));
        Vec4 q(quat(rng), quat(rng), quat(rng), quat(rng));
        Vec3 s(scale(rng), scale(rng), scale(rng));
        const double o = opacity(rng);
        Vec3 c(color(rng), color(rng), color(rng));
        cloud.push_back(p, q, s, o, c);
    }
    return cloud;
}

Camera random_camera(std::uint64_t seed, int size) {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> az(-180.0, 180.0);
    std::uniform_real_distribution<double> el(-30.0, 30.0);
    Camera cam;
    cam.azimuth = az(rng);
    cam.elevation = el(rng);
    cam.radius = 1.6;
    cam.width = size;
    cam.height = size;
    return cam;
}

Image random_image(std::uint64_t seed, int width, int height, double lo, double hi) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Image img(width, height);
    for (double& v : img.data) v = u(rng);
    return img;
}

double min_depth_gap(const GaussianCloud& cloud, const Camera& camera) {
    const RigidTransform view = camera.world_to_camera();
    std::vector<double> depth;
    depth.reserve(cloud.size());
    for (const Vec3& p : cloud.positions) depth.push_back(view.apply(p).z());
    std::sort(depth.begin(), depth.end());
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < depth.size(); ++i) gap = std::min(gap, depth[i] - depth[i - 1]);
    return gap;
}

GradCheckReport check_rasterizer_gradients(const GaussianCloud& cloud_in, const Camera& camera,
                                           const Rgb& background, const Image& upstream,
                                           const GradCheckTolerance& tol) {
    GaussianCloud cloud = cloud_in;
    const RenderGradients g = render_backward(cloud, camera, background, upstream);
    auto loss = [&] {
        const RenderOutput r = render(cloud, camera, background);
        double s = 0.0;
        for (std::size_t i = 0; i < r.rgb.data.size(); ++i) s += r.rgb.data[i] * upstream.data[i];
        return s;
    };
    GradCheckReport report;
    check_by_central_differences("position", flat(cloud.positions), flat(g.positions), loss, tol,
                                 report);
    check_by_central_differences("rotation", flat(cloud.rotations), flat(g.rotations), loss, tol,
                                 report);
    check_by_central_differences("log_scale", flat(cloud.log_scales), flat(g.log_scales), loss, tol,
                                 report);
    check_by_central_differences("opacity_logit", cloud.opacity_logits, g.opacity_logits, loss, tol,
                                 report);
    check_by_central_differences("color", flat(cloud.colors), flat(g.colors), loss, tol, report);
    return report;
}

GradCheckSuiteResult run_gradcheck_suite(const GradCheckSuiteOptions& options, std::ostream* log) {
    GradCheckSuiteResult result;
    for (int s = 0; s < options.scenes; ++s) {
        const std::uint64_t seed = options.seed * 1000003ULL + static_cast<std::uint64_t>(s);
        std::mt19937_64 rng(seed);
        const auto n = static_cast<std::size_t>(
            std::uniform_int_distribution<int>(1, options.max_gaussians)(rng));
        const Camera cam = random_camera(seed + 13, options.image_size);
        GaussianCloud cloud = random_cloud(seed + 11, n);
        for (std::uint64_t redraw = 1; min_depth_gap(cloud, cam) < 10.0 * options.tolerance.step; ++redraw) {
            cloud = random_cloud(seed + 11 + redraw * 7919ULL, n);
        }
        const Image upstream =
            random_image(seed + 17, options.image_size, options.image_size, -1.0, 1.0);
        const Rgb bg = (s % 2 == 0) ? kWhite : Rgb(0.2, 0.5, 0.8);

        const GradCheckReport r = check_rasterizer_gradients(cloud, cam, bg, upstream, options.tolerance);
        result.rasterizer.merge(r);

        const GradCheckReport d =
            check_deformation_gradients(seed + 19, cloud, cam, bg, upstream, options.tolerance);
        result.deformation.merge(d);

        if (log != nullptr) {
            *log << "scene " << s << ": " << n << " gaussians, rasterizer " << r.checked
                 << " checked / " << r.failures.size() << " failed, deformation " << d.checked
                 << " checked / " << d.failures.size() << " failed\n";
        }
    }
    return result;
}

}  // namespace splat4d
