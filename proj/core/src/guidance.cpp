#include "splat4d/guidance.hpp"

#include "splat4d/errors.hpp"
#include "splat4d/rasterizer.hpp"

#include <algorithm>
#include <random>
#include <string>

namespace splat4d {

double noise_at(const NoiseSchedule& s, int iteration) {
    if (s.total_iterations < 0 || iteration < 0 || iteration > s.total_iterations) {
        throw RangeError("noise_at: iteration " + std::to_string(iteration) + " outside [0, " +
                         std::to_string(s.total_iterations) + "]");
    }
    if (iteration == 0) return s.t_start;
    if (iteration == s.total_iterations) return s.t_end;
    const double f = static_cast<double>(iteration) / s.total_iterations;
    return s.t_start + (s.t_end - s.t_start) * f;
}

FrameSource render_source(GaussianCloud target, const Rgb& background) {
    return [target = std::move(target), background](const Camera& cam, double) {
        return render(target, cam, background).rgb;
    };
}

FrameSource render_source(std::function<GaussianCloud(double)> target, const Rgb& background) {
    return [target = std::move(target), background](const Camera& cam, double tau) {
        return render(target(tau), cam, background).rgb;
    };
}

FrameSource image_set_source(std::vector<ViewImage> views) {
    return [views = std::move(views)](const Camera& cam, double tau) {
        for (const ViewImage& v : views) {
            if (v.camera == cam && v.tau == tau) return v.image;
        }
        throw CoverageError("no ground truth for azimuth " + std::to_string(cam.azimuth) + ", elevation " +
                            std::to_string(cam.elevation) + ", tau " + std::to_string(tau));
    };
}

OracleGuidance::OracleGuidance(FrameSource truth, NoiseWeight weight)
    : truth_(std::move(truth)), weight_(std::move(weight)) {}

Image OracleGuidance::gradient(const GuidanceRequest& r) const {
    if (r.rendered == nullptr) throw DimensionError("guidance request without a rendered image");
    const Image gt = truth_(r.camera, r.tau);
    if (!gt.same_shape(*r.rendered)) {
        throw DimensionError("oracle image is " + std::to_string(gt.width) + "x" + std::to_string(gt.height) +
                             ", render is " + std::to_string(r.rendered->width) + "x" +
                             std::to_string(r.rendered->height));
    }
    const double w = weight_(r.noise_level);
    Image g(gt.width, gt.height);
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = w * (r.rendered->data[i] - gt.data[i]);
    return g;
}

Image ZeroGuidance::gradient(const GuidanceRequest& r) const {
    if (r.rendered == nullptr) throw DimensionError("guidance request without a rendered image");
    return Image(r.rendered->width, r.rendered->height, 0.0);
}

std::shared_ptr<GuidanceProvider> oracle_guidance(FrameSource truth, NoiseWeight weight) {
    return std::make_shared<OracleGuidance>(std::move(truth), std::move(weight));
}

std::shared_ptr<GuidanceProvider> oracle_guidance(const GaussianCloud& target, const Rgb& background) {
    return oracle_guidance(render_source(target, background));
}

std::vector<Image> IdentityRefiner::refine(const RefineRequest& r) const {
    return {r.clean.begin(), r.clean.end()};
}

OracleRefiner::OracleRefiner(FrameSource truth) : truth_(std::move(truth)) {}

std::vector<Image> OracleRefiner::refine(const RefineRequest& r) const {
    if (r.cameras.size() != r.noisy.size() || r.taus.size() != r.noisy.size()) {
        throw DimensionError("refine request: frame, camera and time counts differ");
    }
    std::vector<Image> out;
    out.reserve(r.noisy.size());
    for (std::size_t i = 0; i < r.noisy.size(); ++i) {
        Image gt = truth_(r.cameras[i], r.taus[i]);
        if (!gt.same_shape(r.noisy[i])) throw DimensionError("oracle refiner frame has the wrong size");
        out.push_back(std::move(gt));
    }
    return out;
}

std::shared_ptr<VideoRefiner> identity_refiner() { return std::make_shared<IdentityRefiner>(); }

std::shared_ptr<VideoRefiner> oracle_refiner(FrameSource truth) {
    return std::make_shared<OracleRefiner>(std::move(truth));
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Image add_noise(const Image& image, double level, std::uint64_t seed, std::uint64_t stream) {
    Image out = image;
    if (level == 0.0) return out;
    std::mt19937_64 rng(mix_seed(seed, stream));
    std::normal_distribution<double> n(0.0, level);
    for (double& v : out.data) v = std::clamp(v + n(rng), 0.0, 1.0);
    return out;
}

}  // namespace splat4d
