#include "splat4d/adam.hpp"
#include "splat4d/errors.hpp"
#include "splat4d/gradcheck.hpp"
#include "splat4d/trainer.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace splat4d;

namespace {


GaussianCloud five_gaussians() {
    GaussianCloud c;
    c.push_back(Vec3(0.05, 0.10, -0.12), Vec4(1, 0.1, 0, 0), Vec3(-1.8, -2.0, -1.9), logit(0.7), Vec3(0.9, 0.1, 0.1));
    c.push_back(Vec3(-0.15, 0.02, 0.20), Vec4(1, 0, 0.2, 0), Vec3(-2.1, -1.7, -2.0), logit(0.6), Vec3(0.1, 0.8, 0.2));
    c.push_back(Vec3(0.12, -0.18, 0.05), Vec4(1, 0, 0, 0.3), Vec3(-2.0, -2.2, -1.6), logit(0.8), Vec3(0.2, 0.3, 0.9));
    c.push_back(Vec3(-0.05, -0.08, -0.25), Vec4(1, 0, 0, 0), Vec3(-2.3, -2.3, -2.3), logit(0.5), Vec3(0.7, 0.7, 0.1));
    c.push_back(Vec3(0.20, 0.15, 0.12), Vec4(0.9, 0.1, 0.1, 0), Vec3(-1.9, -2.4, -2.0), logit(0.9), Vec3(0.5, 0.1, 0.6));
    return c;
}

Camera camera(int size, double azimuth = 0.0, double elevation = 0.0) {
    Camera c;
    c.width = c.height = size;
    c.azimuth = azimuth;
    c.elevation = elevation;
    return c;
}

DrivingVideo video_of(const std::function<GaussianCloud(double)>& scene, int frames, const Camera& cam,
                      const Rgb& bg = kWhite) {
    DrivingVideo v;
    v.reference_camera = cam;
    for (int f = 0; f < frames; ++f) v.frames.push_back(render(scene(f / double(frames - 1)), cam, bg).rgb);
    return v;
}

double cloud_abs_sum(const RenderGradients& g) { return std::sqrt(g.squared_norm()); }

void randomize(std::span<double> v, double lo, double hi, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    for (double& x : v) x = u(rng);
}

bool same_cloud(const GaussianCloud& a, const GaussianCloud& b) {
    return a.positions == b.positions && a.rotations == b.rotations && a.log_scales == b.log_scales &&
           a.opacity_logits == b.opacity_logits && a.colors == b.colors;
}

}  // namespace

TEST_CASE("adam: zero gradient on a fresh state leaves parameters unchanged") {
    std::vector<double> p{1.0, -2.0, 3.5};
    const auto before = p;
    std::vector<double> g(3, 0.0);
    AdamState s(3);
    adam_step(p, g, s, {});
    CHECK(p == before);
    CHECK(s.step == 1);
}

TEST_CASE("adam: zero gradient decays the moments") {
    std::vector<double> p{0.5};
    AdamState s(1);
    std::vector<double> g{2.0};
    adam_step(p, g, s, {});
    const double m = s.m[0], v = s.v[0];
    g[0] = 0.0;
    adam_step(p, g, s, {});
    CHECK(s.m[0] == doctest::Approx(0.9 * m).epsilon(1e-15));
    CHECK(s.v[0] == doctest::Approx(0.999 * v).epsilon(1e-15));
}

TEST_CASE("adam: constant gradient steps approach lr times sign") {
    std::vector<double> p{0.0, 0.0};
    std::vector<double> g{3.0, -0.01};
    AdamState s(2);
    for (int i = 0; i < 2000; ++i) adam_step(p, g, s, {.lr = 0.01});
    const double before0 = p[0], before1 = p[1];
    adam_step(p, g, s, {.lr = 0.01});
    CHECK(p[0] - before0 == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(p[1] - before1 == doctest::Approx(0.01).epsilon(1e-6));
}

TEST_CASE("adam: 1-D quadratic converges within 500 steps at lr 0.1") {
    std::vector<double> x{5.0};
    AdamState s(1);
    int steps = 0;
    for (; steps < 500 && std::abs(x[0] - 1.5) > 1e-6; ++steps) {
        std::vector<double> g{2.0 * (x[0] - 1.5)};
        adam_step(x, g, s, {.lr = 0.1});
    }
    CHECK(std::abs(x[0] - 1.5) <= 1e-6);
    CHECK(steps <= 500);
}

TEST_CASE("adam: shape mismatch throws") {
    std::vector<double> p(3), g(2);
    AdamState s(3);
    CHECK_THROWS_AS(adam_step(p, g, s, {}), DimensionError);
    std::vector<double> g3(3);
    AdamState wrong(4);
    CHECK_THROWS_AS(adam_step(p, g3, wrong, {}), DimensionError);
}

TEST_CASE("loss_ref of a video rendered from the scene is zero with zero gradients") {
    const GaussianCloud cloud = five_gaussians();
    DeformationModel model = DeformationModel::create(4, 3, 2, 8, 1);
    const Camera cam = camera(20);
    const DrivingVideo v = video_of([&](double tau) { return deform(cloud, model, tau); }, 3, cam);
    const SceneGradients g = loss_ref(cloud, model, v, kWhite);
    CHECK(g.loss == 0.0);
    CHECK(g.cloud.all_zero());
    CHECK(g.deformation.all_zero());
}

TEST_CASE("loss_ref of an all-white video against black renders is 1") {
    GaussianCloud cloud;
    cloud.push_back(Vec3(0, 0, 5), Vec4(1, 0, 0, 0), Vec3::Constant(-3), 0.0, Vec3(1, 1, 1));  // behind the camera
    const DeformationModel model = DeformationModel::create(4, 3, 2, 8, 1);
    DrivingVideo v;
    v.reference_camera = camera(8);
    v.frames.assign(4, Image(8, 8, 1.0));
    CHECK(loss_ref(cloud, model, v, Rgb(0, 0, 0)).loss == 1.0);
}

TEST_CASE("loss_ref rejects resolution mismatches") {
    const GaussianCloud cloud = five_gaussians();
    const DeformationModel model = DeformationModel::create(4, 3, 2, 8, 1);
    DrivingVideo v;
    v.reference_camera = camera(8);
    v.frames = {Image(8, 8, 1.0), Image(9, 8, 1.0)};
    CHECK_THROWS_AS((void)loss_ref(cloud, model, v, kWhite), DimensionError);
    v.frames = {Image(8, 8, 1.0)};
    CHECK_THROWS_AS((void)loss_ref(cloud, model, v, kWhite), DimensionError);
    v.frames = {Image(9, 9, 1.0), Image(9, 9, 1.0)};
    CHECK_THROWS_AS((void)loss_ref(cloud, model, v, kWhite), DimensionError);
}

TEST_CASE("loss_ref gradients match central differences") {
    GaussianCloud cloud = five_gaussians();
    DeformationModel model = DeformationModel::create(4, 3, 2, 8, 5);
    randomize(model.field.values(), 0.6, 1.4, 11);
    randomize(model.decoder.parameters(), -0.2, 0.2, 12);
    const Camera cam = camera(20, 15.0, 10.0);
    DrivingVideo v;
    v.reference_camera = cam;
    for (int f = 0; f < 3; ++f) v.frames.push_back(random_image(100 + f, 20, 20, 0.0, 1.0));

    const SceneGradients g = loss_ref(cloud, model, v, kWhite);
    auto loss = [&] { return loss_ref(cloud, model, v, kWhite).loss; };
    GradCheckReport report;
    const GradCheckTolerance tol;
    check_by_central_differences("field", model.field.values(), g.deformation.field, loss, tol, report);
    check_by_central_differences("decoder", model.decoder.parameters(), g.deformation.decoder, loss, tol, report);
    check_by_central_differences("positions", flat(cloud.positions), flat(g.cloud.positions), loss, tol, report);
    check_by_central_differences("rotations", flat(cloud.rotations), flat(g.cloud.rotations), loss, tol, report);
    check_by_central_differences("log_scales", flat(cloud.log_scales), flat(g.cloud.log_scales), loss, tol, report);
    check_by_central_differences("opacity", cloud.opacity_logits, g.cloud.opacity_logits, loss, tol, report);
    check_by_central_differences("colors", flat(cloud.colors), flat(g.cloud.colors), loss, tol, report);
    for (const auto& f : report.failures) {
        INFO(f.parameter << "[" << f.index << "] analytic " << f.analytic << " numeric " << f.numeric);
        CHECK(false);
    }
    CHECK(report.checked > 300);
}

TEST_CASE("sample_views stays in range and is keyed by seed and iteration") {
    ViewSampling s;
    s.render_size = 32;
    const auto a = sample_views(s, 64, 3, 7);
    REQUIRE(a.size() == 64);
    for (const Camera& c : a) {
        CHECK((c.azimuth >= -180.0 && c.azimuth <= 180.0));
        CHECK((c.elevation >= -30.0 && c.elevation <= 30.0));
        CHECK(c.width == 32);
        CHECK(c.radius == 2.0);
    }
    const auto b = sample_views(s, 64, 3, 7);
    CHECK(a[5].azimuth == b[5].azimuth);
    CHECK(sample_views(s, 1, 3, 8)[0].azimuth != a[0].azimuth);
    CHECK(sample_views(s, 1, 4, 7)[0].azimuth != a[0].azimuth);
}

TEST_CASE("sds_step with a zero provider gives zero gradients") {
    const GaussianCloud cloud = five_gaussians();
    ViewSampling s;
    s.render_size = 16;
    const ZeroGuidance zero;
    const SceneGradients g = sds_step(cloud, nullptr, 0.0, zero, kStaticSchedule, 0, 4, s, kWhite, 1);
    CHECK(g.cloud.all_zero());
    CHECK(g.loss == 0.0);

    DeformationModel model = DeformationModel::create(4, 3, 2, 8, 2);
    randomize(model.decoder.parameters(), -0.2, 0.2, 3);
    const SceneGradients gd = sds_step(cloud, &model, 0.5, zero, kDynamicSchedule, 3, 4, s, kWhite, 1);
    CHECK(gd.cloud.all_zero());
    CHECK(gd.deformation.all_zero());
}

TEST_CASE("sds_step with the oracle at its own target gives zero gradients") {
    const GaussianCloud cloud = five_gaussians();
    ViewSampling s;
    s.render_size = 16;
    const auto oracle = oracle_guidance(cloud, kWhite);
    CHECK(sds_step(cloud, nullptr, 0.0, *oracle, kStaticSchedule, 10, 4, s, kWhite, 1).cloud.all_zero());

    const DeformationModel model = DeformationModel::create(4, 3, 2, 8, 2);
    const SceneGradients g = sds_step(cloud, &model, 0.3, *oracle, kDynamicSchedule, 0, 4, s, kWhite, 1);
    CHECK(g.cloud.all_zero());
    CHECK(g.deformation.all_zero());
}

TEST_CASE("one small oracle descent step lowers the multi-view error") {
    GaussianCloud target = five_gaussians();
    GaussianCloud cloud = target;
    for (Vec3& p : cloud.positions) p += Vec3(0.04, -0.03, 0.02);
    for (Vec3& c : cloud.colors) c = Vec3::Constant(1.0) - c;
    ViewSampling s;
    s.render_size = 24;
    const auto oracle = oracle_guidance(target, kWhite);
    const int it = 4;
    const auto cams = sample_views(s, 4, 9, it);
    auto error = [&](const GaussianCloud& c) {
        double e = 0;
        for (const Camera& cam : cams) {
            const Image a = render(c, cam, kWhite).rgb, b = render(target, cam, kWhite).rgb;
            for (std::size_t i = 0; i < a.data.size(); ++i) e += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
        }
        return e;
    };
    const SceneGradients g = sds_step(cloud, nullptr, 0.0, *oracle, kStaticSchedule, it, 4, s, kWhite, 9);
    CHECK_FALSE(g.cloud.all_zero());
    const double before = error(cloud);
    GaussianCloud stepped = cloud;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        stepped.positions[i] -= 1e-3 * g.cloud.positions[i];
        stepped.rotations[i] -= 1e-3 * g.cloud.rotations[i];
        stepped.log_scales[i] -= 1e-3 * g.cloud.log_scales[i];
        stepped.opacity_logits[i] -= 1e-3 * g.cloud.opacity_logits[i];
        stepped.colors[i] -= 1e-3 * g.cloud.colors[i];
    }
    CHECK(error(stepped) < before);
}

TEST_CASE("sds_step propagates coverage errors") {
    ViewSampling s;
    s.render_size = 8;
    const auto oracle = oracle_guidance(image_set_source({}));
    CHECK_THROWS_AS((void)sds_step(five_gaussians(), nullptr, 0.0, *oracle, kStaticSchedule, 0, 1, s, kWhite, 0),
                    CoverageError);
}

TEST_CASE("initialize_cloud: ball, opacity, grey colour, neighbour scales") {
    const GaussianCloud c = initialize_cloud(400, 0.5, 3);
    REQUIRE(c.size() == 400);
    for (std::size_t i = 0; i < c.size(); ++i) {
        CHECK(c.positions[i].norm() <= 0.5);
        CHECK(c.opacity(i) == doctest::Approx(0.1).epsilon(1e-12));
        CHECK(c.colors[i].x() == doctest::Approx(0.5).epsilon(0.01));
        CHECK(c.rotations[i] == Vec4(1, 0, 0, 0));
        CHECK(c.log_scales[i].x() == c.log_scales[i].z());
    }
    // isolated pair: scale from the distance to the other point
    const GaussianCloud two = initialize_cloud(2, 0.5, 1);
    const double d = (two.positions[0] - two.positions[1]).norm();
    CHECK(std::exp(two.log_scales[0].x()) == doctest::Approx(d).epsilon(1e-12));
    CHECK(initialize_cloud(50, 0.5, 9).positions == initialize_cloud(50, 0.5, 9).positions);
    CHECK_THROWS_AS((void)initialize_cloud(0, 0.5, 1), RangeError);
}

TEST_CASE("config validation") {
    StaticFitConfig s;
    CHECK_NOTHROW(s.validate());
    s.densify_grad_threshold = 0.0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = {};
    s.initial_gaussians = 0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    DynamicFitConfig d;
    CHECK_NOTHROW(d.validate());
    d.spatial_resolution = 1;
    CHECK_THROWS_AS(d.validate(), ConfigError);
}

TEST_CASE("densify: clone small, split large, prune transparent") {
    GaussianCloud c;
    c.push_back(Vec3(0, 0, 0), Vec4(1, 0, 0, 0), Vec3::Constant(std::log(0.01)), logit(0.5), Vec3(1, 0, 0));  // clone
    c.push_back(Vec3(0.2, 0, 0), Vec4(1, 0, 0, 0), Vec3::Constant(std::log(0.2)), logit(0.5), Vec3(0, 1, 0));  // split
    c.push_back(Vec3(0, 0.2, 0), Vec4(1, 0, 0, 0), Vec3::Constant(std::log(0.01)), logit(0.5), Vec3(0, 0, 1));  // keep
    c.push_back(Vec3(0, 0, 0.2), Vec4(1, 0, 0, 0), Vec3::Constant(std::log(0.01)), logit(0.005), Vec3(1, 1, 1));  // prune
    DensifyStats stats(4);
    stats.grad_sum = {0.2, 0.3, 0.01, 0.0};
    stats.count = {2, 2, 2, 0};
    StaticFitConfig cfg;
    std::mt19937_64 rng(1);
    const DensifyResult r = densify_and_prune(c, stats, cfg, 1, rng);
    CHECK(r.cloned == 1);
    CHECK(r.split == 1);
    CHECK(r.pruned == 1);
    REQUIRE(c.size() == 5);
    CHECK(r.source == std::vector<std::ptrdiff_t>{0, 2, -1, -1, -1});
    CHECK(c.colors[2] == Vec3(1, 0, 0));
    CHECK(c.colors[3] == Vec3(0, 1, 0));
    CHECK(c.log_scales[3].x() == doctest::Approx(std::log(0.2) - std::log(1.6)));
    CHECK(c.log_scales[4].x() == doctest::Approx(std::log(0.2) - std::log(1.6)));
}

TEST_CASE("pruning never goes below the floor and takes lowest opacity first") {
    GaussianCloud c;
    for (int i = 0; i < 10; ++i) {
        c.push_back(Vec3(0.01 * i, 0, 0), Vec4(1, 0, 0, 0), Vec3::Constant(-3), logit(0.001 * (i + 1)), Vec3(0, 0, 0));
    }
    DensifyStats stats(10);
    StaticFitConfig cfg;
    std::mt19937_64 rng(1);
    const DensifyResult r = densify_and_prune(c, stats, cfg, 4, rng);
    CHECK(r.pruned == 6);
    REQUIRE(c.size() == 4);
    CHECK(r.source == std::vector<std::ptrdiff_t>{6, 7, 8, 9});
}

TEST_CASE("optimizer remap keeps moments of survivors and zeroes fresh ones") {
    CloudOptimizer opt(2);
    opt.positions.m = {1, 2, 3, 4, 5, 6};
    opt.opacity_logits.v = {7, 8};
    opt.positions.step = 5;
    opt.remap({1, -1, 0});
    CHECK(opt.positions.m == std::vector<double>{4, 5, 6, 0, 0, 0, 1, 2, 3});
    CHECK(opt.opacity_logits.v == std::vector<double>{8, 0, 7});
    CHECK(opt.positions.step == 5);
}

TEST_CASE("fit_static with 0 iterations returns the initialized cloud") {
    StaticFitInput in;
    in.reference_camera = camera(16);
    in.reference = Image(16, 16, 1.0);
    StaticFitConfig cfg;
    cfg.iterations = 0;
    cfg.initial_gaussians = 300;
    cfg.seed = 4;
    CHECK(same_cloud(fit_static(in, cfg), initialize_cloud(300, 0.5, 4)));
}

TEST_CASE("fit_static recovers a single red Gaussian") {
    GaussianCloud target;
    target.push_back(Vec3(0, 0, 0), Vec4(1, 0, 0, 0), Vec3::Constant(std::log(0.2)), logit(0.999), Vec3(1, 0, 0));
    StaticFitInput in;
    in.reference_camera = camera(48);
    in.reference = render(target, in.reference_camera, kWhite).rgb;
    in.guidance = oracle_guidance(target, kWhite);
    StaticFitConfig cfg;
    cfg.initial_gaussians = 500;
    cfg.iterations = 300;
    cfg.views.render_size = 48;
    cfg.seed = 2;
    const GaussianCloud fit = fit_static(in, cfg);
    double worst = 1e9;
    for (double az : {37.0, 121.0, -100.0, 178.0}) {
        const Camera held = camera(48, az, 20.0);
        worst = std::min(worst, psnr(render(fit, held, kWhite).rgb, render(target, held, kWhite).rgb));
    }
    INFO("worst held-out PSNR " << worst);
    CHECK(worst >= 35.0);
}

TEST_CASE("densification lowers the reference loss on a thin target") {
    GaussianCloud target;
    for (int i = 0; i < 60; ++i) {
        const double s = -0.45 + 0.9 * i / 59.0;
        target.push_back(Vec3(s, 0.25 * std::sin(6.0 * s), 0.0), Vec4(1, 0, 0, 0), Vec3::Constant(std::log(0.012)),
                         logit(0.99), Vec3(0.1, 0.1, 0.6));
    }
    StaticFitInput in;
    in.reference_camera = camera(64);
    in.reference = render(target, in.reference_camera, kWhite).rgb;
    in.guidance = oracle_guidance(target, kWhite);
    StaticFitConfig cfg;
    cfg.initial_gaussians = 200;
    cfg.iterations = 300;
    cfg.views_per_iteration = 4;
    cfg.views.render_size = 64;
    cfg.seed = 5;
    auto final_loss = [&](bool densify) {
        cfg.densify = densify;
        const GaussianCloud fit = fit_static(in, cfg);
        return mse(render(fit, in.reference_camera, kWhite).rgb, in.reference);
    };
    const double with = final_loss(true), without = final_loss(false);
    INFO("with " << with << " without " << without);
    CHECK(with < without);
}

TEST_CASE("fit_dynamic: first iteration sees the static render and noise 0.5") {
    const GaussianCloud cloud = five_gaussians();
    const Camera cam = camera(24);
    const DrivingVideo v = video_of(
        [&](double tau) {
            GaussianCloud c = cloud;
            for (Vec3& p : c.positions) p.x() += 0.1 * tau;
            return c;
        },
        4, cam);
    DynamicFitConfig cfg;
    cfg.iterations = 3;
    cfg.spatial_resolution = cfg.temporal_resolution = 4;
    cfg.feature_dim = 4;
    cfg.hidden_dim = 8;
    cfg.views.render_size = 16;
    std::vector<IterationLog> logs;
    (void)fit_dynamic(cloud, v, oracle_guidance(cloud, kWhite), cfg, [&](const IterationLog& l) { logs.push_back(l); });
    REQUIRE(logs.size() == 3);
    CHECK(logs[0].noise_level == 0.5);
    const int frame = static_cast<int>(std::lround(logs[0].tau * 3));
    CHECK(logs[0].ref_loss == mse(render(cloud, cam, kWhite).rgb, v.frames[static_cast<std::size_t>(frame)]));
}

TEST_CASE("fit_dynamic: frozen static cloud and reproducibility") {
    const GaussianCloud cloud = five_gaussians();
    const Camera cam = camera(24);
    const DrivingVideo v = video_of(
        [&](double tau) {
            GaussianCloud c = cloud;
            for (Vec3& p : c.positions) p.y() += 0.08 * tau;
            return c;
        },
        4, cam);
    DynamicFitConfig cfg;
    cfg.iterations = 6;
    cfg.spatial_resolution = cfg.temporal_resolution = 4;
    cfg.feature_dim = 4;
    cfg.hidden_dim = 8;
    cfg.views.render_size = 16;
    cfg.seed = 3;
    const auto a = fit_dynamic(cloud, v, oracle_guidance(cloud, kWhite), cfg);
    const auto b = fit_dynamic(cloud, v, oracle_guidance(cloud, kWhite), cfg);
    CHECK(same_cloud(a.cloud, cloud));
    CHECK(std::ranges::equal(a.model.field.values(), b.model.field.values()));
    CHECK(std::ranges::equal(a.model.decoder.parameters(), b.model.decoder.parameters()));
    CHECK(a.final_ref_loss == b.final_ref_loss);

    cfg.freeze_static = false;
    const auto c = fit_dynamic(cloud, v, oracle_guidance(cloud, kWhite), cfg);
    CHECK_FALSE(same_cloud(c.cloud, cloud));
}

TEST_CASE("fit_dynamic on a static video keeps the deformation near zero") {
    const GaussianCloud cloud = five_gaussians();
    const Camera cam = camera(32);
    const DrivingVideo v = video_of([&](double) { return cloud; }, 6, cam);
    DynamicFitConfig cfg;
    cfg.spatial_resolution = cfg.temporal_resolution = 8;
    cfg.feature_dim = 8;
    cfg.hidden_dim = 16;
    cfg.views.render_size = 24;
    const auto r = fit_dynamic(cloud, v, oracle_guidance(cloud, kWhite), cfg);
    double worst = 0.0;
    for (int f = 0; f < v.frame_count(); ++f) {
        const GaussianDelta d = compute_delta(cloud, r.model.field, r.model.decoder, v.tau(f));
        for (const Vec3& p : d.d_position) worst = std::max(worst, p.cwiseAbs().maxCoeff());
    }
    CHECK(worst < 1e-3);
    CHECK(r.final_ref_loss == 0.0);
}

TEST_CASE("non-finite guidance raises NumericalError") {
    struct NanGuidance final : GuidanceProvider {
        Image gradient(const GuidanceRequest& r) const override {
            return Image(r.rendered->width, r.rendered->height, std::nan(""));
        }
    };
    const GaussianCloud cloud = five_gaussians();
    const DrivingVideo v = video_of([&](double) { return cloud; }, 2, camera(16));
    DynamicFitConfig cfg;
    cfg.iterations = 2;
    cfg.spatial_resolution = cfg.temporal_resolution = 4;
    cfg.feature_dim = 2;
    cfg.hidden_dim = 4;
    cfg.views.render_size = 16;
    CHECK_THROWS_AS((void)fit_dynamic(cloud, v, std::make_shared<NanGuidance>(), cfg), NumericalError);
}
