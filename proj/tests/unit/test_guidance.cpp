#include "splat4d/errors.hpp"
#include "splat4d/external_provider.hpp"
#include "splat4d/guidance.hpp"
#include "splat4d/rasterizer.hpp"

#include <doctest.h>

#include <random>

using namespace splat4d;

namespace {

Image random_image(int w, int h, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(w, h);
    for (double& v : img.data) v = u(rng);
    return img;
}

GaussianCloud two_blobs() {
    GaussianCloud c;
    c.push_back(Vec3(0.1, 0, 0), Vec4(1, 0, 0, 0), Vec3::Constant(std::log(0.15)), logit(0.8), Vec3(0.9, 0.2, 0.1));
    c.push_back(Vec3(-0.2, 0.1, 0.1), Vec4(1, 0, 0, 0), Vec3::Constant(std::log(0.1)), logit(0.7), Vec3(0.1, 0.3, 0.9));
    return c;
}

Camera small_camera(double azimuth = 0.0) {
    Camera c;
    c.azimuth = azimuth;
    c.width = c.height = 24;
    return c;
}

}  // namespace

TEST_CASE("noise schedules hit their endpoints exactly") {
    CHECK(noise_at(kStaticSchedule, 0) == 0.98);
    CHECK(noise_at(kStaticSchedule, 500) == 0.02);
    CHECK(noise_at(kDynamicSchedule, 0) == 0.5);
    CHECK(noise_at(kDynamicSchedule, 200) == 0.02);
    CHECK(noise_at(kRefineSchedule, 0) == 0.7);
    CHECK(noise_at(kRefineSchedule, 25) == 0.7);
    CHECK(noise_at(kRefineSchedule, 50) == 0.7);
}

TEST_CASE("noise schedule is linear and non-increasing") {
    CHECK(noise_at(kStaticSchedule, 250) == doctest::Approx(0.5).epsilon(1e-12));
    double prev = noise_at(kDynamicSchedule, 0);
    for (int i = 1; i <= 200; ++i) {
        const double t = noise_at(kDynamicSchedule, i);
        CHECK(t <= prev);
        prev = t;
    }
    CHECK_THROWS_AS((void)noise_at(kStaticSchedule, -1), RangeError);
    CHECK_THROWS_AS((void)noise_at(kStaticSchedule, 501), RangeError);
}

TEST_CASE("zero-length schedule returns t_start") {
    const NoiseSchedule s{0.4, 0.1, 0};
    CHECK(noise_at(s, 0) == 0.4);
}

TEST_CASE("oracle guidance is w(t) times the residual") {
    const Image gt = random_image(8, 6, 1);
    const Image rendered = random_image(8, 6, 2);
    auto provider = oracle_guidance([&](const Camera&, double) { return gt; });
    GuidanceRequest req;
    req.rendered = &rendered;
    req.noise_level = 0.3;
    const Image g = provider->gradient(req);
    REQUIRE(g.same_shape(rendered));
    for (std::size_t i = 0; i < g.data.size(); ++i) CHECK(g.data[i] == 0.3 * (rendered.data[i] - gt.data[i]));
}

TEST_CASE("oracle guidance vanishes exactly at the target and only there") {
    const GaussianCloud target = two_blobs();
    const Rgb bg(1, 1, 1);
    auto provider = oracle_guidance(target, bg);
    const Camera cam = small_camera(40.0);
    const Image at_target = render(target, cam, bg).rgb;
    GuidanceRequest req;
    req.rendered = &at_target;
    req.camera = cam;
    req.noise_level = 0.98;
    CHECK(provider->gradient(req).data == std::vector<double>(at_target.data.size(), 0.0));

    Image off = at_target;
    off.data[17] += 1e-3;
    const Image g = provider->gradient({.rendered = &off, .camera = cam, .noise_level = 0.98});
    for (std::size_t i = 0; i < g.data.size(); ++i) CHECK((g.data[i] != 0.0) == (i == 17));
}

TEST_CASE("render_source follows the time-varying target") {
    auto source = render_source(
        [](double tau) {
            GaussianCloud c = two_blobs();
            for (Vec3& p : c.positions) p.x() += 0.3 * tau;
            return c;
        },
        Rgb(1, 1, 1));
    const Camera cam = small_camera();
    CHECK(source(cam, 0.0).data == render(two_blobs(), cam, Rgb(1, 1, 1)).rgb.data);
    CHECK(source(cam, 1.0).data != source(cam, 0.0).data);
}

TEST_CASE("image set source refuses unknown views") {
    const Camera a = small_camera(0.0), b = small_camera(90.0);
    auto source = image_set_source({ViewImage{a, 0.0, random_image(24, 24, 3)}});
    CHECK(source(a, 0.0).data == random_image(24, 24, 3).data);
    CHECK_THROWS_AS((void)source(b, 0.0), CoverageError);
    CHECK_THROWS_AS((void)source(a, 0.5), CoverageError);
}

TEST_CASE("zero guidance returns zeros of the right size") {
    const Image r = random_image(5, 7, 4);
    const Image g = ZeroGuidance().gradient({.rendered = &r});
    CHECK(g.same_shape(r));
    CHECK(g.data == std::vector<double>(r.data.size(), 0.0));
}

TEST_CASE("add_noise is seeded, clamped and stream dependent") {
    const Image img(16, 16, 0.5);
    const Image a = add_noise(img, 0.7, 9, 0);
    CHECK(a.data == add_noise(img, 0.7, 9, 0).data);
    CHECK(a.data != add_noise(img, 0.7, 9, 1).data);
    CHECK(a.data != add_noise(img, 0.7, 10, 0).data);
    for (double v : a.data) CHECK((v >= 0.0 && v <= 1.0));
    CHECK(add_noise(img, 0.0, 9, 0).data == img.data);
}

TEST_CASE("add_noise has the requested spread before clamping") {
    const Image img(128, 128, 0.5);
    const Image n = add_noise(img, 0.05, 3, 2);
    double sum = 0, sq = 0;
    for (double v : n.data) {
        sum += v - 0.5;
        sq += (v - 0.5) * (v - 0.5);
    }
    const double count = static_cast<double>(n.data.size());
    CHECK(std::abs(sum / count) < 0.002);
    CHECK(std::sqrt(sq / count) == doctest::Approx(0.05).epsilon(0.03));
}

TEST_CASE("identity refiner strips the noise") {
    std::vector<Image> clean{random_image(6, 6, 1), random_image(6, 6, 2)};
    std::vector<Image> noisy{add_noise(clean[0], 0.7, 1, 0), add_noise(clean[1], 0.7, 1, 1)};
    std::vector<Camera> cams{small_camera(0), small_camera(10)};
    std::vector<double> taus{0.0, 1.0};
    const auto out = identity_refiner()->refine({noisy, clean, cams, taus});
    REQUIRE(out.size() == 2);
    CHECK(out[0].data == clean[0].data);
    CHECK(out[1].data == clean[1].data);
}

TEST_CASE("oracle refiner returns ground truth along the trajectory") {
    const GaussianCloud target = two_blobs();
    auto refiner = oracle_refiner(render_source(target, Rgb(1, 1, 1)));
    std::vector<Camera> cams{small_camera(0), small_camera(45)};
    std::vector<Image> clean{Image(24, 24, 0.0), Image(24, 24, 0.0)};
    std::vector<Image> noisy = clean;
    std::vector<double> taus{0.0, 0.5};
    const auto out = refiner->refine({noisy, clean, cams, taus});
    REQUIRE(out.size() == 2);
    CHECK(out[1].data == render(target, cams[1], Rgb(1, 1, 1)).rgb.data);

    auto partial = oracle_refiner(image_set_source({ViewImage{cams[0], 0.0, Image(24, 24, 1.0)}}));
    CHECK_THROWS_AS((void)partial->refine({noisy, clean, cams, taus}), CoverageError);
}

TEST_CASE("providers are deterministic across calls") {
    const GaussianCloud target = two_blobs();
    auto provider = oracle_guidance(target, Rgb(0, 0, 0));
    const Image r = random_image(24, 24, 5);
    const GuidanceRequest req{.rendered = &r, .camera = small_camera(12), .noise_level = 0.4, .seed = 3};
    CHECK(provider->gradient(req).data == provider->gradient(req).data);
}

TEST_CASE("external provider speaks the line protocol") {
    ExternalProvider ext(std::string("python3 ") + SPLAT4D_FIXTURE_DIR + "/echo_provider.py");
    const Image r = random_image(9, 5, 6);
    const Image g = ext.gradient({.rendered = &r, .camera = small_camera(10), .noise_level = 0.5});
    REQUIRE(g.same_shape(r));
    for (std::size_t i = 0; i < g.data.size(); ++i) CHECK(g.data[i] == doctest::Approx(r.data[i]).epsilon(1e-6));

    CHECK_THROWS_AS((void)ext.gradient({.rendered = &r, .camera = small_camera(175)}), CoverageError);
    // still usable after a refused request
    CHECK_NOTHROW((void)ext.gradient({.rendered = &r, .camera = small_camera(0)}));

    std::vector<Image> clean{random_image(4, 4, 7), random_image(4, 4, 8)};
    std::vector<Image> noisy{Image(4, 4, 0.0), Image(4, 4, 1.0)};
    std::vector<Camera> cams{small_camera(0), small_camera(30)};
    std::vector<double> taus{0.0, 1.0};
    const auto out = ext.refine({noisy, clean, cams, taus});
    REQUIRE(out.size() == 2);
    for (std::size_t i = 0; i < out[1].data.size(); ++i) {
        CHECK(out[1].data[i] == doctest::Approx(clean[1].data[i]).epsilon(1e-6));
    }
}

TEST_CASE("external provider that cannot start or dies reports IoError") {
    ExternalProvider dead("exit 0");
    const Image r(4, 4, 0.5);
    CHECK_THROWS_AS((void)dead.gradient({.rendered = &r}), IoError);
}
