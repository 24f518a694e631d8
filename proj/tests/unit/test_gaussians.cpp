#include "splat4d/errors.hpp"
#include "splat4d/gaussians.hpp"

#include <doctest.h>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>
#include <random>

using namespace splat4d;

namespace {

GaussianCloud one_gaussian() {
    GaussianCloud c;
    c.push_back(Vec3::Zero(), Vec4(1, 0, 0, 0), Vec3(-2, -2, -2), 0.5, Vec3(0.2, 0.4, 0.6));
    return c;
}

}  // namespace

TEST_CASE("apply_delta with a zero delta is the identity") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    GaussianCloud c;
    for (int i = 0; i < 50; ++i) {
        c.push_back(Vec3(n(rng), n(rng), n(rng)), Vec4(n(rng), n(rng), n(rng), n(rng)),
                    Vec3(n(rng), n(rng), n(rng)), n(rng), Vec3(0.1, 0.5, 0.9));
    }
    const GaussianCloud out = apply_delta(c, GaussianDelta(c.size()));
    CHECK(out == c);
}

TEST_CASE("apply_delta translates") {
    const GaussianCloud c = one_gaussian();
    GaussianDelta d(1);
    d.d_position[0] = Vec3(0.1, 0, 0);
    const GaussianCloud out = apply_delta(c, d);
    CHECK(out.positions[0] == Vec3(0.1, 0, 0));
    CHECK(out.rotations == c.rotations);
    CHECK(out.log_scales == c.log_scales);
    CHECK(out.opacity_logits == c.opacity_logits);
    CHECK(out.colors == c.colors);
}

TEST_CASE("apply_delta renormalizes the summed quaternion") {
    const GaussianCloud c = one_gaussian();
    GaussianDelta d(1);
    d.d_rotation[0] = Vec4(0, 1, 0, 0);
    const Vec4 q = apply_delta(c, d).rotations[0];
    const double h = 1.0 / std::sqrt(2.0);
    CHECK(q[0] == doctest::Approx(h).epsilon(1e-15));
    CHECK(q[1] == doctest::Approx(h).epsilon(1e-15));
    CHECK(q[2] == 0.0);
    CHECK(q[3] == 0.0);
}

TEST_CASE("apply_delta rejects size mismatch") {
    CHECK_THROWS_AS((void)apply_delta(one_gaussian(), GaussianDelta(2)), DimensionError);
}

TEST_CASE("build_covariance examples") {
    CHECK(build_covariance(Vec4(1, 0, 0, 0), Vec3::Zero()).isApprox(Mat3::Identity(), 1e-15));
    const Mat3 a = build_covariance(Vec4(1, 0, 0, 0), Vec3(std::log(2.0), 0, 0));
    CHECK((a - Vec3(4, 1, 1).asDiagonal().toDenseMatrix()).norm() < 1e-12);
    // 90 degrees about z: (cos 45, 0, 0, sin 45); x axis maps to y.
    const double h = std::sqrt(0.5);
    const Mat3 b = build_covariance(Vec4(h, 0, 0, h), Vec3(std::log(2.0), 0, 0));
    CHECK((b - Vec3(1, 4, 1).asDiagonal().toDenseMatrix()).norm() < 1e-12);
}

TEST_CASE("build_covariance is symmetric, positive definite, with rotation-free determinant") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> ls(-4.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const Vec4 q(n(rng), n(rng), n(rng), n(rng));
        const Vec3 s(ls(rng), ls(rng), ls(rng));
        const Mat3 cov = build_covariance(q, s);
        CHECK((cov - cov.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(Eigen::LLT<Mat3>(cov).info() == Eigen::Success);
        const double expected = std::exp(2.0 * s.sum());
        CHECK(std::abs(cov.determinant() - expected) <= 1e-9 * expected);
        CHECK(std::abs(normalize_quaternion(q).norm() - 1.0) <= 1e-6);
    }
}

TEST_CASE("eigenvalues of the covariance are the squared scales") {
    const Vec3 s(std::log(0.5), std::log(1.5), std::log(3.0));
    const Mat3 cov = build_covariance(Vec4(0.3, -0.2, 0.7, 0.1), s);
    Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
    const Vec3 ev = es.eigenvalues();
    CHECK(ev[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(ev[1] == doctest::Approx(2.25).epsilon(1e-12));
    CHECK(ev[2] == doctest::Approx(9.0).epsilon(1e-12));
}

TEST_CASE("opacity stays strictly inside (0, 1) for moderate logits") {
    for (double x : {-30.0, -5.0, 0.0, 5.0, 30.0}) {
        const double p = sigmoid(x);
        CHECK(p > 0.0);
        CHECK(p < 1.0);
    }
    CHECK(logit(sigmoid(0.3)) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("filter keeps order and consistency") {
    GaussianCloud c;
    for (int i = 0; i < 5; ++i) c.push_back(Vec3(i, 0, 0), Vec4(1, 0, 0, 0), Vec3::Zero(), 0.0, Vec3::Zero());
    c.filter({true, false, true, false, true});
    REQUIRE(c.size() == 3);
    CHECK(c.positions[1].x() == 2.0);
    CHECK_NOTHROW(c.check_consistent());
    c.colors.pop_back();
    CHECK_THROWS_AS(c.check_consistent(), DimensionError);
}
