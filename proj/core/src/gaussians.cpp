#include "splat4d/gaussians.hpp"

#include "splat4d/errors.hpp"

#include <cmath>
#include <string>

namespace splat4d {

GaussianCloud::GaussianCloud(std::size_t n) { resize(n); }

void GaussianCloud::check_consistent() const {
    const std::size_t n = positions.size();
    if (rotations.size() != n || log_scales.size() != n || opacity_logits.size() != n ||
        colors.size() != n) {
        throw DimensionError("GaussianCloud arrays disagree in length (positions=" +
                             std::to_string(n) + ")");
    }
}

void GaussianCloud::resize(std::size_t n) {
    positions.resize(n, Vec3::Zero());
    rotations.resize(n, Vec4(1, 0, 0, 0));
    log_scales.resize(n, Vec3::Zero());
    opacity_logits.resize(n, 0.0);
    colors.resize(n, Vec3::Zero());
}

void GaussianCloud::push_back(const Vec3& position, const Vec4& rotation, const Vec3& log_scale,
                              double opacity_logit, const Vec3& color) {
    positions.push_back(position);
    rotations.push_back(rotation);
    log_scales.push_back(log_scale);
    opacity_logits.push_back(opacity_logit);
    colors.push_back(color);
}

namespace {

template <typename T>
void keep_masked(std::vector<T>& v, const std::vector<bool>& keep) {
    std::size_t out = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (keep[i]) v[out++] = v[i];
    }
    v.resize(out);
}

}  // namespace

void GaussianCloud::filter(const std::vector<bool>& keep) {
    if (keep.size() != size()) throw DimensionError("filter mask size does not match cloud size");
    keep_masked(positions, keep);
    keep_masked(rotations, keep);
    keep_masked(log_scales, keep);
    keep_masked(opacity_logits, keep);
    keep_masked(colors, keep);
}

double GaussianCloud::opacity(std::size_t i) const { return sigmoid(opacity_logits[i]); }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) { return std::log(p / (1.0 - p)); }

Vec4 normalize_quaternion(const Vec4& q) { return q / q.norm(); }

Mat3 quaternion_to_matrix(const Vec4& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),  //
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),  //
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

Vec4 quaternion_matrix_backward(const Vec4& q, const Mat3& g) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Vec4 d;
    d[0] = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    d[1] = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) +
                z * g(2, 0) + w * g(2, 1) - 2 * x * g(2, 2));
    d[2] = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) -
                w * g(2, 0) + z * g(2, 1) - 2 * y * g(2, 2));
    d[3] = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) +
                y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
    return d;
}

Vec4 normalize_backward(const Vec4& q, const Vec4& g) {
    const double n = q.norm();
    const Vec4 u = q / n;
    return (g - u * u.dot(g)) / n;
}

Mat3 build_covariance(const Vec4& rotation, const Vec3& log_scale) {
    const Mat3 r = quaternion_to_matrix(normalize_quaternion(rotation));
    const Vec3 var = (2.0 * log_scale).array().exp();
    return r * var.asDiagonal() * r.transpose();
}

GaussianCloud apply_delta(const GaussianCloud& cloud, const GaussianDelta& delta) {
    cloud.check_consistent();
    if (delta.d_position.size() != cloud.size() || delta.d_rotation.size() != cloud.size() ||
        delta.d_log_scale.size() != cloud.size()) {
        throw DimensionError("delta size " + std::to_string(delta.size()) +
                             " does not match cloud size " + std::to_string(cloud.size()));
    }
    GaussianCloud out = cloud;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        out.positions[i] += delta.d_position[i];
        out.log_scales[i] += delta.d_log_scale[i];
        if (!(delta.d_rotation[i].array() == 0.0).all()) {
            out.rotations[i] = normalize_quaternion(cloud.rotations[i] + delta.d_rotation[i]);
        }
    }
    return out;
}

std::span<double> flat(std::vector<Vec3>& v) { return {v.data()->data(), v.size() * 3}; }
std::span<double> flat(std::vector<Vec4>& v) { return {v.data()->data(), v.size() * 4}; }
std::span<const double> flat(const std::vector<Vec3>& v) { return {v.data()->data(), v.size() * 3}; }
std::span<const double> flat(const std::vector<Vec4>& v) { return {v.data()->data(), v.size() * 4}; }

}  // namespace splat4d
