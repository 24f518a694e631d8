#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <span>
#include <vector>

namespace splat4d {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;  // quaternions are stored (w, x, y, z)
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

static_assert(sizeof(Vec3) == 3 * sizeof(double));
static_assert(sizeof(Vec4) == 4 * sizeof(double));

/// Static 3D Gaussian scene. Structure-of-arrays; every array has size().
///
/// Rotations are stored unnormalized and normalized on use, scales are
/// natural logs of per-axis standard deviations, opacity is a logit, and
/// color is a constant RGB per Gaussian.
struct GaussianCloud {
    std::vector<Vec3> positions;
    std::vector<Vec4> rotations;
    std::vector<Vec3> log_scales;
    std::vector<double> opacity_logits;
    std::vector<Vec3> colors;

    GaussianCloud() = default;
    explicit GaussianCloud(std::size_t n);

    [[nodiscard]] std::size_t size() const { return positions.size(); }
    [[nodiscard]] bool empty() const { return positions.empty(); }

    /// Throws DimensionError when the arrays disagree in length.
    void check_consistent() const;

    void resize(std::size_t n);
    void push_back(const Vec3& position, const Vec4& rotation, const Vec3& log_scale,
                   double opacity_logit, const Vec3& color);
    /// Keeps the Gaussians whose mask entry is true, preserving order.
    void filter(const std::vector<bool>& keep);

    [[nodiscard]] double opacity(std::size_t i) const;

    bool operator==(const GaussianCloud&) const = default;
};

/// Per-Gaussian additive offsets produced by the deformation field.
struct GaussianDelta {
    std::vector<Vec3> d_position;
    std::vector<Vec4> d_rotation;
    std::vector<Vec3> d_log_scale;

    GaussianDelta() = default;
    explicit GaussianDelta(std::size_t n)
        : d_position(n, Vec3::Zero()), d_rotation(n, Vec4::Zero()), d_log_scale(n, Vec3::Zero()) {}

    [[nodiscard]] std::size_t size() const { return d_position.size(); }
};

[[nodiscard]] double sigmoid(double x);
[[nodiscard]] double logit(double p);

[[nodiscard]] Vec4 normalize_quaternion(const Vec4& q);
/// Rotation matrix of a unit quaternion (w, x, y, z).
[[nodiscard]] Mat3 quaternion_to_matrix(const Vec4& unit_q);
/// Gradient of L with respect to a unit quaternion given dL/dR.
[[nodiscard]] Vec4 quaternion_matrix_backward(const Vec4& unit_q, const Mat3& dL_dR);
/// Pulls a gradient through q -> q / |q|.
[[nodiscard]] Vec4 normalize_backward(const Vec4& q, const Vec4& dL_dunit);

/// R·diag(exp(2·log_scale))·Rᵀ with R from the normalized quaternion.
[[nodiscard]] Mat3 build_covariance(const Vec4& rotation, const Vec3& log_scale);

/// Adds a delta to a cloud: positions and log-scales are summed, quaternions
/// are summed component-wise and renormalized. Opacity and color pass
/// through. Gaussians whose rotation delta is exactly zero keep their stored
/// quaternion unchanged, so a zero delta reproduces the cloud bit-for-bit.
[[nodiscard]] GaussianCloud apply_delta(const GaussianCloud& cloud, const GaussianDelta& delta);

/// Flat views used by the optimizer.
[[nodiscard]] std::span<double> flat(std::vector<Vec3>& v);
[[nodiscard]] std::span<double> flat(std::vector<Vec4>& v);
[[nodiscard]] std::span<const double> flat(const std::vector<Vec3>& v);
[[nodiscard]] std::span<const double> flat(const std::vector<Vec4>& v);

}  // namespace splat4d
