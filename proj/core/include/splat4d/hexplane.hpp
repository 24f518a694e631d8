#pragma once

#include "splat4d/gaussians.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace splat4d {

/// Axis-aligned space-time box the field is defined on. Queries outside are
/// clamped to the boundary.
struct SpaceTimeBox {
    Vec3 lo = Vec3::Constant(-1.0);
    Vec3 hi = Vec3::Constant(1.0);
    double t_lo = 0.0;
    double t_hi = 1.0;

    bool operator==(const SpaceTimeBox&) const = default;
};

/// The six planes, each spanned by an (u, v) axis pair. Axis 3 is time.
enum class Plane : int { XY = 0, XZ = 1, YZ = 2, XT = 3, YT = 4, ZT = 5 };
inline constexpr int kPlaneCount = 6;
inline constexpr std::array<std::array<int, 2>, kPlaneCount> kPlaneAxes{
    {{0, 1}, {0, 2}, {1, 2}, {0, 3}, {1, 3}, {2, 3}}};

/// Six factorized feature planes over (x, y, z, τ). Spatial planes are S×S×F,
/// space-time planes S×T×F. All planes live in one flat buffer so the
/// optimizer can treat the field as a single parameter group.
///
/// Element (iu, iv, f) of a plane is stored at ((iv * res_u) + iu) * F + f.
class HexPlaneField {
public:
    HexPlaneField() = default;
    HexPlaneField(int spatial_res, int temporal_res, int feature_dim, const SpaceTimeBox& domain = {},
                  double fill = 1.0);

    /// Planes filled uniformly in [lo, hi]; the default keeps the fused product near 1.
    [[nodiscard]] static HexPlaneField random(int spatial_res, int temporal_res, int feature_dim,
                                              std::uint64_t seed, double lo = 0.9, double hi = 1.1,
                                              const SpaceTimeBox& domain = {});

    [[nodiscard]] int spatial_resolution() const { return spatial_res_; }
    [[nodiscard]] int temporal_resolution() const { return temporal_res_; }
    [[nodiscard]] int feature_dim() const { return feature_dim_; }
    [[nodiscard]] const SpaceTimeBox& domain() const { return domain_; }

    /// Grid resolution along axis 0..3.
    [[nodiscard]] int axis_resolution(int axis) const { return axis == 3 ? temporal_res_ : spatial_res_; }
    [[nodiscard]] int plane_u_resolution(Plane p) const;
    [[nodiscard]] int plane_v_resolution(Plane p) const;

    [[nodiscard]] std::span<double> values() { return data_; }
    [[nodiscard]] std::span<const double> values() const { return data_; }
    [[nodiscard]] std::span<double> plane(Plane p);
    [[nodiscard]] std::span<const double> plane(Plane p) const;
    [[nodiscard]] std::size_t plane_offset(Plane p) const { return offsets_[static_cast<int>(p)]; }

    double& at(Plane p, int iu, int iv, int f);
    [[nodiscard]] double at(Plane p, int iu, int iv, int f) const;

    void fill(double v);

    /// Continuous grid coordinate along `axis` for a world coordinate,
    /// clamped to [0, res-1]. `inside` reports whether clamping was inactive.
    [[nodiscard]] double grid_coordinate(int axis, double value, bool* inside = nullptr) const;

    bool operator==(const HexPlaneField&) const = default;

private:
    int spatial_res_ = 0;
    int temporal_res_ = 0;
    int feature_dim_ = 0;
    SpaceTimeBox domain_;
    std::vector<double> data_;
    std::array<std::size_t, kPlaneCount + 1> offsets_{};
};

/// Bilinear-interpolates each plane at (x, y, z, τ) and fuses the six
/// F-vectors by element-wise product.
[[nodiscard]] Eigen::VectorXd query(const HexPlaneField& field, const Vec3& position, double tau);

/// Single-plane bilinear lookup (before fusion).
[[nodiscard]] Eigen::VectorXd query_plane(const HexPlaneField& field, Plane plane,
                                          const Vec3& position, double tau);

}  // namespace splat4d
