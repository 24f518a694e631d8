#pragma once

#include "splat4d/gaussians.hpp"

namespace splat4d {

struct RigidTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    [[nodiscard]] Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
};

/// Orbit camera looking at the world origin. World space is y-up; camera
/// space has x right, y down and z along the viewing direction. Azimuth 0
/// places the camera on +z, positive azimuth swings it toward +x, positive
/// elevation lifts it above the xz-plane.
struct Camera {
    double azimuth = 0.0;    // degrees
    double elevation = 0.0;  // degrees
    double radius = 2.0;
    double fov_y = 49.1;  // degrees
    int width = 256;
    int height = 256;
    double near = 0.01;
    double far = 100.0;

    /// Throws RangeError for non-positive sizes, bad clip planes, or a
    /// degenerate pose.
    void validate() const;

    [[nodiscard]] RigidTransform world_to_camera() const;
    [[nodiscard]] Vec3 position() const;
    [[nodiscard]] double focal() const;  // pixels; square pixels
    [[nodiscard]] Vec2 principal_point() const { return {0.5 * width, 0.5 * height}; }

    /// Camera-space point to continuous pixel coordinates.
    [[nodiscard]] Vec2 project(const Vec3& p_cam) const;

    [[nodiscard]] Camera with_size(int w, int h) const {
        Camera c = *this;
        c.width = w;
        c.height = h;
        return c;
    }

    bool operator==(const Camera&) const = default;
};

[[nodiscard]] double deg_to_rad(double deg);

}  // namespace splat4d
