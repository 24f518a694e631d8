#include "splat4d/camera.hpp"

#include "splat4d/errors.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>

#include <cmath>
#include <numbers>

namespace splat4d {

double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

void Camera::validate() const {
    if (width < 1 || height < 1) throw RangeError("camera width and height must be >= 1");
    if (!(near > 0.0) || !(far > near)) throw RangeError("camera requires 0 < near < far");
    if (!(radius > 0.0)) throw RangeError("camera radius must be positive");
    if (!(fov_y > 0.0 && fov_y < 180.0)) throw RangeError("camera fov_y must be in (0, 180)");
    if (!(std::abs(elevation) < 90.0)) throw RangeError("camera elevation must be in (-90, 90)");
}

Vec3 Camera::position() const {
    const double az = deg_to_rad(azimuth);
    const double el = deg_to_rad(elevation);
    return radius * Vec3(std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az));
}

RigidTransform Camera::world_to_camera() const {
    const double az = deg_to_rad(azimuth);
    const double el = deg_to_rad(elevation);
    const Vec3 forward(-std::cos(el) * std::sin(az), -std::sin(el), -std::cos(el) * std::cos(az));
    const Vec3 right = forward.cross(Vec3::UnitY()).normalized();
    const Vec3 down = forward.cross(right);
    RigidTransform t;
    t.rotation.row(0) = right.transpose();
    t.rotation.row(1) = down.transpose();
    t.rotation.row(2) = forward.transpose();
    // The orbit target (origin) sits on the optical axis at depth `radius`.
    t.translation = Vec3(0.0, 0.0, radius);
    return t;
}

double Camera::focal() const { return 0.5 * height / std::tan(0.5 * deg_to_rad(fov_y)); }

Vec2 Camera::project(const Vec3& p) const {
    const double f = focal();
    return {f * p.x() / p.z() + 0.5 * width, f * p.y() / p.z() + 0.5 * height};
}

}  // namespace splat4d
