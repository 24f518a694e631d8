#include "splat4d/hexplane.hpp"

#include "splat4d/errors.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace splat4d {

HexPlaneField::HexPlaneField(int spatial_res, int temporal_res, int feature_dim,
                             const SpaceTimeBox& domain, double fill)
    : spatial_res_(spatial_res), temporal_res_(temporal_res), feature_dim_(feature_dim), domain_(domain) {
    if (spatial_res < 2 || temporal_res < 2) throw RangeError("HexPlane resolutions must be >= 2");
    if (feature_dim < 1) throw RangeError("HexPlane feature dimension must be >= 1");
    for (int a = 0; a < 3; ++a) {
        if (!(domain.hi[a] > domain.lo[a])) throw RangeError("HexPlane domain box is empty");
    }
    if (!(domain.t_hi > domain.t_lo)) throw RangeError("HexPlane time range is empty");
    offsets_[0] = 0;
    for (int p = 0; p < kPlaneCount; ++p) {
        const auto plane = static_cast<Plane>(p);
        offsets_[p + 1] = offsets_[p] + static_cast<std::size_t>(plane_u_resolution(plane)) *
                                            plane_v_resolution(plane) * feature_dim;
    }
    data_.assign(offsets_[kPlaneCount], fill);
}

HexPlaneField HexPlaneField::random(int spatial_res, int temporal_res, int feature_dim,
                                    std::uint64_t seed, double lo, double hi,
                                    const SpaceTimeBox& domain) {
    HexPlaneField f(spatial_res, temporal_res, feature_dim, domain);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    for (double& v : f.data_) v = u(rng);
    return f;
}

int HexPlaneField::plane_u_resolution(Plane p) const { return axis_resolution(kPlaneAxes[static_cast<int>(p)][0]); }
int HexPlaneField::plane_v_resolution(Plane p) const { return axis_resolution(kPlaneAxes[static_cast<int>(p)][1]); }

std::span<double> HexPlaneField::plane(Plane p) {
    const int i = static_cast<int>(p);
    return std::span<double>(data_).subspan(offsets_[i], offsets_[i + 1] - offsets_[i]);
}

std::span<const double> HexPlaneField::plane(Plane p) const {
    const int i = static_cast<int>(p);
    return std::span<const double>(data_).subspan(offsets_[i], offsets_[i + 1] - offsets_[i]);
}

double& HexPlaneField::at(Plane p, int iu, int iv, int f) {
    return data_[offsets_[static_cast<int>(p)] +
                 (static_cast<std::size_t>(iv) * plane_u_resolution(p) + iu) * feature_dim_ + f];
}

double HexPlaneField::at(Plane p, int iu, int iv, int f) const {
    return data_[offsets_[static_cast<int>(p)] +
                 (static_cast<std::size_t>(iv) * plane_u_resolution(p) + iu) * feature_dim_ + f];
}

void HexPlaneField::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

double HexPlaneField::grid_coordinate(int axis, double value, bool* inside) const {
    const double lo = axis == 3 ? domain_.t_lo : domain_.lo[axis];
    const double hi = axis == 3 ? domain_.t_hi : domain_.hi[axis];
    const double res = axis_resolution(axis);
    const double g = (value - lo) / (hi - lo) * (res - 1.0);
    const double c = std::clamp(g, 0.0, res - 1.0);
    if (inside != nullptr) *inside = (g >= 0.0 && g <= res - 1.0);
    return c;
}

namespace {

double coordinate(const Vec3& p, double tau, int axis) { return axis == 3 ? tau : p[axis]; }

}  // namespace

Eigen::VectorXd query_plane(const HexPlaneField& field, Plane plane, const Vec3& position, double tau) {
    const auto [au, av] = kPlaneAxes[static_cast<int>(plane)];
    const double gu = field.grid_coordinate(au, coordinate(position, tau, au));
    const double gv = field.grid_coordinate(av, coordinate(position, tau, av));
    const int u0 = std::min(static_cast<int>(gu), field.axis_resolution(au) - 2);
    const int v0 = std::min(static_cast<int>(gv), field.axis_resolution(av) - 2);
    const double a = gu - u0, b = gv - v0;
    const int nf = field.feature_dim();
    Eigen::VectorXd out(nf);
    for (int f = 0; f < nf; ++f) {
        out[f] = (1 - a) * (1 - b) * field.at(plane, u0, v0, f) + a * (1 - b) * field.at(plane, u0 + 1, v0, f) +
                 (1 - a) * b * field.at(plane, u0, v0 + 1, f) + a * b * field.at(plane, u0 + 1, v0 + 1, f);
    }
    return out;
}

Eigen::VectorXd query(const HexPlaneField& field, const Vec3& position, double tau) {
    Eigen::VectorXd out = Eigen::VectorXd::Ones(field.feature_dim());
    for (int p = 0; p < kPlaneCount; ++p) {
        out.array() *= query_plane(field, static_cast<Plane>(p), position, tau).array();
    }
    return out;
}

}  // namespace splat4d
