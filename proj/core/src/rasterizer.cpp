#include "splat4d/rasterizer.hpp"

#include "splat4d/errors.hpp"
#include "splat4d/parallel.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numeric>

namespace splat4d {

RenderGradients::RenderGradients(std::size_t n) { resize(n); }

void RenderGradients::resize(std::size_t n) {
    positions.assign(n, Vec3::Zero());
    rotations.assign(n, Vec4::Zero());
    log_scales.assign(n, Vec3::Zero());
    opacity_logits.assign(n, 0.0);
    colors.assign(n, Vec3::Zero());
    screen_grad_norm.assign(n, 0.0);
    visible.assign(n, 0);
}

void RenderGradients::set_zero() { resize(size()); }

RenderGradients& RenderGradients::operator+=(const RenderGradients& o) {
    if (o.size() != size()) throw DimensionError("RenderGradients size mismatch");
    for (std::size_t i = 0; i < size(); ++i) {
        positions[i] += o.positions[i];
        rotations[i] += o.rotations[i];
        log_scales[i] += o.log_scales[i];
        opacity_logits[i] += o.opacity_logits[i];
        colors[i] += o.colors[i];
        screen_grad_norm[i] += o.screen_grad_norm[i];
        visible[i] = static_cast<std::uint8_t>(visible[i] | o.visible[i]);
    }
    return *this;
}

RenderGradients& RenderGradients::operator*=(double s) {
    for (std::size_t i = 0; i < size(); ++i) {
        positions[i] *= s;
        rotations[i] *= s;
        log_scales[i] *= s;
        opacity_logits[i] *= s;
        colors[i] *= s;
    }
    return *this;
}

bool RenderGradients::all_zero() const { return squared_norm() == 0.0; }

double RenderGradients::squared_norm() const {
    double s = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
        s += positions[i].squaredNorm() + rotations[i].squaredNorm() +
             log_scales[i].squaredNorm() + opacity_logits[i] * opacity_logits[i] +
             colors[i].squaredNorm();
    }
    return s;
}

namespace {

using raster::kCutoffQuad;
using raster::kLowPassDilation;
using raster::kMinTransmittance;
using raster::kTileSize;

const double kCutoffValue = std::exp(-0.5 * kCutoffQuad);

// Truncated kernel. exp(-q/2) minus its first-order Taylor expansion at the
// cutoff, rescaled to peak at 1, so value and slope both vanish at q = 9 and
// finite differences see no kink where a pixel leaves the support.
const double kKernelNorm = 1.0 - kCutoffValue * (1.0 + 0.5 * kCutoffQuad);
inline double kernel_from_exp(double e, double q) {
    return (e - kCutoffValue * (1.0 + 0.5 * (kCutoffQuad - q))) / kKernelNorm;
}
inline double kernel(double q) { return kernel_from_exp(std::exp(-0.5 * q), q); }
// dk/dq given e = exp(-q/2)
inline double kernel_derivative_from_exp(double e) { return -0.5 * (e - kCutoffValue) / kKernelNorm; }

// Screen-space splat in sorted order.
struct Splat {
    double mx, my;
    double a00, a01, a11;  // inverse screen covariance
    double opacity;
    Vec3 color;
    std::size_t index;  // Gaussian index in the cloud
    int x0, x1, y0, y1;  // inclusive pixel bounds
};

// Per-Gaussian intermediates kept for the backward pass.
struct Projection {
    bool visible = false;
    double depth = 0.0;
    Vec3 p_cam;
    Mat3 rotation;  // from the normalized quaternion
    Vec3 scale;
    Mat3 cov_cam;
    Mat2 cov2d;
    Mat2 conic;
    Vec2 mean;
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  // inclusive pixel bounds
};

struct Frame {
    int width = 0, height = 0;
    int tiles_x = 0, tiles_y = 0;
    std::vector<Projection> proj;
    std::vector<Splat> splats;               // visible Gaussians, depth order
    std::vector<std::size_t> tile_offsets;   // CSR offsets, tiles_x*tiles_y+1
    std::vector<std::uint32_t> tile_entries; // indices into splats
};

Projection project_one(const GaussianCloud& cloud, std::size_t i, const RigidTransform& view,
                       const Camera& cam, double focal) {
    Projection p;
    p.p_cam = view.apply(cloud.positions[i]);
    const double z = p.p_cam.z();
    if (!(z > cam.near && z < cam.far)) return p;

    const Vec4 q = normalize_quaternion(cloud.rotations[i]);
    p.rotation = quaternion_to_matrix(q);
    p.scale = cloud.log_scales[i].array().exp();
    const Vec3 var = p.scale.array().square();
    const Mat3 cov = p.rotation * var.asDiagonal() * p.rotation.transpose();
    p.cov_cam = view.rotation * cov * view.rotation.transpose();

    Eigen::Matrix<double, 2, 3> j;
    j << focal / z, 0.0, -focal * p.p_cam.x() / (z * z),  //
        0.0, focal / z, -focal * p.p_cam.y() / (z * z);
    p.cov2d = j * p.cov_cam * j.transpose();
    p.cov2d(0, 0) += kLowPassDilation;
    p.cov2d(1, 1) += kLowPassDilation;
    const double det = p.cov2d.determinant();
    if (!(det > 0.0) || !std::isfinite(det)) return p;
    p.conic = p.cov2d.inverse();
    p.mean = Vec2(focal * p.p_cam.x() / z + 0.5 * cam.width, focal * p.p_cam.y() / z + 0.5 * cam.height);
    if (!p.mean.allFinite()) return p;

    // q < 9 implies |dx| < 3·sqrt(Σxx) and |dy| < 3·sqrt(Σyy).
    const double rx = std::sqrt(kCutoffQuad * p.cov2d(0, 0));
    const double ry = std::sqrt(kCutoffQuad * p.cov2d(1, 1));
    // pixel centers at k + 0.5
    const double lo_x = std::ceil(p.mean.x() - rx - 0.5);
    const double hi_x = std::floor(p.mean.x() + rx - 0.5);
    const double lo_y = std::ceil(p.mean.y() - ry - 0.5);
    const double hi_y = std::floor(p.mean.y() + ry - 0.5);
    if (hi_x < 0 || hi_y < 0 || lo_x > cam.width - 1 || lo_y > cam.height - 1) return p;
    p.x0 = static_cast<int>(std::max(0.0, lo_x));
    p.x1 = static_cast<int>(std::min<double>(cam.width - 1, hi_x));
    p.y0 = static_cast<int>(std::max(0.0, lo_y));
    p.y1 = static_cast<int>(std::min<double>(cam.height - 1, hi_y));
    if (p.x1 < p.x0 || p.y1 < p.y0) return p;
    p.depth = z;
    p.visible = true;
    return p;
}

Frame prepare(const GaussianCloud& cloud, const Camera& cam) {
    cam.validate();
    cloud.check_consistent();
    Frame f;
    f.width = cam.width;
    f.height = cam.height;
    f.tiles_x = (cam.width + kTileSize - 1) / kTileSize;
    f.tiles_y = (cam.height + kTileSize - 1) / kTileSize;
    const RigidTransform view = cam.world_to_camera();
    const double focal = cam.focal();

    const std::size_t n = cloud.size();
    f.proj.resize(n);
    parallel_for(n, 1024, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) f.proj[i] = project_one(cloud, i, view, cam, focal);
    });

    std::vector<std::size_t> order;
    order.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (f.proj[i].visible) order.push_back(i);
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double da = f.proj[a].depth, db = f.proj[b].depth;
        return da < db || (da == db && a < b);
    });

    f.splats.resize(order.size());
    const std::size_t tiles = static_cast<std::size_t>(f.tiles_x) * f.tiles_y;
    std::vector<std::size_t> counts(tiles + 1, 0);
    for (std::size_t s = 0; s < order.size(); ++s) {
        const Projection& p = f.proj[order[s]];
        f.splats[s] = Splat{p.mean.x(), p.mean.y(), p.conic(0, 0), p.conic(0, 1), p.conic(1, 1),
                            cloud.opacity(order[s]), cloud.colors[order[s]], order[s], p.x0, p.x1, p.y0, p.y1};
        for (int ty = p.y0 / kTileSize; ty <= p.y1 / kTileSize; ++ty) {
            for (int tx = p.x0 / kTileSize; tx <= p.x1 / kTileSize; ++tx) {
                ++counts[static_cast<std::size_t>(ty) * f.tiles_x + tx + 1];
            }
        }
    }
    std::partial_sum(counts.begin(), counts.end(), counts.begin());
    f.tile_offsets = counts;
    f.tile_entries.resize(counts.back());
    std::vector<std::size_t> cursor(counts.begin(), counts.end() - 1);
    for (std::size_t s = 0; s < order.size(); ++s) {
        const Projection& p = f.proj[order[s]];
        for (int ty = p.y0 / kTileSize; ty <= p.y1 / kTileSize; ++ty) {
            for (int tx = p.x0 / kTileSize; tx <= p.x1 / kTileSize; ++tx) {
                f.tile_entries[cursor[static_cast<std::size_t>(ty) * f.tiles_x + tx]++] =
                    static_cast<std::uint32_t>(s);
            }
        }
    }
    return f;
}

inline double quad_form(const Splat& s, double dx, double dy) {
    return s.a00 * dx * dx + 2.0 * s.a01 * dx * dy + s.a11 * dy * dy;
}

// Tile bounds in pixels.
struct TileRect {
    int x0, x1, y0, y1;  // half-open
};

TileRect tile_rect(const Frame& f, std::size_t t) {
    const int tx = static_cast<int>(t % f.tiles_x);
    const int ty = static_cast<int>(t / f.tiles_x);
    return {tx * kTileSize, std::min(f.width, (tx + 1) * kTileSize), ty * kTileSize,
            std::min(f.height, (ty + 1) * kTileSize)};
}

// Pixel span of a splat on row py within [lo, hi]: the q < 9 interval
// widened by one pixel on each side. The caller still tests q per pixel.
inline bool row_span(const Splat& s, double py, int lo, int hi, int& xa, int& xb) {
    const double dy = py - s.my;
    const double disc = std::max(0.0, s.a01 * s.a01 * dy * dy - s.a00 * (s.a11 * dy * dy - kCutoffQuad));
    const double xc = s.mx - s.a01 * dy / s.a00;
    const double half = std::sqrt(disc) / s.a00;
    xa = std::max(lo, static_cast<int>(std::ceil(xc - half - 0.5)) - 1);
    xb = std::min(hi, static_cast<int>(std::floor(xc + half - 0.5)) + 1);
    return xa <= xb;
}

// Per-tile compositing state, splat-major: each pixel still sees the
// splats in depth order, so the arithmetic matches a pixel-major loop.
struct TileState {
    static constexpr int kPixels = kTileSize * kTileSize;
    std::array<double, kPixels> trans;
    std::array<Vec3, kPixels> color;
    std::array<int, kPixels> count;
    std::array<std::size_t, kPixels> last;  // entry that ended compositing
    bool unstable = false;                   // some 1 - alpha too small to divide by

    void composite(const Frame& f, const TileRect& r, std::size_t begin, std::size_t end) {
        trans.fill(1.0);
        color.fill(Vec3::Zero());
        count.fill(0);
        last.fill(end);
        unstable = false;
        for (std::size_t e = begin; e < end; ++e) {
            const Splat& s = f.splats[f.tile_entries[e]];
            const int y_lo = std::max(r.y0, s.y0), y_hi = std::min(r.y1 - 1, s.y1);
            for (int y = y_lo; y <= y_hi; ++y) {
                const double py = y + 0.5;
                int xa = 0, xb = -1;
                if (!row_span(s, py, std::max(r.x0, s.x0), std::min(r.x1 - 1, s.x1), xa, xb)) continue;
                const double dy = py - s.my;
                for (int x = xa; x <= xb; ++x) {
                    const int k = (y - r.y0) * kTileSize + (x - r.x0);
                    if (last[k] != end) continue;
                    const double q = quad_form(s, x + 0.5 - s.mx, dy);
                    if (!(q < kCutoffQuad)) continue;
                    const double alpha = s.opacity * kernel(q);
                    if (1.0 - alpha < 1e-6) unstable = true;
                    color[k] += s.color * (alpha * trans[k]);
                    trans[k] *= 1.0 - alpha;
                    ++count[k];
                    if (trans[k] < kMinTransmittance) last[k] = e;
                }
            }
        }
    }
};

}  // namespace

RenderOutput render(const GaussianCloud& cloud, const Camera& camera, const Rgb& background) {
    const Frame f = prepare(cloud, camera);
    RenderOutput out;
    out.rgb = Image(f.width, f.height);
    out.alpha.assign(out.rgb.pixel_count(), 0.0);
    out.contributors.assign(out.rgb.pixel_count(), 0);

    const std::size_t tiles = static_cast<std::size_t>(f.tiles_x) * f.tiles_y;
    parallel_for(tiles, 1, [&](std::size_t tb, std::size_t te) {
        auto st = std::make_unique<TileState>();
        for (std::size_t t = tb; t < te; ++t) {
            const TileRect r = tile_rect(f, t);
            st->composite(f, r, f.tile_offsets[t], f.tile_offsets[t + 1]);
            for (int y = r.y0; y < r.y1; ++y) {
                for (int x = r.x0; x < r.x1; ++x) {
                    const int k = (y - r.y0) * kTileSize + (x - r.x0);
                    const std::size_t pix = static_cast<std::size_t>(y) * f.width + x;
                    out.rgb.set_pixel(x, y, st->color[k] + st->trans[k] * background);
                    out.alpha[pix] = 1.0 - st->trans[k];
                    out.contributors[pix] = st->count[k];
                }
            }
        }
    });
    return out;
}

namespace {

constexpr int kStride = 9;  // mean(2), conic(3: a00, a01, a11), color(3), opacity(1)

// Accumulates dL/d(screen params) of one splat-pixel contribution.
inline void accumulate_entry(double* acc, const Splat& s, const Vec3& g, const Vec3& behind, double alpha,
                             double trans, double kval, double kslope, double dx, double dy) {
    const double w = alpha * trans;
    acc[5] += w * g.x();
    acc[6] += w * g.y();
    acc[7] += w * g.z();
    const double dl_dalpha = trans * g.dot(s.color - behind);
    acc[8] += dl_dalpha * kval;  // dL/d(opacity)
    const double dl_dq = dl_dalpha * s.opacity * kslope;
    // q = a00 dx² + 2 a01 dx dy + a11 dy², d = pixel - mean
    acc[0] += -dl_dq * 2.0 * (s.a00 * dx + s.a01 * dy);
    acc[1] += -dl_dq * 2.0 * (s.a01 * dx + s.a11 * dy);
    acc[2] += dl_dq * dx * dx;
    acc[3] += dl_dq * 2.0 * dx * dy;
    acc[4] += dl_dq * dy * dy;
}

// Back-to-front over the tile's splats, recovering the transmittance in
// front of each splat by dividing out its alpha. `st` holds the forward
// state of the tile.
void backward_tile_fast(const Frame& f, const TileRect& r, std::size_t begin, std::size_t end,
                        const Image& upstream, const Rgb& background, TileState& st,
                        std::vector<double>& entry_grads) {
    std::array<Vec3, TileState::kPixels> behind;
    std::array<Vec3, TileState::kPixels> g;
    std::array<bool, TileState::kPixels> active{};
    for (int y = r.y0; y < r.y1; ++y) {
        for (int x = r.x0; x < r.x1; ++x) {
            const int k = (y - r.y0) * kTileSize + (x - r.x0);
            behind[k] = background;
            g[k] = upstream.pixel(x, y);
            active[k] = !g[k].isZero(0.0);
        }
    }
    for (std::size_t e = end; e-- > begin;) {
        const Splat& s = f.splats[f.tile_entries[e]];
        std::array<double, kStride> acc{};
        bool touched = false;
        const int y_lo = std::max(r.y0, s.y0), y_hi = std::min(r.y1 - 1, s.y1);
        for (int y = y_lo; y <= y_hi; ++y) {
            const double py = y + 0.5;
            int xa = 0, xb = -1;
            if (!row_span(s, py, std::max(r.x0, s.x0), std::min(r.x1 - 1, s.x1), xa, xb)) continue;
            const double dy = py - s.my;
            for (int x = xa; x <= xb; ++x) {
                const int k = (y - r.y0) * kTileSize + (x - r.x0);
                if (!active[k] || e > st.last[k]) continue;
                const double dx = x + 0.5 - s.mx;
                const double q = quad_form(s, dx, dy);
                if (!(q < kCutoffQuad)) continue;
                const double ex = std::exp(-0.5 * q);
                const double kval = kernel_from_exp(ex, q);
                const double alpha = s.opacity * kval;
                const double trans = st.trans[k] / (1.0 - alpha);
                st.trans[k] = trans;
                accumulate_entry(acc.data(), s, g[k], behind[k], alpha, trans, kval, kernel_derivative_from_exp(ex),
                                 dx, dy);
                touched = true;
                behind[k] = s.color * alpha + (1.0 - alpha) * behind[k];
            }
        }
        if (touched) std::copy(acc.begin(), acc.end(), entry_grads.begin() + static_cast<std::ptrdiff_t>(e * kStride));
    }
}

// Pixel-major path with transmittances recomputed front to back. Used for
// tiles where some alpha is too close to 1 to divide out.
void backward_tile_exact(const Frame& f, const TileRect& r, std::size_t begin, std::size_t end,
                         const Image& upstream, const Rgb& background, std::vector<double>& entry_grads) {
    struct Contribution {
        std::size_t entry;
        double alpha, trans, kval, kslope, dx, dy;
    };
    std::vector<Contribution> list;
    for (int y = r.y0; y < r.y1; ++y) {
        for (int x = r.x0; x < r.x1; ++x) {
            const Vec3 g = upstream.pixel(x, y);
            if (g.isZero(0.0)) continue;
            const double px = x + 0.5, py = y + 0.5;
            list.clear();
            double trans = 1.0;
            for (std::size_t e = begin; e < end; ++e) {
                const Splat& s = f.splats[f.tile_entries[e]];
                const double dx = px - s.mx, dy = py - s.my;
                const double q = quad_form(s, dx, dy);
                if (!(q < kCutoffQuad)) continue;
                const double ex = std::exp(-0.5 * q);
                const double k = kernel_from_exp(ex, q);
                const double alpha = s.opacity * k;
                list.push_back({e, alpha, trans, k, kernel_derivative_from_exp(ex), dx, dy});
                trans *= 1.0 - alpha;
                if (trans < kMinTransmittance) break;
            }
            Vec3 behind = background;
            for (auto it = list.rbegin(); it != list.rend(); ++it) {
                const Splat& s = f.splats[f.tile_entries[it->entry]];
                accumulate_entry(&entry_grads[it->entry * kStride], s, g, behind, it->alpha, it->trans, it->kval,
                                 it->kslope, it->dx, it->dy);
                behind = s.color * it->alpha + (1.0 - it->alpha) * behind;
            }
        }
    }
}

}  // namespace

RenderGradients render_backward(const GaussianCloud& cloud, const Camera& camera,
                                const Rgb& background, const Image& upstream) {
    if (upstream.width != camera.width || upstream.height != camera.height) {
        throw DimensionError("upstream gradient is " + std::to_string(upstream.width) + "x" +
                             std::to_string(upstream.height) + " but camera renders " +
                             std::to_string(camera.width) + "x" + std::to_string(camera.height));
    }
    const Frame f = prepare(cloud, camera);
    const std::size_t n = cloud.size();
    std::vector<double> entry_grads(f.tile_entries.size() * kStride, 0.0);
    const std::size_t tiles = static_cast<std::size_t>(f.tiles_x) * f.tiles_y;
    parallel_for(tiles, 1, [&](std::size_t tb, std::size_t te) {
        auto st = std::make_unique<TileState>();
        for (std::size_t t = tb; t < te; ++t) {
            const TileRect r = tile_rect(f, t);
            const std::size_t begin = f.tile_offsets[t], end = f.tile_offsets[t + 1];
            st->composite(f, r, begin, end);
            if (st->unstable) {
                backward_tile_exact(f, r, begin, end, upstream, background, entry_grads);
            } else {
                backward_tile_fast(f, r, begin, end, upstream, background, *st, entry_grads);
            }
        }
    });

    // Merge tile entries in fixed order.
    std::vector<double> splat_grads(f.splats.size() * kStride, 0.0);
    for (std::size_t e = 0; e < f.tile_entries.size(); ++e) {
        double* dst = &splat_grads[static_cast<std::size_t>(f.tile_entries[e]) * kStride];
        const double* src = &entry_grads[e * kStride];
        for (int k = 0; k < kStride; ++k) dst[k] += src[k];
    }

    RenderGradients grads(n);
    const double focal = camera.focal();
    const Mat3 w_rot = camera.world_to_camera().rotation;
    parallel_for(f.splats.size(), 512, [&](std::size_t b, std::size_t e) {
        for (std::size_t s = b; s < e; ++s) {
            const double* sg = &splat_grads[s * kStride];
            const std::size_t i = f.splats[s].index;
            const Projection& p = f.proj[i];
            const double z = p.p_cam.z(), x = p.p_cam.x(), y = p.p_cam.y();

            grads.visible[i] = 1;
            grads.colors[i] = Vec3(sg[5], sg[6], sg[7]);
            const double a = f.splats[s].opacity;
            grads.opacity_logits[i] = sg[8] * a * (1.0 - a);

            const Vec2 g_mean(sg[0], sg[1]);
            grads.screen_grad_norm[i] =
                Vec2(g_mean.x() * 0.5 * camera.width, g_mean.y() * 0.5 * camera.height).norm();

            Mat2 g_conic;
            g_conic << sg[2], 0.5 * sg[3], 0.5 * sg[3], sg[4];
            const Mat2 g_cov2d = -p.conic * g_conic * p.conic;

            Eigen::Matrix<double, 2, 3> j;
            j << focal / z, 0.0, -focal * x / (z * z),  //
                0.0, focal / z, -focal * y / (z * z);
            const Mat3 g_cov_cam = j.transpose() * g_cov2d * j;
            const Eigen::Matrix<double, 2, 3> g_j = 2.0 * g_cov2d * j * p.cov_cam;

            Vec3 g_pcam;
            g_pcam.x() = g_mean.x() * focal / z + g_j(0, 2) * (-focal / (z * z));
            g_pcam.y() = g_mean.y() * focal / z + g_j(1, 2) * (-focal / (z * z));
            g_pcam.z() = -g_mean.x() * focal * x / (z * z) - g_mean.y() * focal * y / (z * z) +
                         (g_j(0, 0) + g_j(1, 1)) * (-focal / (z * z)) +
                         g_j(0, 2) * (2.0 * focal * x / (z * z * z)) +
                         g_j(1, 2) * (2.0 * focal * y / (z * z * z));
            grads.positions[i] = w_rot.transpose() * g_pcam;

            Mat3 g_cov = w_rot.transpose() * g_cov_cam * w_rot;
            g_cov = 0.5 * (g_cov + g_cov.transpose());
            // Σ = M Mᵀ with M = R·diag(scale)
            const Mat3 m = p.rotation * p.scale.asDiagonal();
            const Mat3 g_m = 2.0 * g_cov * m;
            Vec3 g_scale;
            for (int k = 0; k < 3; ++k) g_scale[k] = g_m.col(k).dot(p.rotation.col(k));
            grads.log_scales[i] = g_scale.cwiseProduct(p.scale);
            const Mat3 g_r = g_m * p.scale.asDiagonal();
            const Vec4 q_unit = normalize_quaternion(cloud.rotations[i]);
            grads.rotations[i] =
                normalize_backward(cloud.rotations[i], quaternion_matrix_backward(q_unit, g_r));
        }
    });
    return grads;
}

std::vector<RenderOutput> render_views(const GaussianCloud& cloud, std::span<const Camera> cameras,
                                       const Rgb& background) {
    std::vector<RenderOutput> out;
    out.reserve(cameras.size());
    for (const Camera& c : cameras) out.push_back(render(cloud, c, background));
    return out;
}

}  // namespace splat4d
