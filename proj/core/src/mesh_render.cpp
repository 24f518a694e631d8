#include "splat4d/mesh_render.hpp"

#include "splat4d/errors.hpp"
#include "splat4d/parallel.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace splat4d {

namespace {

constexpr int kRowBand = 16;

struct ScreenTri {
    std::array<Vec2, 3> p;
    std::array<double, 3> inv_z;
    bool valid = false;
};

void check_texture(const UvLayout& uv, const Image& texture) {
    if (texture.width != uv.texture_size || texture.height != uv.texture_size) {
        throw DimensionError("texture is " + std::to_string(texture.width) + "x" + std::to_string(texture.height) +
                             ", layout expects " + std::to_string(uv.texture_size) + "²");
    }
}

Vec2 texel_coords(const UvLayout& uv, std::size_t face, const Vec3& b) {
    const Face& f = uv.uv_faces[face];
    const Vec2 t = b[0] * uv.uvs[static_cast<std::size_t>(f[0])] + b[1] * uv.uvs[static_cast<std::size_t>(f[1])] +
                   b[2] * uv.uvs[static_cast<std::size_t>(f[2])];
    return {t.x() * uv.texture_size, (1.0 - t.y()) * uv.texture_size};
}

}  // namespace

MeshFragments rasterize_mesh(const Mesh& mesh, const Camera& camera) {
    camera.validate();
    mesh.validate();
    const int w = camera.width, h = camera.height;
    MeshFragments out;
    out.width = w;
    out.height = h;
    out.face.assign(static_cast<std::size_t>(w) * h, -1);
    out.depth.assign(out.face.size(), std::numeric_limits<double>::infinity());
    out.bary.assign(out.face.size(), Vec3::Zero());

    const RigidTransform view = camera.world_to_camera();
    std::vector<Vec3> cam(mesh.vertices.size());
    for (std::size_t i = 0; i < cam.size(); ++i) cam[i] = view.apply(mesh.vertices[i]);
    std::vector<ScreenTri> tris(mesh.faces.size());
    for (std::size_t f = 0; f < tris.size(); ++f) {
        ScreenTri& t = tris[f];
        t.valid = true;
        for (int k = 0; k < 3; ++k) {
            const Vec3& p = cam[static_cast<std::size_t>(mesh.faces[f][k])];
            if (!(p.z() > camera.near)) t.valid = false;
            t.p[k] = camera.project(p);
            t.inv_z[k] = 1.0 / p.z();
        }
    }

    const std::size_t bands = static_cast<std::size_t>((h + kRowBand - 1) / kRowBand);
    parallel_for(bands, 1, [&](std::size_t b0, std::size_t b1) {
        const int ylo = static_cast<int>(b0) * kRowBand, yhi = std::min(h, static_cast<int>(b1) * kRowBand);
        for (std::size_t f = 0; f < tris.size(); ++f) {
            const ScreenTri& t = tris[f];
            if (!t.valid) continue;
            const double area = (t.p[1] - t.p[0]).x() * (t.p[2] - t.p[0]).y() -
                                (t.p[1] - t.p[0]).y() * (t.p[2] - t.p[0]).x();
            if (area == 0.0 || !std::isfinite(area)) continue;
            const double minx = std::min({t.p[0].x(), t.p[1].x(), t.p[2].x()});
            const double maxx = std::max({t.p[0].x(), t.p[1].x(), t.p[2].x()});
            const double miny = std::min({t.p[0].y(), t.p[1].y(), t.p[2].y()});
            const double maxy = std::max({t.p[0].y(), t.p[1].y(), t.p[2].y()});
            const int x0 = std::max(0, static_cast<int>(std::ceil(minx - 0.5)));
            const int x1 = std::min(w - 1, static_cast<int>(std::floor(maxx - 0.5)));
            const int y0 = std::max(ylo, static_cast<int>(std::ceil(miny - 0.5)));
            const int y1 = std::min(yhi - 1, static_cast<int>(std::floor(maxy - 0.5)));
            for (int y = y0; y <= y1; ++y) {
                for (int x = x0; x <= x1; ++x) {
                    const Vec2 c(x + 0.5, y + 0.5);
                    std::array<double, 3> l{};
                    for (int k = 0; k < 3; ++k) {
                        const Vec2& a = t.p[(k + 1) % 3];
                        const Vec2& b = t.p[(k + 2) % 3];
                        l[k] = ((b - a).x() * (c - a).y() - (b - a).y() * (c - a).x()) / area;
                    }
                    if (l[0] < 0.0 || l[1] < 0.0 || l[2] < 0.0) continue;
                    const double s = l[0] * t.inv_z[0] + l[1] * t.inv_z[1] + l[2] * t.inv_z[2];
                    const double z = 1.0 / s;
                    const std::size_t idx = out.index(x, y);
                    if (!(z < out.depth[idx])) continue;
                    out.depth[idx] = z;
                    out.face[idx] = static_cast<int>(f);
                    out.bary[idx] = Vec3(l[0] * t.inv_z[0], l[1] * t.inv_z[1], l[2] * t.inv_z[2]) * z;
                }
            }
        }
    });
    return out;
}

Image shade_mesh(const MeshFragments& fr, const UvLayout& uv, const Image& texture, const Rgb& background) {
    check_texture(uv, texture);
    Image out(fr.width, fr.height, background);
    for (int y = 0; y < fr.height; ++y) {
        for (int x = 0; x < fr.width; ++x) {
            const std::size_t idx = fr.index(x, y);
            if (fr.face[idx] < 0) continue;
            const Vec2 t = texel_coords(uv, static_cast<std::size_t>(fr.face[idx]), fr.bary[idx]);
            out.set_pixel(x, y, sample_bilinear(texture, t.x(), t.y()));
        }
    }
    return out;
}

Image render_mesh(const TexturedMesh& m, const Camera& camera, const Rgb& background) {
    return shade_mesh(rasterize_mesh(m.mesh, camera), m.uv, m.texture, background);
}

void shade_mesh_backward(const MeshFragments& fr, const UvLayout& uv, const Image& upstream, Image& d_texture) {
    check_texture(uv, d_texture);
    if (upstream.width != fr.width || upstream.height != fr.height) {
        throw DimensionError("upstream gradient does not match the fragment buffer");
    }
    const int n = uv.texture_size;
    for (int y = 0; y < fr.height; ++y) {
        for (int x = 0; x < fr.width; ++x) {
            const std::size_t idx = fr.index(x, y);
            if (fr.face[idx] < 0) continue;
            const Vec2 t = texel_coords(uv, static_cast<std::size_t>(fr.face[idx]), fr.bary[idx]);
            const BilinearTaps b = bilinear_taps(n, n, t.x(), t.y());
            for (int c = 0; c < 3; ++c) {
                const double g = upstream.at(x, y, c);
                d_texture.at(b.x0, b.y0, c) += b.w00 * g;
                d_texture.at(b.x1, b.y0, c) += b.w10 * g;
                d_texture.at(b.x0, b.y1, c) += b.w01 * g;
                d_texture.at(b.x1, b.y1, c) += b.w11 * g;
            }
        }
    }
}

std::vector<Camera> default_backprojection_views(const Camera& base) {
    std::vector<Camera> views;
    for (double el : {-30.0, 30.0}) {
        for (int a = 0; a < 8; ++a) {
            Camera c = base;
            c.azimuth = 45.0 * a;
            c.elevation = el;
            views.push_back(c);
        }
    }
    return views;
}

namespace {

struct SurfaceTexel {
    int x, y;
    Vec3 point;
    Vec3 normal;  // unit
};

// Texels within this many texel widths outside a UV triangle are painted
// from the extrapolated triangle plane, so bilinear lookups at chart borders
// read surface colours rather than gutter fill.
constexpr double kBorderMargin = 1.5;

// One sample per texel, from the lowest-index face covering it; texels in
// the border band go to the face whose edge is nearest.
std::vector<SurfaceTexel> surface_texels(const Mesh& mesh, const UvLayout& uv) {
    const int n = uv.texture_size;
    std::vector<double> dist(static_cast<std::size_t>(n) * n, std::numeric_limits<double>::infinity());
    std::vector<SurfaceTexel> slot(dist.size());
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        if (uv.face_chart[f] < 0) continue;
        const Vec3 normal = face_normal(mesh, f).normalized();
        std::array<Vec2, 3> p;
        std::array<Vec3, 3> v;
        for (int k = 0; k < 3; ++k) {
            const Vec2& t = uv.uvs[static_cast<std::size_t>(uv.uv_faces[f][k])];
            p[k] = Vec2(t.x() * n, (1.0 - t.y()) * n);
            v[k] = mesh.vertices[static_cast<std::size_t>(mesh.faces[f][k])];
        }
        const double area = (p[1] - p[0]).x() * (p[2] - p[0]).y() - (p[1] - p[0]).y() * (p[2] - p[0]).x();
        if (area == 0.0) continue;
        std::array<double, 3> edge_len{};
        for (int k = 0; k < 3; ++k) edge_len[k] = (p[(k + 2) % 3] - p[(k + 1) % 3]).norm();
        const int x0 = std::max(0, static_cast<int>(std::floor(std::min({p[0].x(), p[1].x(), p[2].x()}) - kBorderMargin)));
        const int x1 = std::min(n - 1, static_cast<int>(std::ceil(std::max({p[0].x(), p[1].x(), p[2].x()}) + kBorderMargin)));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min({p[0].y(), p[1].y(), p[2].y()}) - kBorderMargin)));
        const int y1 = std::min(n - 1, static_cast<int>(std::ceil(std::max({p[0].y(), p[1].y(), p[2].y()}) + kBorderMargin)));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const Vec2 c(x + 0.5, y + 0.5);
                std::array<double, 3> b{};
                double outside = 0.0;  // texel distance past the farthest violated edge
                for (int k = 0; k < 3; ++k) {
                    const Vec2& a = p[(k + 1) % 3];
                    const Vec2& e = p[(k + 2) % 3];
                    b[k] = ((e - a).x() * (c - a).y() - (e - a).y() * (c - a).x()) / area;
                    outside = std::max(outside, -b[k] * std::abs(area) / edge_len[k]);
                }
                if (outside > kBorderMargin) continue;
                const std::size_t idx = static_cast<std::size_t>(y) * n + x;
                if (!(outside < dist[idx])) continue;
                dist[idx] = outside;
                slot[idx] = {x, y, b[0] * v[0] + b[1] * v[1] + b[2] * v[2], normal};
            }
        }
    }
    std::vector<SurfaceTexel> out;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        if (std::isfinite(dist[i])) out.push_back(slot[i]);
    }
    return out;
}

}  // namespace

Image backproject_colors(const Mesh& mesh, const UvLayout& uv, const SceneRenderer& scene,
                         const BackprojectOptions& options) {
    mesh.validate();
    const int n = uv.texture_size;
    if (uv.face_chart.size() != mesh.faces.size()) throw DimensionError("UV layout does not belong to this mesh");
    const std::vector<Camera> views =
        options.views.empty() ? default_backprojection_views(Camera{}.with_size(256, 256)) : options.views;
    const std::vector<SurfaceTexel> texels = surface_texels(mesh, uv);
    std::vector<Rgb> sum(texels.size(), Rgb::Zero());
    std::vector<double> weight(texels.size(), 0.0);

    for (const Camera& cam : views) {
        const Image img = scene(cam);
        if (img.width != cam.width || img.height != cam.height) {
            throw DimensionError("scene render does not match the camera size");
        }
        const MeshFragments fr = rasterize_mesh(mesh, cam);
        const RigidTransform view = cam.world_to_camera();
        const Vec3 eye = cam.position();
        parallel_for(texels.size(), 4096, [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) {
                const SurfaceTexel& t = texels[i];
                const Vec3 to_eye = eye - t.point;
                const double cosine = t.normal.dot(to_eye) / to_eye.norm();
                if (!(cosine > 0.0)) continue;
                const Vec3 pc = view.apply(t.point);
                if (!(pc.z() > cam.near)) continue;
                const Vec2 px = cam.project(pc);
                const int ix = static_cast<int>(std::floor(px.x())), iy = static_cast<int>(std::floor(px.y()));
                if (ix < 0 || iy < 0 || ix >= cam.width || iy >= cam.height) continue;
                if (pc.z() > fr.depth[fr.index(ix, iy)] + options.depth_tolerance) continue;
                // skip samples that would blend in background pixels
                const BilinearTaps taps = bilinear_taps(cam.width, cam.height, px.x(), px.y());
                if (fr.face[fr.index(taps.x0, taps.y0)] < 0 || fr.face[fr.index(taps.x1, taps.y0)] < 0 ||
                    fr.face[fr.index(taps.x0, taps.y1)] < 0 || fr.face[fr.index(taps.x1, taps.y1)] < 0) {
                    continue;
                }
                sum[i] += cosine * sample_bilinear(img, px.x(), px.y());
                weight[i] += cosine;
            }
        });
    }

    Image tex(n, n, 0.0);
    std::vector<char> known(static_cast<std::size_t>(n) * n, 0);
    std::deque<std::pair<int, int>> frontier;
    for (std::size_t i = 0; i < texels.size(); ++i) {
        if (!(weight[i] > 0.0)) continue;
        tex.set_pixel(texels[i].x, texels[i].y, sum[i] / weight[i]);
        known[static_cast<std::size_t>(texels[i].y) * n + texels[i].x] = 1;
        frontier.emplace_back(texels[i].x, texels[i].y);
    }
    if (frontier.empty()) return Image(n, n, options.fill);
    // breadth-first dilation: every unseen texel copies a nearest seen one
    constexpr int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
    while (!frontier.empty()) {
        const auto [x, y] = frontier.front();
        frontier.pop_front();
        for (int d = 0; d < 4; ++d) {
            const int nx = x + dx[d], ny = y + dy[d];
            if (nx < 0 || ny < 0 || nx >= n || ny >= n) continue;
            char& k = known[static_cast<std::size_t>(ny) * n + nx];
            if (k) continue;
            k = 1;
            tex.set_pixel(nx, ny, tex.pixel(x, y));
            frontier.emplace_back(nx, ny);
        }
    }
    return tex;
}

}  // namespace splat4d
