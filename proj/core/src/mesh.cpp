#include "splat4d/mesh.hpp"

#include "splat4d/errors.hpp"
#include "splat4d/parallel.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <unordered_map>

namespace splat4d {

void Mesh::validate() const {
    const int n = static_cast<int>(vertices.size());
    for (std::size_t f = 0; f < faces.size(); ++f) {
        for (int c : faces[f]) {
            if (c < 0 || c >= n) {
                throw DimensionError("face " + std::to_string(f) + " references vertex " + std::to_string(c) +
                                     " of " + std::to_string(n));
            }
        }
    }
}

Vec3 face_normal(const Mesh& mesh, std::size_t face) {
    const Face& f = mesh.faces[face];
    const Vec3& a = mesh.vertices[static_cast<std::size_t>(f[0])];
    const Vec3& b = mesh.vertices[static_cast<std::size_t>(f[1])];
    const Vec3& c = mesh.vertices[static_cast<std::size_t>(f[2])];
    return (b - a).cross(c - a);
}

namespace {

std::uint64_t edge_key(int a, int b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

}  // namespace

bool is_two_manifold(const Mesh& mesh) {
    std::unordered_map<std::uint64_t, int> directed;
    directed.reserve(mesh.faces.size() * 3);
    for (const Face& f : mesh.faces) {
        for (int e = 0; e < 3; ++e) {
            const int a = f[e], b = f[(e + 1) % 3];
            if (a == b) return false;
            if (++directed[edge_key(a, b)] > 1) return false;
        }
    }
    for (const auto& [key, count] : directed) {
        const auto a = static_cast<int>(key >> 32), b = static_cast<int>(key & 0xffffffffU);
        if (!directed.contains(edge_key(b, a))) return false;
    }
    return true;
}

DensityGrid::DensityGrid(int res, const Box3& box) : resolution(res), bounds(box) {
    if (res < 2) throw RangeError("density grid resolution must be >= 2, got " + std::to_string(res));
    if (!((box.hi - box.lo).array() > 0.0).all()) throw RangeError("density grid bounds are empty");
    values.assign(static_cast<std::size_t>(res) * res * res, 0.0);
}

Vec3 DensityGrid::center(int i, int j, int k) const {
    return bounds.lo + Vec3((i + 0.5) * voxel_size(0), (j + 0.5) * voxel_size(1), (k + 0.5) * voxel_size(2));
}

DensityGrid DensityGrid::from_function(int res, const Box3& box, const std::function<double(const Vec3&)>& f) {
    DensityGrid g(res, box);
    for (int k = 0; k < res; ++k) {
        for (int j = 0; j < res; ++j) {
            for (int i = 0; i < res; ++i) g.at(i, j, k) = f(g.center(i, j, k));
        }
    }
    return g;
}

namespace {

struct GaussianKernel {
    Vec3 mean;
    Mat3 inv_cov;
    Vec3 extent;  // 3σ half-widths of the bounding box
    double opacity;
};

GaussianKernel kernel_of(const GaussianCloud& cloud, std::size_t i) {
    const Mat3 cov = build_covariance(cloud.rotations[i], cloud.log_scales[i]);
    return {cloud.positions[i], cov.inverse(), (9.0 * cov.diagonal()).cwiseSqrt(), cloud.opacity(i)};
}

}  // namespace

DensityGrid build_density_grid(const GaussianCloud& cloud, int resolution, const Box3& bounds) {
    if (cloud.size() == 0) throw RangeError("build_density_grid needs a nonempty cloud");
    DensityGrid grid(resolution, bounds);
    std::vector<GaussianKernel> kernels(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) kernels[i] = kernel_of(cloud, i);
    const Vec3 h(grid.voxel_size(0), grid.voxel_size(1), grid.voxel_size(2));

    // Slabs along z; each voxel sums Gaussians in index order.
    parallel_for(static_cast<std::size_t>(resolution), 1, [&](std::size_t kb, std::size_t ke) {
        for (const GaussianKernel& g : kernels) {
            int lo[3], hi[3];
            for (int a = 0; a < 3; ++a) {
                lo[a] = std::max(0, static_cast<int>(std::ceil((g.mean[a] - g.extent[a] - bounds.lo[a]) / h[a] - 0.5)));
                hi[a] = std::min(resolution - 1,
                                 static_cast<int>(std::floor((g.mean[a] + g.extent[a] - bounds.lo[a]) / h[a] - 0.5)));
            }
            const int k0 = std::max(lo[2], static_cast<int>(kb)), k1 = std::min(hi[2], static_cast<int>(ke) - 1);
            for (int k = k0; k <= k1; ++k) {
                for (int j = lo[1]; j <= hi[1]; ++j) {
                    for (int i = lo[0]; i <= hi[0]; ++i) {
                        const Vec3 d = grid.center(i, j, k) - g.mean;
                        const double q = d.dot(g.inv_cov * d);
                        if (q < 9.0) grid.at(i, j, k) += g.opacity * std::exp(-0.5 * q);
                    }
                }
            }
        }
    });
    return grid;
}

double density_at(const GaussianCloud& cloud, const Vec3& p) {
    double sum = 0.0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const GaussianKernel g = kernel_of(cloud, i);
        const Vec3 d = p - g.mean;
        const double q = d.dot(g.inv_cov * d);
        if (q < 9.0) sum += g.opacity * std::exp(-0.5 * q);
    }
    return sum;
}

namespace {

// Cube corners: bit 0 = x, bit 1 = y, bit 2 = z.
constexpr std::array<std::array<int, 4>, 6> kCubeFaces{{
    {0, 4, 6, 2},  // -x, counter-clockwise seen from outside
    {1, 3, 7, 5},  // +x
    {0, 1, 5, 4},  // -y
    {2, 6, 7, 3},  // +y
    {0, 2, 3, 1},  // -z
    {4, 5, 7, 6},  // +z
}};

int corner_offset(int c, int axis) { return (c >> axis) & 1; }

// Local edge index 0..11 for corners a, b that differ in one bit.
int local_edge(int a, int b) {
    const int lo = std::min(a, b);
    const int axis = (a ^ b) == 1 ? 0 : (a ^ b) == 2 ? 1 : 2;
    // four edges per axis, indexed by the two other corner bits
    int rest = 0, bit = 0;
    for (int ax = 0; ax < 3; ++ax) {
        if (ax == axis) continue;
        rest |= corner_offset(lo, ax) << bit++;
    }
    return axis * 4 + rest;
}

struct CubeEdge {
    int a, b;  // corners
};

std::array<CubeEdge, 12> make_cube_edges() {
    std::array<CubeEdge, 12> edges{};
    for (int a = 0; a < 8; ++a) {
        for (int axis = 0; axis < 3; ++axis) {
            if (corner_offset(a, axis) != 0) continue;
            const int b = a | (1 << axis);
            edges[static_cast<std::size_t>(local_edge(a, b))] = {a, b};
        }
    }
    return edges;
}

const std::array<CubeEdge, 12> kCubeEdges = make_cube_edges();

// Faces of the cube each local edge lies on (two per edge).
std::array<std::array<int, 2>, 12> make_edge_faces() {
    std::array<std::array<int, 2>, 12> out{};
    std::array<int, 12> n{};
    for (int f = 0; f < 6; ++f) {
        for (int m = 0; m < 4; ++m) {
            const int e = local_edge(kCubeFaces[f][m], kCubeFaces[f][(m + 1) % 4]);
            out[static_cast<std::size_t>(e)][static_cast<std::size_t>(n[e]++)] = f;
        }
    }
    return out;
}

const std::array<std::array<int, 2>, 12> kEdgeFaces = make_edge_faces();

bool share_face(int e0, int e1) {
    for (int f0 : kEdgeFaces[e0]) {
        for (int f1 : kEdgeFaces[e1]) {
            if (f0 == f1) return true;
        }
    }
    return false;
}

}  // namespace

Mesh marching_cubes(const DensityGrid& grid, double iso) {
    const int g = grid.resolution;
    if (g < 2) throw RangeError("marching_cubes needs resolution >= 2");
    Mesh mesh;
    std::unordered_map<std::uint64_t, int> edge_vertex;

    auto global_edge = [&](int i, int j, int k, const CubeEdge& e) {
        const int ii = i + corner_offset(e.a, 0), jj = j + corner_offset(e.a, 1), kk = k + corner_offset(e.a, 2);
        const int axis = (e.a ^ e.b) == 1 ? 0 : (e.a ^ e.b) == 2 ? 1 : 2;
        return ((static_cast<std::uint64_t>(kk) * g + jj) * g + ii) * 3 + axis;
    };

    for (int k = 0; k + 1 < g; ++k) {
        for (int j = 0; j + 1 < g; ++j) {
            for (int i = 0; i + 1 < g; ++i) {
                std::array<double, 8> v{};
                int inside_mask = 0;
                for (int c = 0; c < 8; ++c) {
                    v[c] = grid.at(i + corner_offset(c, 0), j + corner_offset(c, 1), k + corner_offset(c, 2));
                    if (v[c] > iso) inside_mask |= 1 << c;
                }
                if (inside_mask == 0 || inside_mask == 0xff) continue;
                auto inside = [&](int c) { return ((inside_mask >> c) & 1) != 0; };

                // crossing vertices, created in fixed local-edge order
                std::array<int, 12> vert{};
                vert.fill(-1);
                for (int e = 0; e < 12; ++e) {
                    const CubeEdge& ce = kCubeEdges[e];
                    if (inside(ce.a) == inside(ce.b)) continue;
                    const std::uint64_t key = global_edge(i, j, k, ce);
                    auto it = edge_vertex.find(key);
                    if (it == edge_vertex.end()) {
                        const double t = (iso - v[ce.a]) / (v[ce.b] - v[ce.a]);
                        const Vec3 pa = grid.center(i + corner_offset(ce.a, 0), j + corner_offset(ce.a, 1),
                                                    k + corner_offset(ce.a, 2));
                        const Vec3 pb = grid.center(i + corner_offset(ce.b, 0), j + corner_offset(ce.b, 1),
                                                    k + corner_offset(ce.b, 2));
                        it = edge_vertex.emplace(key, static_cast<int>(mesh.vertices.size())).first;
                        mesh.vertices.push_back(pa + t * (pb - pa));
                    }
                    vert[e] = it->second;
                }

                // Directed face segments, inside on the right seen from outside:
                // from an out->in crossing to an in->out crossing.
                std::array<int, 12> next{};
                next.fill(-1);
                for (const auto& fc : kCubeFaces) {
                    std::array<int, 4> edge{};
                    std::array<int, 4> type{};  // +1 in->out, -1 out->in, 0 none
                    int crossings = 0;
                    for (int m = 0; m < 4; ++m) {
                        const int a = fc[m], b = fc[(m + 1) % 4];
                        edge[m] = local_edge(a, b);
                        type[m] = inside(a) == inside(b) ? 0 : inside(a) ? 1 : -1;
                        crossings += type[m] != 0;
                    }
                    if (crossings == 0) continue;
                    bool connected = false;
                    if (crossings == 4) {
                        const double a0 = v[fc[0]], a1 = v[fc[1]], a2 = v[fc[2]], a3 = v[fc[3]];
                        const double den = a0 + a2 - a1 - a3;
                        const double saddle = den != 0.0 ? (a0 * a2 - a1 * a3) / den : 0.25 * (a0 + a1 + a2 + a3);
                        connected = saddle > iso;
                    }
                    for (int m = 0; m < 4; ++m) {
                        if (type[m] != -1) continue;
                        int y = -1;
                        if (crossings == 4 && connected) {
                            y = (m + 3) % 4;  // curve around outside corner fc[m]
                        } else {
                            for (int s = 1; s < 4; ++s) {
                                if (type[(m + s) % 4] == 1) {
                                    y = (m + s) % 4;
                                    break;
                                }
                            }
                        }
                        next[edge[m]] = edge[y];
                    }
                }

                std::array<bool, 12> used{};
                for (int start = 0; start < 12; ++start) {
                    if (vert[start] < 0 || used[start]) continue;
                    std::vector<int> loop;
                    for (int e = start; !used[e]; e = next[e]) {
                        used[e] = true;
                        loop.push_back(e);
                    }
                    if (loop.size() < 3) continue;
                    // fan from the smallest vertex id so the split does not depend on traversal start
                    const auto pivot = std::min_element(loop.begin(), loop.end(),
                                                        [&](int a, int b) { return vert[a] < vert[b]; });
                    std::rotate(loop.begin(), pivot, loop.end());
                    bool diagonal_on_face = false;
                    for (std::size_t s = 2; s + 1 < loop.size(); ++s) diagonal_on_face |= share_face(loop[0], loop[s]);
                    if (!diagonal_on_face) {
                        for (std::size_t s = 1; s + 1 < loop.size(); ++s) {
                            mesh.faces.push_back({vert[loop[0]], vert[loop[s]], vert[loop[s + 1]]});
                        }
                    } else {
                        // A diagonal across an ambiguous face could be repeated by the
                        // neighbouring cube; fan around the centroid instead.
                        Vec3 c = Vec3::Zero();
                        for (int e : loop) c += mesh.vertices[static_cast<std::size_t>(vert[e])];
                        const int center = static_cast<int>(mesh.vertices.size());
                        mesh.vertices.push_back(c / static_cast<double>(loop.size()));
                        for (std::size_t s = 0; s < loop.size(); ++s) {
                            mesh.faces.push_back({center, vert[loop[s]], vert[loop[(s + 1) % loop.size()]]});
                        }
                    }
                }
            }
        }
    }
    return mesh;
}

namespace {

struct UnionFind {
    std::vector<std::size_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

// Orientation-preserving 2D projection along a signed axis.
Vec2 project_along(const Vec3& p, int cluster) {
    const int axis = cluster / 2;
    const bool negative = (cluster % 2) == 1;
    const double u = p[(axis + 1) % 3], v = p[(axis + 2) % 3];
    return negative ? Vec2(-u, v) : Vec2(u, v);
}

struct Chart {
    std::vector<std::size_t> faces;
    int cluster = 0;
    Vec2 lo, hi;
};

struct Placement {
    double x = 0, y = 0;
};

// Shelf packing at `scale` texels per unit; false if it does not fit.
bool shelf_pack(const std::vector<Chart>& charts, const std::vector<std::size_t>& order, double scale, int size,
                int gutter, std::vector<Placement>& out) {
    out.assign(charts.size(), {});
    double x = gutter, y = gutter, shelf = 0.0;
    for (std::size_t idx : order) {
        const Vec2 ext = (charts[idx].hi - charts[idx].lo) * scale;
        const double w = std::ceil(ext.x()) + 1.0, h = std::ceil(ext.y()) + 1.0;
        if (x + w + gutter > size) {
            y += shelf + gutter;
            x = gutter;
            shelf = 0.0;
            if (x + w + gutter > size) return false;
        }
        out[idx] = {x, y};
        x += w + gutter;
        shelf = std::max(shelf, h);
    }
    return y + shelf + gutter <= size;
}

}  // namespace

UvLayout unwrap_uv(const Mesh& mesh, const UnwrapOptions& options) {
    mesh.validate();
    if (options.texture_size < 2 * options.gutter + 2) throw RangeError("texture too small for the gutter");
    const std::size_t nf = mesh.faces.size();
    UvLayout out;
    out.texture_size = options.texture_size;
    out.face_chart.assign(nf, -1);
    out.uv_faces.assign(nf, Face{0, 0, 0});

    std::vector<int> cluster(nf, -1);
    for (std::size_t f = 0; f < nf; ++f) {
        const Vec3 n = face_normal(mesh, f);
        if (!(n.norm() > 1e-18)) {
            out.skipped_faces.push_back(f);
            continue;
        }
        int axis = 0;
        n.cwiseAbs().maxCoeff(&axis);
        cluster[f] = 2 * axis + (n[axis] < 0.0 ? 1 : 0);
    }

    UnionFind uf(nf);
    std::unordered_map<std::uint64_t, std::size_t> first_face;
    for (std::size_t f = 0; f < nf; ++f) {
        if (cluster[f] < 0) continue;
        for (int e = 0; e < 3; ++e) {
            const int a = mesh.faces[f][e], b = mesh.faces[f][(e + 1) % 3];
            const std::uint64_t key = edge_key(std::min(a, b), std::max(a, b)) * 8 + static_cast<std::uint64_t>(cluster[f]);
            auto [it, fresh] = first_face.emplace(key, f);
            if (!fresh) uf.unite(it->second, f);
        }
    }

    std::vector<Chart> charts;
    std::map<std::size_t, int> root_chart;
    for (std::size_t f = 0; f < nf; ++f) {
        if (cluster[f] < 0) continue;
        const std::size_t r = uf.find(f);
        auto [it, fresh] = root_chart.emplace(r, static_cast<int>(charts.size()));
        if (fresh) {
            charts.emplace_back();
            charts.back().cluster = cluster[f];
            charts.back().lo = Vec2::Constant(std::numeric_limits<double>::infinity());
            charts.back().hi = -charts.back().lo;
        }
        Chart& c = charts[static_cast<std::size_t>(it->second)];
        c.faces.push_back(f);
        out.face_chart[f] = it->second;
        for (int k = 0; k < 3; ++k) {
            const Vec2 p = project_along(mesh.vertices[static_cast<std::size_t>(mesh.faces[f][k])], c.cluster);
            c.lo = c.lo.cwiseMin(p);
            c.hi = c.hi.cwiseMax(p);
        }
    }
    out.charts = static_cast<int>(charts.size());

    const int size = options.texture_size;
    std::vector<Placement> place;
    if (!charts.empty()) {
        std::vector<std::size_t> order(charts.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return charts[a].hi.y() - charts[a].lo.y() > charts[b].hi.y() - charts[b].lo.y();
        });
        double max_extent = 0.0;
        for (const Chart& c : charts) max_extent = std::max(max_extent, (c.hi - c.lo).maxCoeff());
        double lo = 0.0, hi = max_extent > 0.0 ? size / max_extent : 1.0;
        if (!shelf_pack(charts, order, lo, size, options.gutter, place)) {
            throw RangeError("too many charts (" + std::to_string(charts.size()) + ") for a " + std::to_string(size) +
                             "² atlas");
        }
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (shelf_pack(charts, order, mid, size, options.gutter, place)) lo = mid;
            else hi = mid;
        }
        (void)shelf_pack(charts, order, lo, size, options.gutter, place);

        for (std::size_t ci = 0; ci < charts.size(); ++ci) {
            std::unordered_map<int, int> uv_of_vertex;
            for (std::size_t f : charts[ci].faces) {
                for (int k = 0; k < 3; ++k) {
                    const int vtx = mesh.faces[f][k];
                    auto [it, fresh] = uv_of_vertex.emplace(vtx, static_cast<int>(out.uvs.size()));
                    if (fresh) {
                        const Vec2 p = project_along(mesh.vertices[static_cast<std::size_t>(vtx)], charts[ci].cluster);
                        const Vec2 t = Vec2(place[ci].x, place[ci].y) + (p - charts[ci].lo) * lo;
                        out.uvs.push_back(t / size);
                    }
                    out.uv_faces[f][k] = it->second;
                }
            }
        }
    }
    if (!out.skipped_faces.empty()) {
        const int corner = static_cast<int>(out.uvs.size());
        out.uvs.emplace_back(0.0, 0.0);
        for (std::size_t f : out.skipped_faces) out.uv_faces[f] = {corner, corner, corner};
    }
    return out;
}

void for_each_texel(const UvLayout& uv, std::size_t face,
                    const std::function<void(int, int, double, double, double)>& fn) {
    const int n = uv.texture_size;
    std::array<Vec2, 3> p;
    for (int k = 0; k < 3; ++k) {
        const Vec2& t = uv.uvs[static_cast<std::size_t>(uv.uv_faces[face][k])];
        p[k] = Vec2(t.x() * n, (1.0 - t.y()) * n);
    }
    const double area = (p[1] - p[0]).x() * (p[2] - p[0]).y() - (p[1] - p[0]).y() * (p[2] - p[0]).x();
    if (area == 0.0) return;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({p[0].x(), p[1].x(), p[2].x()}) - 0.5)));
    const int x1 = std::min(n - 1, static_cast<int>(std::ceil(std::max({p[0].x(), p[1].x(), p[2].x()}) - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({p[0].y(), p[1].y(), p[2].y()}) - 0.5)));
    const int y1 = std::min(n - 1, static_cast<int>(std::ceil(std::max({p[0].y(), p[1].y(), p[2].y()}) - 0.5)));
    auto edge = [](const Vec2& a, const Vec2& b, const Vec2& c) {
        return (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    };
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const Vec2 c(x + 0.5, y + 0.5);
            const double b0 = edge(p[1], p[2], c) / area;
            const double b1 = edge(p[2], p[0], c) / area;
            const double b2 = edge(p[0], p[1], c) / area;
            if (b0 < 0.0 || b1 < 0.0 || b2 < 0.0) continue;
            fn(x, y, b0, b1, b2);
        }
    }
}

double texel_utilization(const UvLayout& uv) {
    const int n = uv.texture_size;
    if (n <= 0) return 0.0;
    std::vector<char> covered(static_cast<std::size_t>(n) * n, 0);
    for (std::size_t f = 0; f < uv.uv_faces.size(); ++f) {
        if (uv.face_chart[f] < 0) continue;
        for_each_texel(uv, f, [&](int x, int y, double, double, double) {
            covered[static_cast<std::size_t>(y) * n + x] = 1;
        });
    }
    return static_cast<double>(std::count(covered.begin(), covered.end(), 1)) / static_cast<double>(covered.size());
}

}  // namespace splat4d
