#include "splat4d/io/mesh_io.hpp"

#include "splat4d/errors.hpp"
#include "splat4d/io/image_io.hpp"

#include <cstdio>
#include <fstream>

namespace splat4d::io {

namespace {

void appendf(std::string& out, const char* fmt, double a, double b) {
    char buf[96];
    const int n = std::snprintf(buf, sizeof buf, fmt, a, b);
    out.append(buf, static_cast<std::size_t>(n));
}

void appendf(std::string& out, const char* fmt, double a, double b, double c) {
    char buf[128];
    const int n = std::snprintf(buf, sizeof buf, fmt, a, b, c);
    out.append(buf, static_cast<std::size_t>(n));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f << text;
    if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace

std::string encode_obj(const TexturedMesh& m, const std::string& mtl_name) {
    m.mesh.validate();
    if (m.uv.uv_faces.size() != m.mesh.faces.size()) throw DimensionError("UV layout does not match the mesh");
    std::string out = "mtllib " + mtl_name + "\n";
    for (const Vec3& v : m.mesh.vertices) appendf(out, "v %.9g %.9g %.9g\n", v.x(), v.y(), v.z());
    for (const Vec2& t : m.uv.uvs) appendf(out, "vt %.9g %.9g\n", t.x(), t.y());
    out += "usemtl surface\n";
    for (std::size_t f = 0; f < m.mesh.faces.size(); ++f) {
        out += "f";
        for (int k = 0; k < 3; ++k) {
            out += ' ' + std::to_string(m.mesh.faces[f][k] + 1) + '/' + std::to_string(m.uv.uv_faces[f][k] + 1);
        }
        out += '\n';
    }
    return out;
}

std::string encode_mtl(const std::string& texture_name) {
    return "newmtl surface\nKa 0 0 0\nKd 1 1 1\nKs 0 0 0\nillum 0\nmap_Kd " + texture_name + "\n";
}

std::vector<std::filesystem::path> write_sequence(const std::filesystem::path& dir, const TexturedMeshSequence& seq) {
    seq.validate();
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> objs;
    for (int i = 0; i < seq.frame_count(); ++i) {
        char stem[32];
        std::snprintf(stem, sizeof stem, "frame_%03d", i);
        const std::string s(stem);
        const TexturedMesh m = seq.textured(i);
        write_text(dir / (s + ".obj"), encode_obj(m, s + ".mtl"));
        write_text(dir / (s + ".mtl"), encode_mtl(s + ".png"));
        write_png(dir / (s + ".png"), m.texture);
        objs.push_back(dir / (s + ".obj"));
    }
    return objs;
}

}  // namespace splat4d::io
