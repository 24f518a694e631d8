#include "splat4d/io/ply.hpp"

#include "splat4d/errors.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <vector>

namespace splat4d::io {

static_assert(std::endian::native == std::endian::little, "PLY I/O assumes a little-endian host");

namespace {

constexpr std::array<const char*, 14> kProperties = {"x",       "y",       "z",       "f_dc_0", "f_dc_1",
                                                     "f_dc_2",  "opacity", "scale_0", "scale_1", "scale_2",
                                                     "rot_0",   "rot_1",   "rot_2",   "rot_3"};

struct Property {
    std::string name;
    std::string type;
    std::size_t size = 0;
    std::size_t offset = 0;  // within a vertex record
};

std::size_t type_size(const std::string& t) {
    static const std::map<std::string, std::size_t> sizes = {
        {"char", 1},  {"int8", 1},   {"uchar", 1},  {"uint8", 1},   {"short", 2},   {"int16", 2},
        {"ushort", 2}, {"uint16", 2}, {"int", 4},    {"int32", 4},   {"uint", 4},    {"uint32", 4},
        {"float", 4}, {"float32", 4}, {"double", 8}, {"float64", 8}};
    const auto it = sizes.find(t);
    return it == sizes.end() ? 0 : it->second;
}

double read_value(const char* p, const std::string& type) {
    if (type == "double" || type == "float64") {
        double d;
        std::memcpy(&d, p, 8);
        return d;
    }
    float f;
    std::memcpy(&f, p, 4);
    return f;
}

void put(std::string& out, double v) {
    char b[8];
    std::memcpy(b, &v, 8);
    out.append(b, 8);
}

}  // namespace

std::string encode_cloud(const GaussianCloud& cloud) {
    cloud.check_consistent();
    std::string out = "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(cloud.size()) + "\n";
    for (const char* p : kProperties) out += std::string("property double ") + p + "\n";
    out += "end_header\n";
    out.reserve(out.size() + cloud.size() * kProperties.size() * 8);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        for (int k = 0; k < 3; ++k) put(out, cloud.positions[i][k]);
        for (int k = 0; k < 3; ++k) put(out, cloud.colors[i][k]);
        put(out, cloud.opacity_logits[i]);
        for (int k = 0; k < 3; ++k) put(out, cloud.log_scales[i][k]);
        for (int k = 0; k < 4; ++k) put(out, cloud.rotations[i][k]);
    }
    return out;
}

void save_cloud(const std::filesystem::path& path, const GaussianCloud& cloud) {
    const std::string bytes = encode_cloud(cloud);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + path.string());
}

GaussianCloud decode_cloud(const std::string& bytes) {
    std::size_t pos = 0;
    auto next_line = [&]() {
        const std::size_t end = bytes.find('\n', pos);
        if (end == std::string::npos) throw ParseError("PLY header is not terminated", pos);
        std::string line = bytes.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::size_t at = pos;
        pos = end + 1;
        return std::pair{line, at};
    };

    if (next_line().first != "ply") throw ParseError("missing 'ply' magic", 0);
    std::size_t count = 0;
    bool have_vertex = false, in_vertex = false, have_format = false;
    std::vector<Property> props;
    std::size_t stride = 0;
    while (true) {
        const auto [line, at] = next_line();
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "end_header") break;
        if (word.empty() || word == "comment" || word == "obj_info") continue;
        if (word == "format") {
            std::string fmt, version;
            ls >> fmt >> version;
            if (fmt != "binary_little_endian") throw ParseError("unsupported PLY format '" + fmt + "'", at);
            have_format = true;
        } else if (word == "element") {
            std::string name;
            long long n = -1;
            ls >> name >> n;
            if (!ls || n < 0) throw ParseError("bad element line", at);
            in_vertex = name == "vertex";
            if (in_vertex) {
                if (have_vertex) throw ParseError("duplicate vertex element", at);
                have_vertex = true;
                count = static_cast<std::size_t>(n);
            } else if (n != 0) {
                throw ParseError("unsupported element '" + name + "'", at);
            }
        } else if (word == "property") {
            if (!in_vertex) continue;  // belongs to an empty element
            Property p;
            ls >> p.type;
            if (p.type == "list") throw ParseError("list properties are not supported", at);
            ls >> p.name;
            p.size = type_size(p.type);
            if (p.size == 0 || p.name.empty()) throw ParseError("bad property line '" + line + "'", at);
            p.offset = stride;
            stride += p.size;
            props.push_back(p);
        } else {
            throw ParseError("unexpected header line '" + line + "'", at);
        }
    }
    if (!have_format) throw ParseError("PLY header has no format line", 0);
    if (!have_vertex) throw ParseError("PLY header has no vertex element", 0);

    std::array<const Property*, kProperties.size()> slot{};
    for (std::size_t k = 0; k < kProperties.size(); ++k) {
        for (const Property& p : props) {
            if (p.name == kProperties[k]) slot[k] = &p;
        }
        if (slot[k] == nullptr) throw ParseError(std::string("missing vertex property '") + kProperties[k] + "'", pos);
        const std::string& t = slot[k]->type;
        if (t != "float" && t != "float32" && t != "double" && t != "float64") {
            throw ParseError(std::string("property '") + kProperties[k] + "' must be float or double, got " + t, pos);
        }
    }
    const std::size_t body = bytes.size() - pos;
    if (stride == 0 || body / stride < count) {
        throw ParseError("PLY body holds " + std::to_string(stride ? body / stride : 0) + " of " +
                             std::to_string(count) + " vertices",
                         bytes.size());
    }

    GaussianCloud cloud(count);
    std::array<double, kProperties.size()> v{};
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t record = pos + i * stride;
        for (std::size_t k = 0; k < kProperties.size(); ++k) {
            v[k] = read_value(bytes.data() + record + slot[k]->offset, slot[k]->type);
            if (!std::isfinite(v[k])) {
                throw ParseError(std::string("non-finite ") + kProperties[k] + " in vertex " + std::to_string(i),
                                 record + slot[k]->offset);
            }
        }
        cloud.positions[i] = Vec3(v[0], v[1], v[2]);
        cloud.colors[i] = Vec3(v[3], v[4], v[5]);
        cloud.opacity_logits[i] = v[6];
        cloud.log_scales[i] = Vec3(v[7], v[8], v[9]);
        cloud.rotations[i] = Vec4(v[10], v[11], v[12], v[13]);
    }
    return cloud;
}

GaussianCloud load_cloud(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_cloud(bytes);
}

}  // namespace splat4d::io
