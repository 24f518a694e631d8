#include "splat4d/io/checkpoint.hpp"

#include "splat4d/errors.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

namespace splat4d::io {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', '4', 'D', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::string& out, T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    out.append(b, sizeof(T));
}

struct Reader {
    const std::string& bytes;
    std::size_t pos = 0;

    template <typename T>
    T get(const char* what) {
        if (bytes.size() - pos < sizeof(T)) throw ParseError(std::string("checkpoint truncated reading ") + what, pos);
        T v;
        std::memcpy(&v, bytes.data() + pos, sizeof(T));
        pos += sizeof(T);
        return v;
    }

    void doubles(std::span<double> out, const char* what) {
        if ((bytes.size() - pos) / 8 < out.size()) {
            throw ParseError(std::string("checkpoint truncated in ") + what, bytes.size());
        }
        std::memcpy(out.data(), bytes.data() + pos, out.size() * 8);
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (!std::isfinite(out[i])) throw ParseError(std::string("non-finite value in ") + what, pos + 8 * i);
        }
        pos += out.size() * 8;
    }
};

}  // namespace

std::string encode_model(const DeformationModel& m) {
    std::string out(kMagic, 8);
    put<std::int32_t>(out, m.field.spatial_resolution());
    put<std::int32_t>(out, m.field.temporal_resolution());
    put<std::int32_t>(out, m.field.feature_dim());
    put<std::int32_t>(out, m.decoder.input_dim());
    put<std::int32_t>(out, m.decoder.hidden_dim());
    const SpaceTimeBox& d = m.field.domain();
    for (int k = 0; k < 3; ++k) put(out, d.lo[k]);
    for (int k = 0; k < 3; ++k) put(out, d.hi[k]);
    put(out, d.t_lo);
    put(out, d.t_hi);
    put<std::uint64_t>(out, m.field.values().size());
    for (double v : m.field.values()) put(out, v);
    put<std::uint64_t>(out, m.decoder.parameters().size());
    for (double v : m.decoder.parameters()) put(out, v);
    return out;
}

void save_model(const std::filesystem::path& path, const DeformationModel& model) {
    const std::string bytes = encode_model(model);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + path.string());
}

DeformationModel decode_model(const std::string& bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
        throw ParseError("not a splat4d checkpoint (bad magic)", 0);
    }
    Reader r{bytes, 8};
    const int spatial = r.get<std::int32_t>("spatial resolution");
    const int temporal = r.get<std::int32_t>("temporal resolution");
    const int features = r.get<std::int32_t>("feature dimension");
    const int input = r.get<std::int32_t>("decoder input dimension");
    const int hidden = r.get<std::int32_t>("decoder hidden dimension");
    if (spatial < 2 || temporal < 2 || features < 1 || input < 1 || hidden < 1 || spatial > 4096 ||
        temporal > 4096 || features > 4096 || hidden > 65536) {
        throw ParseError("checkpoint has invalid shapes", 8);
    }
    SpaceTimeBox domain;
    for (int k = 0; k < 3; ++k) domain.lo[k] = r.get<double>("domain");
    for (int k = 0; k < 3; ++k) domain.hi[k] = r.get<double>("domain");
    domain.t_lo = r.get<double>("domain");
    domain.t_hi = r.get<double>("domain");

    DeformationModel m;
    const std::size_t at_field = r.pos;
    m.field = HexPlaneField(spatial, temporal, features, domain);
    if (r.get<std::uint64_t>("field size") != m.field.values().size()) {
        throw ParseError("field value count does not match its shape", at_field);
    }
    r.doubles(m.field.values(), "field values");
    const std::size_t at_decoder = r.pos;
    m.decoder = DeformDecoder(input, hidden, 0);
    if (r.get<std::uint64_t>("decoder size") != m.decoder.parameters().size()) {
        throw ParseError("decoder parameter count does not match its shape", at_decoder);
    }
    r.doubles(m.decoder.parameters(), "decoder parameters");
    if (r.pos != bytes.size()) throw ParseError("trailing bytes after checkpoint", r.pos);
    return m;
}

DeformationModel load_model(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_model(bytes);
}

}  // namespace splat4d::io
