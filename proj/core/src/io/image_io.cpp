#include "splat4d/io/image_io.hpp"

#include "splat4d/errors.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace splat4d::io {
namespace {

std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void write_png_bytes(const std::filesystem::path& path, int w, int h, std::uint32_t format,
                     const std::vector<std::uint8_t>& bytes) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(w);
    img.height = static_cast<png_uint_32>(h);
    img.format = format;
    if (png_image_write_to_file(&img, path.string().c_str(), 0, bytes.data(), 0, nullptr) == 0) {
        throw IoError("cannot write PNG " + path.string() + ": " + img.message);
    }
}

}  // namespace

RgbaImage read_png_rgba(const std::filesystem::path& path) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (png_image_begin_read_from_file(&img, path.string().c_str()) == 0) {
        throw IoError("cannot read PNG " + path.string() + ": " + img.message);
    }
    img.format = PNG_FORMAT_RGBA;
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
    if (png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr) == 0) {
        const std::string msg = img.message;
        png_image_free(&img);
        throw IoError("cannot decode PNG " + path.string() + ": " + msg);
    }
    RgbaImage out;
    out.rgb = Image(static_cast<int>(img.width), static_cast<int>(img.height));
    out.alpha.resize(out.rgb.pixel_count());
    for (std::size_t i = 0; i < out.rgb.pixel_count(); ++i) {
        for (int c = 0; c < 3; ++c) out.rgb.data[3 * i + c] = buf[4 * i + c] / 255.0;
        out.alpha[i] = buf[4 * i + 3] / 255.0;
    }
    return out;
}

Image read_png(const std::filesystem::path& path, const Rgb& background) {
    RgbaImage in = read_png_rgba(path);
    for (std::size_t i = 0; i < in.alpha.size(); ++i) {
        const double a = in.alpha[i];
        for (int c = 0; c < 3; ++c) {
            double& v = in.rgb.data[3 * i + c];
            v = v * a + background[c] * (1.0 - a);
        }
    }
    return in.rgb;
}

void write_png(const std::filesystem::path& path, const Image& image) {
    std::vector<std::uint8_t> bytes(image.data.size());
    std::transform(image.data.begin(), image.data.end(), bytes.begin(), to_byte);
    write_png_bytes(path, image.width, image.height, PNG_FORMAT_RGB, bytes);
}

void write_png(const std::filesystem::path& path, const Image& image, const std::vector<double>& alpha) {
    if (alpha.size() != image.pixel_count()) throw DimensionError("alpha channel has the wrong size");
    std::vector<std::uint8_t> bytes(image.pixel_count() * 4);
    for (std::size_t i = 0; i < image.pixel_count(); ++i) {
        for (int c = 0; c < 3; ++c) bytes[4 * i + c] = to_byte(image.data[3 * i + c]);
        bytes[4 * i + 3] = to_byte(alpha[i]);
    }
    write_png_bytes(path, image.width, image.height, PNG_FORMAT_RGBA, bytes);
}

void write_pfm(const std::filesystem::path& path, const Image& image) {
    static_assert(std::endian::native == std::endian::little, "PFM writer assumes a little-endian host");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "PF\n" << image.width << ' ' << image.height << "\n-1.0\n";
    std::vector<float> row(static_cast<std::size_t>(image.width) * 3);
    for (int y = image.height - 1; y >= 0; --y) {
        for (std::size_t k = 0; k < row.size(); ++k) {
            row[k] = static_cast<float>(image.data[static_cast<std::size_t>(y) * row.size() + k]);
        }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!out) throw IoError("failed writing " + path.string());
}

Image read_pfm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string magic;
    int w = 0, h = 0;
    double scale = 0.0;
    in >> magic >> w >> h >> scale;
    in.get();
    if (magic != "PF") throw ParseError(path.string() + ": only color PFM (PF) is supported", 0);
    if (w <= 0 || h <= 0) throw ParseError(path.string() + ": bad PFM size", 3);
    const bool little = scale < 0.0;
    const auto header = static_cast<std::size_t>(in.tellg());
    Image img(w, h);
    std::vector<float> row(static_cast<std::size_t>(w) * 3);
    for (int y = h - 1; y >= 0; --y) {
        in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
        if (!in) {
            throw ParseError(path.string() + ": truncated PFM body",
                             header + static_cast<std::size_t>(h - 1 - y) * row.size() * sizeof(float));
        }
        for (std::size_t k = 0; k < row.size(); ++k) {
            float v = row[k];
            if (!little) v = std::bit_cast<float>(__builtin_bswap32(std::bit_cast<std::uint32_t>(v)));
            img.data[static_cast<std::size_t>(y) * row.size() + k] = v;
        }
    }
    return img;
}

}  // namespace splat4d::io
