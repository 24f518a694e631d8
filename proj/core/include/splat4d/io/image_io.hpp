#pragma once

#include "splat4d/image.hpp"

#include <filesystem>
#include <vector>

namespace splat4d::io {

/// Decoded 8-bit PNG with straight (non-premultiplied) alpha in [0, 1].
struct RgbaImage {
    Image rgb;
    std::vector<double> alpha;
};

/// Reads any PNG libpng understands, expanded to RGBA. Throws IoError.
[[nodiscard]] RgbaImage read_png_rgba(const std::filesystem::path& path);

/// Reads a PNG and composites it over `background` (c·α + bg·(1 − α)).
[[nodiscard]] Image read_png(const std::filesystem::path& path, const Rgb& background = Rgb(1.0, 1.0, 1.0));

/// Writes an 8-bit RGB PNG; values are clamped to [0, 1] and rounded.
void write_png(const std::filesystem::path& path, const Image& image);
/// Writes an 8-bit RGBA PNG. `alpha` has one entry per pixel.
void write_png(const std::filesystem::path& path, const Image& image, const std::vector<double>& alpha);

/// Little-endian color PFM (float32, rows stored bottom to top).
void write_pfm(const std::filesystem::path& path, const Image& image);
[[nodiscard]] Image read_pfm(const std::filesystem::path& path);

}  // namespace splat4d::io
