#pragma once

#include "splat4d/gaussians.hpp"

#include <filesystem>
#include <string>

namespace splat4d::io {

/// Binary little-endian PLY in the usual 3D Gaussian splatting layout:
/// x y z f_dc_0..2 opacity scale_0..2 rot_0..3. Values are written as
/// doubles so a round trip is bit-exact. f_dc holds raw RGB, opacity the
/// logit, scale the log standard deviations and rot a (w, x, y, z)
/// quaternion.
void save_cloud(const std::filesystem::path& path, const GaussianCloud& cloud);
[[nodiscard]] std::string encode_cloud(const GaussianCloud& cloud);

/// Accepts float or double properties in any order and ignores extra ones
/// (normals, f_rest_*). Throws ParseError with a byte offset on a bad
/// header, a missing property, a short body or a non-finite value; IoError
/// if the file cannot be opened.
[[nodiscard]] GaussianCloud load_cloud(const std::filesystem::path& path);
[[nodiscard]] GaussianCloud decode_cloud(const std::string& bytes);

}  // namespace splat4d::io
