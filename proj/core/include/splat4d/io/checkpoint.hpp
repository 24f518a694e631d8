#pragma once

#include "splat4d/deformation.hpp"

#include <filesystem>
#include <string>

namespace splat4d::io {

/// Binary deformation checkpoint: magic "S4DCKPT1", the field and decoder
/// shapes, the domain, then raw little-endian doubles. Round trips are
/// bit-exact.
void save_model(const std::filesystem::path& path, const DeformationModel& model);
[[nodiscard]] std::string encode_model(const DeformationModel& model);

/// Throws ParseError on a wrong magic, bad shapes or a short file.
[[nodiscard]] DeformationModel load_model(const std::filesystem::path& path);
[[nodiscard]] DeformationModel decode_model(const std::string& bytes);

}  // namespace splat4d::io
