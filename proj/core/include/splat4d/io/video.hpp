#pragma once

#include "splat4d/trainer.hpp"

#include <filesystem>
#include <vector>

namespace splat4d::io {

/// PNG frames from a directory (all *.png, sorted by name) or from a file
/// pattern with one '*' in the file name. Frames are composited over white.
/// Throws IoError when nothing matches or a frame is unreadable and
/// DimensionError for fewer than two frames or mixed sizes (the message
/// names the offending files).
[[nodiscard]] DrivingVideo load_video(const std::filesystem::path& source, const Camera& reference_camera);

/// The files load_video would read, in order.
[[nodiscard]] std::vector<std::filesystem::path> list_frames(const std::filesystem::path& source);

}  // namespace splat4d::io
