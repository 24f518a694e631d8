#include "splat4d/io/video.hpp"

#include "splat4d/errors.hpp"
#include "splat4d/io/image_io.hpp"

#include <algorithm>
#include <string>

namespace splat4d::io {

namespace {

bool wildcard_match(const std::string& name, const std::string& pattern) {
    const std::size_t star = pattern.find('*');
    if (star == std::string::npos) return name == pattern;
    const std::string head = pattern.substr(0, star), tail = pattern.substr(star + 1);
    return name.size() >= head.size() + tail.size() && name.compare(0, head.size(), head) == 0 &&
           name.compare(name.size() - tail.size(), tail.size(), tail) == 0;
}

}  // namespace

std::vector<std::filesystem::path> list_frames(const std::filesystem::path& source) {
    std::filesystem::path dir = source;
    std::string pattern = "*.png";
    if (!std::filesystem::is_directory(source)) {
        pattern = source.filename().string();
        if (pattern.find('*') == std::string::npos) throw IoError(source.string() + " is not a directory or pattern");
        if (pattern.find('*') != pattern.rfind('*')) throw IoError("pattern may contain only one '*'");
        dir = source.has_parent_path() ? source.parent_path() : std::filesystem::path(".");
    }
    std::vector<std::filesystem::path> out;
    std::error_code ec;
    for (const auto& e : std::filesystem::directory_iterator(dir, ec)) {
        if (e.is_regular_file() && wildcard_match(e.path().filename().string(), pattern)) out.push_back(e.path());
    }
    if (ec) throw IoError("cannot list " + dir.string() + ": " + ec.message());
    std::sort(out.begin(), out.end());
    if (out.empty()) throw IoError("no frames match " + source.string());
    return out;
}

DrivingVideo load_video(const std::filesystem::path& source, const Camera& reference_camera) {
    const std::vector<std::filesystem::path> files = list_frames(source);
    DrivingVideo video;
    video.reference_camera = reference_camera;
    for (const auto& f : files) video.frames.push_back(read_png(f));
    if (video.frames.size() < 2) {
        throw DimensionError("a driving video needs at least 2 frames, found " + std::to_string(video.frames.size()));
    }
    std::string offenders;
    for (std::size_t i = 1; i < files.size(); ++i) {
        if (!video.frames[i].same_shape(video.frames[0])) {
            offenders += " " + files[i].filename().string() + " (" + std::to_string(video.frames[i].width) + "x" +
                         std::to_string(video.frames[i].height) + ")";
        }
    }
    if (!offenders.empty()) {
        throw DimensionError("frames differ in size from " + files[0].filename().string() + " (" +
                             std::to_string(video.frames[0].width) + "x" + std::to_string(video.frames[0].height) +
                             "):" + offenders);
    }
    video.reference_camera.width = video.frames[0].width;
    video.reference_camera.height = video.frames[0].height;
    return video;
}

}  // namespace splat4d::io
