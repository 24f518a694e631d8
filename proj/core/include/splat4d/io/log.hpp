#pragma once

#include "splat4d/mesh_sequence.hpp"
#include "splat4d/trainer.hpp"

#include <filesystem>
#include <fstream>
#include <string>

namespace splat4d::io {

/// One JSON object per line.
[[nodiscard]] std::string to_json_line(const IterationLog& log);
[[nodiscard]] std::string to_json_line(const TextureRefineLog& log);

/// Appends records to a file; flushes each line so a killed run keeps its log.
class JsonLinesLog {
public:
    explicit JsonLinesLog(const std::filesystem::path& path);

    void write(const IterationLog& log);
    void write(const TextureRefineLog& log);

private:
    std::ofstream out_;
};

}  // namespace splat4d::io
