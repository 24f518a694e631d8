#pragma once

#include "splat4d/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace splat4d::io {

struct ReferenceView {
    double azimuth = 0.0;
    double elevation = 0.0;
    double radius = 2.0;
    double fov_y = 49.1;

    bool operator==(const ReferenceView&) const = default;
};

struct MeshConfig {
    int frames = 14;
    int grid_resolution = 128;
    Vec3 bounds_lo = Vec3::Constant(-1.0);
    Vec3 bounds_hi = Vec3::Constant(1.0);
    double iso = 1.0;
    int texture_size = 1024;
    int gutter = 4;
    int view_size = 256;
    double max_flipped_fraction = 0.05;

    bool operator==(const MeshConfig&) const = default;
};

struct RefineConfig {
    int iterations = 50;
    double noise_level = 0.7;
    double lr = 0.01;
    int view_size = 256;

    bool operator==(const RefineConfig&) const = default;
};

struct PathsConfig {
    std::string reference_image;  // PNG used by fit-static
    std::string video;            // directory or pattern for fit-dynamic
    std::string output_dir = "out";
    /// Shell command of an external guidance/refiner process; empty means
    /// reference supervision only and an identity refiner.
    std::string guidance_command;
    std::string cloud;  // empty: <output_dir>/static.ply
    std::string model;  // empty: <output_dir>/deformation.ckpt

    bool operator==(const PathsConfig&) const = default;
};

/// Everything one CLI run needs. Stage seeds are copies of `seed`.
struct PipelineConfig {
    std::uint64_t seed = 0;
    int threads = 0;  // 0: all hardware threads
    ReferenceView reference;
    StaticFitConfig static_fit;
    DynamicFitConfig dynamic_fit;
    MeshConfig mesh;
    RefineConfig refine;
    PathsConfig paths;

    /// Throws ConfigError.
    void validate() const;
    [[nodiscard]] Camera reference_camera(int width, int height) const;
    [[nodiscard]] std::filesystem::path cloud_path() const;
    [[nodiscard]] std::filesystem::path model_path() const;

    bool operator==(const PipelineConfig&) const = default;
};

/// JSON (// and /* */ comments allowed) with the layout of serialize_config. "seed" is required; unknown
/// keys and wrongly typed values are ConfigErrors naming the key path.
[[nodiscard]] PipelineConfig parse_config(const std::string& json_text);
[[nodiscard]] PipelineConfig load_config(const std::filesystem::path& path);
/// Every field, defaults included, in a fixed key order.
[[nodiscard]] std::string serialize_config(const PipelineConfig& config);

}  // namespace splat4d::io
