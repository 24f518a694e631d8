#include "splat4d/io/log.hpp"

#include "splat4d/errors.hpp"

#include <json.hpp>

namespace splat4d::io {

using ordered = nlohmann::ordered_json;

std::string to_json_line(const IterationLog& log) {
    ordered j;
    j["stage"] = log.stage;
    j["iteration"] = log.iteration;
    j["ref_loss"] = log.ref_loss;
    j["guidance_energy"] = log.guidance_energy;
    j["noise_level"] = log.noise_level;
    j["tau"] = log.tau;
    j["gaussians"] = log.gaussians;
    j["wall_seconds"] = log.wall_seconds;
    return j.dump();
}

std::string to_json_line(const TextureRefineLog& log) {
    ordered j;
    j["stage"] = "refine";
    j["iteration"] = log.iteration;
    j["loss"] = log.loss;
    return j.dump();
}

JsonLinesLog::JsonLinesLog(const std::filesystem::path& path) : out_(path, std::ios::app) {
    if (!out_) throw IoError("cannot open log " + path.string());
}

void JsonLinesLog::write(const IterationLog& log) { out_ << to_json_line(log) << std::endl; }

void JsonLinesLog::write(const TextureRefineLog& log) { out_ << to_json_line(log) << std::endl; }

}  // namespace splat4d::io
