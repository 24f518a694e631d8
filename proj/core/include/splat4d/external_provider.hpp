#pragma once

#include "splat4d/guidance.hpp"

#include <filesystem>
#include <memory>
#include <string>

namespace splat4d {

class ChildProcess;

/// Guidance and refinement served by an external program over line-delimited
/// JSON on its stdin/stdout. Images travel as little-endian PFM files in a
/// scratch directory.
///
///   -> {"op":"guidance","image":P,"reference":P|null,"camera":{...},"t":x,"tau":x,"seed":n,"iteration":n,"view":n}
///   <- {"gradient":P}
///   -> {"op":"refine","frames":[P...],"clean":[P...],"cameras":[{...}...],"taus":[x...],"input":P|null,"t":x,"seed":n,"iteration":n}
///   <- {"frames":[P...]}
///
/// Any reply of the form {"error":"..."} raises CoverageError. Calls are
/// serialized, so one instance may be shared between threads.
class ExternalProvider final : public GuidanceProvider, public VideoRefiner {
public:
    /// Starts `command` through /bin/sh. Throws IoError if it cannot start.
    explicit ExternalProvider(const std::string& command,
                              std::filesystem::path scratch_dir = {});
    ~ExternalProvider() override;

    ExternalProvider(const ExternalProvider&) = delete;
    ExternalProvider& operator=(const ExternalProvider&) = delete;

    [[nodiscard]] Image gradient(const GuidanceRequest& request) const override;
    [[nodiscard]] std::vector<Image> refine(const RefineRequest& request) const override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace splat4d
