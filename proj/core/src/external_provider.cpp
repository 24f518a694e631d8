#include "splat4d/external_provider.hpp"

#include "splat4d/errors.hpp"
#include "splat4d/io/image_io.hpp"

#include <json.hpp>

#include <cerrno>
#include <csignal>
#include <cstdio>
#include <cstring>
#include <mutex>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

namespace splat4d {

using nlohmann::json;

struct ExternalProvider::Impl {
    pid_t pid = -1;
    FILE* to_child = nullptr;
    FILE* from_child = nullptr;
    std::filesystem::path scratch;
    bool own_scratch = false;
    std::mutex mutex;
    std::uint64_t counter = 0;

    json exchange(const json& request) {
        const std::string line = request.dump() + "\n";
        if (std::fputs(line.c_str(), to_child) < 0 || std::fflush(to_child) != 0) {
            throw IoError("external provider closed its input");
        }
        std::string reply;
        int c = 0;
        while ((c = std::fgetc(from_child)) != EOF && c != '\n') reply.push_back(static_cast<char>(c));
        if (reply.empty() && c == EOF) throw IoError("external provider exited without replying");
        json r;
        try {
            r = json::parse(reply);
        } catch (const json::parse_error& e) {
            throw IoError(std::string("external provider sent malformed JSON: ") + e.what());
        }
        if (r.contains("error")) throw CoverageError("external provider: " + r["error"].get<std::string>());
        return r;
    }

    std::filesystem::path next_path(const std::string& stem) {
        return scratch / (stem + "_" + std::to_string(counter++) + ".pfm");
    }
};

namespace {

json camera_json(const Camera& c) {
    return {{"azimuth", c.azimuth}, {"elevation", c.elevation}, {"radius", c.radius}, {"fov_y", c.fov_y},
            {"width", c.width},     {"height", c.height},       {"near", c.near},     {"far", c.far}};
}

}  // namespace

ExternalProvider::ExternalProvider(const std::string& command, std::filesystem::path scratch_dir)
    : impl_(std::make_unique<Impl>()) {
    if (scratch_dir.empty()) {
        scratch_dir = std::filesystem::temp_directory_path() /
                      ("splat4d-provider-" + std::to_string(::getpid()) + "-" +
                       std::to_string(reinterpret_cast<std::uintptr_t>(impl_.get())));
        impl_->own_scratch = true;
    }
    std::filesystem::create_directories(scratch_dir);
    impl_->scratch = scratch_dir;

    int in_pipe[2], out_pipe[2];
    if (::pipe(in_pipe) != 0 || ::pipe(out_pipe) != 0) throw IoError("pipe() failed: " + std::string(std::strerror(errno)));
    const pid_t pid = ::fork();
    if (pid < 0) throw IoError("fork() failed: " + std::string(std::strerror(errno)));
    if (pid == 0) {
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        ::close(out_pipe[0]);
        ::close(out_pipe[1]);
        ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    impl_->pid = pid;
    impl_->to_child = ::fdopen(in_pipe[1], "w");
    impl_->from_child = ::fdopen(out_pipe[0], "r");
    if (impl_->to_child == nullptr || impl_->from_child == nullptr) throw IoError("fdopen() failed");
    // A provider that dies must surface as an error, not kill us.
    std::signal(SIGPIPE, SIG_IGN);
}

ExternalProvider::~ExternalProvider() {
    if (!impl_) return;
    if (impl_->to_child != nullptr) std::fclose(impl_->to_child);
    if (impl_->from_child != nullptr) std::fclose(impl_->from_child);
    if (impl_->pid > 0) {
        int status = 0;
        ::waitpid(impl_->pid, &status, 0);
    }
    if (impl_->own_scratch) {
        std::error_code ec;
        std::filesystem::remove_all(impl_->scratch, ec);
    }
}

Image ExternalProvider::gradient(const GuidanceRequest& r) const {
    if (r.rendered == nullptr) throw DimensionError("guidance request without a rendered image");
    std::lock_guard lock(impl_->mutex);
    const auto image_path = impl_->next_path("render");
    io::write_pfm(image_path, *r.rendered);
    json ref = nullptr;
    if (r.reference != nullptr) {
        const auto ref_path = impl_->next_path("reference");
        io::write_pfm(ref_path, *r.reference);
        ref = ref_path.string();
    }
    const json reply = impl_->exchange({{"op", "guidance"},
                                        {"image", image_path.string()},
                                        {"reference", ref},
                                        {"camera", camera_json(r.camera)},
                                        {"t", r.noise_level},
                                        {"tau", r.tau},
                                        {"seed", r.seed},
                                        {"iteration", r.iteration},
                                        {"view", r.view}});
    if (!reply.contains("gradient")) throw IoError("external provider reply lacks \"gradient\"");
    Image g = io::read_pfm(reply["gradient"].get<std::string>());
    if (!g.same_shape(*r.rendered)) throw DimensionError("external gradient has the wrong size");
    return g;
}

std::vector<Image> ExternalProvider::refine(const RefineRequest& r) const {
    std::lock_guard lock(impl_->mutex);
    json frames = json::array(), clean = json::array(), cams = json::array();
    for (const Image& f : r.noisy) {
        const auto p = impl_->next_path("noisy");
        io::write_pfm(p, f);
        frames.push_back(p.string());
    }
    for (const Image& f : r.clean) {
        const auto p = impl_->next_path("clean");
        io::write_pfm(p, f);
        clean.push_back(p.string());
    }
    for (const Camera& c : r.cameras) cams.push_back(camera_json(c));
    json input = nullptr;
    if (r.input_image != nullptr) {
        const auto p = impl_->next_path("input");
        io::write_pfm(p, *r.input_image);
        input = p.string();
    }
    const json reply = impl_->exchange({{"op", "refine"},
                                        {"frames", frames},
                                        {"clean", clean},
                                        {"cameras", cams},
                                        {"taus", std::vector<double>(r.taus.begin(), r.taus.end())},
                                        {"input", input},
                                        {"t", r.noise_level},
                                        {"seed", r.seed},
                                        {"iteration", r.iteration}});
    if (!reply.contains("frames") || !reply["frames"].is_array()) {
        throw IoError("external provider reply lacks \"frames\"");
    }
    std::vector<Image> out;
    for (const auto& p : reply["frames"]) out.push_back(io::read_pfm(p.get<std::string>()));
    if (out.size() != r.noisy.size()) throw DimensionError("external refiner changed the frame count");
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!out[i].same_shape(r.noisy[i])) throw DimensionError("external refiner changed the resolution");
    }
    return out;
}

}  // namespace splat4d
