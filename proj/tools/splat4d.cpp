// splat4d command-line driver: one subcommand per pipeline stage.
#include "splat4d/align.hpp"
#include "splat4d/errors.hpp"
#include "splat4d/external_provider.hpp"
#include "splat4d/gradcheck.hpp"
#include "splat4d/io/checkpoint.hpp"
#include "splat4d/io/config.hpp"
#include "splat4d/io/image_io.hpp"
#include "splat4d/io/log.hpp"
#include "splat4d/io/mesh_io.hpp"
#include "splat4d/io/ply.hpp"
#include "splat4d/io/video.hpp"
#include "splat4d/mesh_sequence.hpp"
#include "splat4d/parallel.hpp"
#include "splat4d/trainer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace splat4d;

namespace {

constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::string> output_dir;
    std::optional<std::string> cloud;
    std::optional<std::string> model;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("-c,--config", c.config, "pipeline config (JSON)");
    cmd->add_option("--seed", c.seed, "override the config seed");
    cmd->add_option("--threads", c.threads, "worker threads, 0 for all");
    cmd->add_option("-o,--output-dir", c.output_dir, "directory for outputs");
    cmd->add_option("--cloud", c.cloud, "Gaussian cloud PLY");
    cmd->add_option("--model", c.model, "deformation checkpoint");
}

io::PipelineConfig resolve(const Common& c) {
    io::PipelineConfig cfg;
    if (!c.config.empty()) {
        cfg = io::load_config(c.config);
    } else if (!c.seed) {
        throw ConfigError("no seed: pass --config with a 'seed' or --seed");
    }
    if (c.seed) {
        cfg.seed = *c.seed;
        cfg.static_fit.seed = *c.seed;
        cfg.dynamic_fit.seed = *c.seed;
    }
    if (c.threads) cfg.threads = *c.threads;
    if (c.output_dir) cfg.paths.output_dir = *c.output_dir;
    if (c.cloud) cfg.paths.cloud = *c.cloud;
    if (c.model) cfg.paths.model = *c.model;
    cfg.validate();
    if (cfg.threads > 0) set_thread_count(static_cast<std::size_t>(cfg.threads));
    fs::create_directories(cfg.paths.output_dir);
    return cfg;
}

std::shared_ptr<ExternalProvider> external(const io::PipelineConfig& cfg) {
    if (cfg.paths.guidance_command.empty()) return nullptr;
    return std::make_shared<ExternalProvider>(cfg.paths.guidance_command,
                                              fs::path(cfg.paths.output_dir) / "provider_scratch");
}

IterationCallback logger(io::JsonLinesLog& log, int every) {
    return [&log, every](const IterationLog& l) {
        log.write(l);
        if (every > 0 && l.iteration % every == 0) {
            std::fprintf(stderr, "%s %5d  ref %.6f  T %.3f  n=%zu  %.1fs\n", l.stage.c_str(), l.iteration, l.ref_loss,
                         l.noise_level, l.gaussians, l.wall_seconds);
        }
    };
}

ExtractOptions extract_options(const io::PipelineConfig& cfg) {
    ExtractOptions o;
    o.frames = cfg.mesh.frames;
    o.grid_resolution = cfg.mesh.grid_resolution;
    o.bounds.lo = cfg.mesh.bounds_lo;
    o.bounds.hi = cfg.mesh.bounds_hi;
    o.iso = cfg.mesh.iso;
    o.unwrap.texture_size = cfg.mesh.texture_size;
    o.unwrap.gutter = cfg.mesh.gutter;
    o.view = cfg.reference_camera(cfg.mesh.view_size, cfg.mesh.view_size);
    o.background = cfg.static_fit.background;
    o.max_flipped_fraction = cfg.mesh.max_flipped_fraction;
    return o;
}

// Null when the stage runs on the static cloud alone.
std::optional<DeformationModel> maybe_model(const io::PipelineConfig& cfg, bool static_only) {
    if (static_only) return std::nullopt;
    return io::load_model(cfg.model_path());
}

int run_fit_static(const Common& common, std::optional<int> iterations, std::string reference, int every) {
    io::PipelineConfig cfg = resolve(common);
    if (iterations) cfg.static_fit.iterations = *iterations;
    if (!reference.empty()) cfg.paths.reference_image = reference;
    if (cfg.paths.reference_image.empty()) throw ConfigError("fit-static needs paths.reference_image or --reference");
    cfg.static_fit.validate();

    StaticFitInput input;
    input.reference = io::read_png(cfg.paths.reference_image, cfg.static_fit.background);
    input.reference_camera = cfg.reference_camera(input.reference.width, input.reference.height);
    input.guidance = external(cfg);
    io::JsonLinesLog log(fs::path(cfg.paths.output_dir) / "log.jsonl");
    const GaussianCloud cloud = fit_static(input, cfg.static_fit, logger(log, every));
    io::save_cloud(cfg.cloud_path(), cloud);
    std::printf("wrote %s (%zu Gaussians)\n", cfg.cloud_path().c_str(), cloud.size());
    return 0;
}

int run_fit_dynamic(const Common& common, std::optional<int> iterations, std::string video_source, int every) {
    io::PipelineConfig cfg = resolve(common);
    if (iterations) cfg.dynamic_fit.iterations = *iterations;
    if (!video_source.empty()) cfg.paths.video = video_source;
    if (cfg.paths.video.empty()) throw ConfigError("fit-dynamic needs paths.video or --video");
    cfg.dynamic_fit.validate();

    const GaussianCloud cloud = io::load_cloud(cfg.cloud_path());
    const DrivingVideo video = io::load_video(cfg.paths.video, cfg.reference_camera(1, 1));
    io::JsonLinesLog log(fs::path(cfg.paths.output_dir) / "log.jsonl");
    const DynamicFitResult r = fit_dynamic(cloud, video, external(cfg), cfg.dynamic_fit, logger(log, every));
    io::save_model(cfg.model_path(), r.model);
    if (!cfg.dynamic_fit.freeze_static) io::save_cloud(cfg.cloud_path(), r.cloud);
    std::printf("wrote %s (final reference loss %.6g)\n", cfg.model_path().c_str(), r.final_ref_loss);
    return 0;
}

int run_export_mesh(const Common& common, bool static_only) {
    const io::PipelineConfig cfg = resolve(common);
    const GaussianCloud cloud = io::load_cloud(cfg.cloud_path());
    const std::optional<DeformationModel> model = maybe_model(cfg, static_only);
    const TexturedMeshSequence seq = extract_sequence(cloud, model ? &*model : nullptr, extract_options(cfg));
    const auto files = io::write_sequence(fs::path(cfg.paths.output_dir) / "mesh", seq);
    std::printf("wrote %zu frames to %s\n", files.size(), (fs::path(cfg.paths.output_dir) / "mesh").c_str());
    return 0;
}

int run_refine_texture(const Common& common, bool static_only, std::optional<int> iterations) {
    io::PipelineConfig cfg = resolve(common);
    if (iterations) cfg.refine.iterations = *iterations;
    cfg.validate();
    const GaussianCloud cloud = io::load_cloud(cfg.cloud_path());
    const std::optional<DeformationModel> model = maybe_model(cfg, static_only);
    const TexturedMeshSequence seq = extract_sequence(cloud, model ? &*model : nullptr, extract_options(cfg));

    TextureRefineOptions opt;
    opt.iterations = cfg.refine.iterations;
    opt.noise_level = cfg.refine.noise_level;
    opt.lr = cfg.refine.lr;
    opt.view = cfg.reference_camera(cfg.refine.view_size, cfg.refine.view_size);
    opt.background = cfg.static_fit.background;
    opt.seed = cfg.seed;
    const std::shared_ptr<ExternalProvider> ext = external(cfg);
    const std::shared_ptr<VideoRefiner> refiner = ext ? std::shared_ptr<VideoRefiner>(ext) : identity_refiner();

    io::JsonLinesLog log(fs::path(cfg.paths.output_dir) / "log.jsonl");
    const TexturedMeshSequence out =
        refine_textures(seq, *refiner, opt, [&log](const TextureRefineLog& l) { log.write(l); });
    const auto files = io::write_sequence(fs::path(cfg.paths.output_dir) / "refined", out);
    std::printf("wrote %zu refined frames to %s\n", files.size(),
                (fs::path(cfg.paths.output_dir) / "refined").c_str());
    return 0;
}

int run_turntable(const Common& common, bool static_only, int frames, int size) {
    const io::PipelineConfig cfg = resolve(common);
    if (frames < 1) throw ConfigError("--frames must be >= 1");
    if (size < 1) throw ConfigError("--size must be >= 1");
    const GaussianCloud cloud = io::load_cloud(cfg.cloud_path());
    const std::optional<DeformationModel> model = maybe_model(cfg, static_only);
    const fs::path dir = fs::path(cfg.paths.output_dir) / "turntable";
    fs::create_directories(dir);
    for (int i = 0; i < frames; ++i) {
        Camera cam = cfg.reference_camera(size, size);
        cam.azimuth += 360.0 * i / frames;
        const double tau = frames > 1 ? static_cast<double>(i) / (frames - 1) : 0.0;
        const GaussianCloud scene = model ? deform(cloud, *model, tau) : cloud;
        char name[32];
        std::snprintf(name, sizeof name, "frame_%03d.png", i);
        io::write_png(dir / name, render(scene, cam, cfg.static_fit.background).rgb);
    }
    std::printf("wrote %d frames to %s\n", frames, dir.c_str());
    return 0;
}

int run_align(const Common& common, std::string reference, double step) {
    io::PipelineConfig cfg = resolve(common);
    if (!reference.empty()) cfg.paths.reference_image = reference;
    if (cfg.paths.reference_image.empty()) throw ConfigError("align-azimuth needs paths.reference_image or --reference");
    const GaussianCloud cloud = io::load_cloud(cfg.cloud_path());
    const Image ref = io::read_png(cfg.paths.reference_image, cfg.static_fit.background);
    const AzimuthFit fit =
        align_azimuth(cloud, ref, cfg.reference_camera(ref.width, ref.height), step, cfg.static_fit.background);
    std::printf("azimuth %g  squared_l2 %.6g\n", fit.azimuth, fit.squared_l2);
    return 0;
}

int run_gradcheck(const Common& common, int scenes) {
    const io::PipelineConfig cfg = resolve(common);
    GradCheckSuiteOptions opt;
    opt.seed = cfg.seed;
    opt.scenes = scenes;
    const GradCheckSuiteResult r = run_gradcheck_suite(opt, &std::cerr);
    std::printf("rasterizer: %zu checked, %zu failures, max abs error %.3g\n", r.rasterizer.checked,
                r.rasterizer.failures.size(), r.rasterizer.max_abs_error);
    std::printf("deformation: %zu checked, %zu failures, max abs error %.3g\n", r.deformation.checked,
                r.deformation.failures.size(), r.deformation.max_abs_error);
    return r.ok() ? 0 : kExitOther;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"splat4d: image-to-4D Gaussian fitting, mesh export and texture refinement"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "help for every subcommand");

    Common common;
    std::optional<int> iterations;
    std::string reference, video;
    int every = 50, frames = 36, size = 256, scenes = 20;
    bool static_only = false;
    double step = 1.0;

    auto* fs_cmd = app.add_subcommand("fit-static", "fit the static Gaussian cloud to a reference image");
    add_common(fs_cmd, common);
    fs_cmd->add_option("--iterations", iterations, "override static.iterations");
    fs_cmd->add_option("--reference", reference, "reference PNG");
    fs_cmd->add_option("--log-every", every, "progress line interval, 0 for none");

    auto* fd_cmd = app.add_subcommand("fit-dynamic", "fit the deformation field to a driving video");
    add_common(fd_cmd, common);
    fd_cmd->add_option("--iterations", iterations, "override dynamic.iterations");
    fd_cmd->add_option("--video", video, "frame directory or pattern such as 'frames/*.png'");
    fd_cmd->add_option("--log-every", every, "progress line interval, 0 for none");

    auto* em_cmd = app.add_subcommand("export-mesh", "extract textured meshes per frame (OBJ/MTL/PNG)");
    add_common(em_cmd, common);
    em_cmd->add_flag("--static", static_only, "ignore the deformation model");

    auto* rt_cmd = app.add_subcommand("refine-texture", "extract meshes and refine the shared texture");
    add_common(rt_cmd, common);
    rt_cmd->add_flag("--static", static_only, "ignore the deformation model");
    rt_cmd->add_option("--iterations", iterations, "override refine.iterations");

    auto* tt_cmd = app.add_subcommand("render-turntable", "render an orbit of the (deforming) cloud to PNGs");
    add_common(tt_cmd, common);
    tt_cmd->add_flag("--static", static_only, "ignore the deformation model");
    tt_cmd->add_option("--frames", frames, "number of frames");
    tt_cmd->add_option("--size", size, "image width and height");

    auto* al_cmd = app.add_subcommand("align-azimuth", "find the azimuth whose render best matches an image");
    add_common(al_cmd, common);
    al_cmd->add_option("--reference", reference, "reference PNG");
    al_cmd->add_option("--step", step, "azimuth step in degrees");

    auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of all analytic gradients");
    add_common(gc_cmd, common);
    gc_cmd->add_option("--scenes", scenes, "random scenes to test");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n";
        const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        std::cerr << sub->help();
        return kExitConfig;
    }

    try {
        if (*fs_cmd) return run_fit_static(common, iterations, reference, every);
        if (*fd_cmd) return run_fit_dynamic(common, iterations, video, every);
        if (*em_cmd) return run_export_mesh(common, static_only);
        if (*rt_cmd) return run_refine_texture(common, static_only, iterations);
        if (*tt_cmd) return run_turntable(common, static_only, frames, size);
        if (*al_cmd) return run_align(common, reference, step);
        if (*gc_cmd) return run_gradcheck(common, scenes);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitOther;
    }
    return kExitOther;
}
