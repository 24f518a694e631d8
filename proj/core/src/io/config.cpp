#include "splat4d/io/config.hpp"

#include "splat4d/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

namespace splat4d::io {

using nlohmann::json;
using ordered = nlohmann::ordered_json;

namespace {

// Walks a config struct in both directions. Reader consumes keys and fails
// on leftovers; Writer emits them in visiting order.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + " must be an object");
    }

    template <typename T>
    void field(const char* key, T& out) {
        const auto it = j_.find(key);
        if (it == j_.end()) return;
        seen_.insert(key);
        read(*it, out, path_.empty() ? std::string(key) : path_ + "." + key);
    }

    template <typename F>
    void object(const char* key, F&& visit) {
        const auto it = j_.find(key);
        if (it == j_.end()) return;
        seen_.insert(key);
        Reader sub(*it, path_.empty() ? std::string(key) : path_ + "." + key);
        visit(sub);
        sub.finish();
    }

    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            if (!seen_.contains(k)) throw ConfigError("unknown key '" + (path_.empty() ? k : path_ + "." + k) + "'");
        }
    }

    [[nodiscard]] bool has(const char* key) const { return j_.contains(key); }

private:
    [[nodiscard]] std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

    static void read(const json& v, int& out, const std::string& key) {
        if (!v.is_number_integer()) throw ConfigError("'" + key + "' must be an integer");
        const auto x = v.get<std::int64_t>();
        if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
            throw ConfigError("'" + key + "' is out of range");
        }
        out = static_cast<int>(x);
    }
    static void read(const json& v, std::uint64_t& out, const std::string& key) {
        if (!v.is_number_unsigned()) throw ConfigError("'" + key + "' must be a non-negative integer");
        out = v.get<std::uint64_t>();
    }
    static void read(const json& v, double& out, const std::string& key) {
        if (!v.is_number()) throw ConfigError("'" + key + "' must be a number");
        out = v.get<double>();
    }
    static void read(const json& v, bool& out, const std::string& key) {
        if (!v.is_boolean()) throw ConfigError("'" + key + "' must be true or false");
        out = v.get<bool>();
    }
    static void read(const json& v, std::string& out, const std::string& key) {
        if (!v.is_string()) throw ConfigError("'" + key + "' must be a string");
        out = v.get<std::string>();
    }
    static void read(const json& v, Vec3& out, const std::string& key) {
        if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() || !v[2].is_number()) {
            throw ConfigError("'" + key + "' must be an array of 3 numbers");
        }
        out = Vec3(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

class Writer {
public:
    template <typename T>
    void field(const char* key, const T& v) {
        if constexpr (std::is_same_v<T, Vec3>) {
            j_[key] = ordered::array({v.x(), v.y(), v.z()});
        } else {
            j_[key] = v;
        }
    }

    template <typename F>
    void object(const char* key, F&& visit) {
        Writer sub;
        visit(sub);
        j_[key] = std::move(sub.j_);
    }

    ordered j_ = ordered::object();
};

template <typename V>
void visit(V& v, NoiseSchedule& s) {
    v.field("t_start", s.t_start);
    v.field("t_end", s.t_end);
    v.field("total_iterations", s.total_iterations);
}

template <typename V>
void visit(V& v, StaticLearningRates& lr) {
    v.field("position_init", lr.position_init);
    v.field("position_final", lr.position_final);
    v.field("color", lr.color);
    v.field("opacity", lr.opacity);
    v.field("scale", lr.scale);
    v.field("rotation", lr.rotation);
}

template <typename V>
void visit(V& v, ViewSampling& s) {
    v.field("azimuth_min", s.azimuth_min);
    v.field("azimuth_max", s.azimuth_max);
    v.field("elevation_min", s.elevation_min);
    v.field("elevation_max", s.elevation_max);
    v.field("radius", s.radius);
    v.field("fov_y", s.fov_y);
    v.field("render_size", s.render_size);
}

template <typename V>
void visit(V& v, SpaceTimeBox& b) {
    v.field("lo", b.lo);
    v.field("hi", b.hi);
    v.field("t_lo", b.t_lo);
    v.field("t_hi", b.t_hi);
}

template <typename V>
void visit(V& v, StaticFitConfig& c) {
    v.field("iterations", c.iterations);
    v.field("views_per_iteration", c.views_per_iteration);
    v.field("background", c.background);
    v.field("initial_gaussians", c.initial_gaussians);
    v.field("init_radius", c.init_radius);
    v.field("densify", c.densify);
    v.field("densify_interval", c.densify_interval);
    v.field("densify_grad_threshold", c.densify_grad_threshold);
    v.field("dense_percent", c.dense_percent);
    v.field("scene_extent", c.scene_extent);
    v.field("prune_opacity", c.prune_opacity);
    v.field("min_keep_fraction", c.min_keep_fraction);
    v.object("t_schedule", [&](auto& s) { visit(s, c.t_schedule); });
    v.object("lr", [&](auto& s) { visit(s, c.lr); });
    v.object("views", [&](auto& s) { visit(s, c.views); });
    v.field("ref_weight", c.ref_weight);
    v.field("guidance_weight", c.guidance_weight);
}

template <typename V>
void visit(V& v, DynamicFitConfig& c) {
    v.field("iterations", c.iterations);
    v.field("views_per_timestep", c.views_per_timestep);
    v.object("t_schedule", [&](auto& s) { visit(s, c.t_schedule); });
    v.field("freeze_static", c.freeze_static);
    v.field("grid_lr", c.grid_lr);
    v.field("mlp_lr", c.mlp_lr);
    v.object("static_lr", [&](auto& s) { visit(s, c.static_lr); });
    v.field("spatial_resolution", c.spatial_resolution);
    v.field("temporal_resolution", c.temporal_resolution);
    v.field("feature_dim", c.feature_dim);
    v.field("hidden_dim", c.hidden_dim);
    v.object("domain", [&](auto& s) { visit(s, c.domain); });
    v.field("background", c.background);
    v.object("views", [&](auto& s) { visit(s, c.views); });
    v.field("ref_weight", c.ref_weight);
    v.field("guidance_weight", c.guidance_weight);
}

template <typename V>
void visit(V& v, PipelineConfig& c) {
    v.field("seed", c.seed);
    v.field("threads", c.threads);
    v.object("reference", [&](auto& s) {
        s.field("azimuth", c.reference.azimuth);
        s.field("elevation", c.reference.elevation);
        s.field("radius", c.reference.radius);
        s.field("fov_y", c.reference.fov_y);
    });
    v.object("static", [&](auto& s) { visit(s, c.static_fit); });
    v.object("dynamic", [&](auto& s) { visit(s, c.dynamic_fit); });
    v.object("mesh", [&](auto& s) {
        s.field("frames", c.mesh.frames);
        s.field("grid_resolution", c.mesh.grid_resolution);
        s.field("bounds_lo", c.mesh.bounds_lo);
        s.field("bounds_hi", c.mesh.bounds_hi);
        s.field("iso", c.mesh.iso);
        s.field("texture_size", c.mesh.texture_size);
        s.field("gutter", c.mesh.gutter);
        s.field("view_size", c.mesh.view_size);
        s.field("max_flipped_fraction", c.mesh.max_flipped_fraction);
    });
    v.object("refine", [&](auto& s) {
        s.field("iterations", c.refine.iterations);
        s.field("noise_level", c.refine.noise_level);
        s.field("lr", c.refine.lr);
        s.field("view_size", c.refine.view_size);
    });
    v.object("paths", [&](auto& s) {
        s.field("reference_image", c.paths.reference_image);
        s.field("video", c.paths.video);
        s.field("output_dir", c.paths.output_dir);
        s.field("guidance_command", c.paths.guidance_command);
        s.field("cloud", c.paths.cloud);
        s.field("model", c.paths.model);
    });
}

}  // namespace

void PipelineConfig::validate() const {
    if (threads < 0) throw ConfigError("threads must be >= 0");
    if (!(reference.radius > 0.0)) throw ConfigError("reference.radius must be positive");
    if (!(reference.fov_y > 0.0 && reference.fov_y < 180.0)) throw ConfigError("reference.fov_y must be in (0, 180)");
    if (!(std::abs(reference.elevation) < 90.0)) throw ConfigError("reference.elevation must be in (-90, 90)");
    static_fit.validate();
    dynamic_fit.validate();
    if (mesh.frames < 1) throw ConfigError("mesh.frames must be >= 1");
    if (mesh.grid_resolution < 2) throw ConfigError("mesh.grid_resolution must be >= 2");
    if (!(mesh.bounds_lo.array() < mesh.bounds_hi.array()).all()) throw ConfigError("mesh.bounds_lo must be below mesh.bounds_hi");
    if (mesh.gutter < 0) throw ConfigError("mesh.gutter must be >= 0");
    if (mesh.texture_size < 2 * mesh.gutter + 2) throw ConfigError("mesh.texture_size is too small for the gutter");
    if (mesh.view_size < 1) throw ConfigError("mesh.view_size must be >= 1");
    if (!(mesh.max_flipped_fraction >= 0.0)) throw ConfigError("mesh.max_flipped_fraction must be >= 0");
    if (refine.iterations < 0) throw ConfigError("refine.iterations must be >= 0");
    if (!(refine.noise_level >= 0.0)) throw ConfigError("refine.noise_level must be >= 0");
    if (!(refine.lr > 0.0)) throw ConfigError("refine.lr must be positive");
    if (refine.view_size < 1) throw ConfigError("refine.view_size must be >= 1");
}

Camera PipelineConfig::reference_camera(int width, int height) const {
    Camera c;
    c.azimuth = reference.azimuth;
    c.elevation = reference.elevation;
    c.radius = reference.radius;
    c.fov_y = reference.fov_y;
    c.width = width;
    c.height = height;
    return c;
}

std::filesystem::path PipelineConfig::cloud_path() const {
    return paths.cloud.empty() ? std::filesystem::path(paths.output_dir) / "static.ply" : std::filesystem::path(paths.cloud);
}

std::filesystem::path PipelineConfig::model_path() const {
    return paths.model.empty() ? std::filesystem::path(paths.output_dir) / "deformation.ckpt" : std::filesystem::path(paths.model);
}

PipelineConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    Reader r(j, "");
    if (!r.has("seed")) throw ConfigError("config must set 'seed'");
    PipelineConfig c;
    visit(r, c);
    r.finish();
    c.static_fit.seed = c.seed;
    c.dynamic_fit.seed = c.seed;
    c.validate();
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config " + path.string());
    const std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_config(text);
}

std::string serialize_config(const PipelineConfig& config) {
    PipelineConfig copy = config;
    Writer w;
    visit(w, copy);
    return w.j_.dump(2) + "\n";
}

}  // namespace splat4d::io
