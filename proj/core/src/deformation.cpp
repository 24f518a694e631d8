#include "splat4d/deformation.hpp"

#include "splat4d/errors.hpp"
#include "splat4d/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

namespace splat4d {

DeformationModel DeformationModel::create(int spatial_res, int temporal_res, int feature_dim,
                                          int hidden_dim, std::uint64_t seed, const SpaceTimeBox& domain) {
    DeformationModel m;
    m.field = HexPlaneField::random(spatial_res, temporal_res, feature_dim, seed, 0.9, 1.1, domain);
    m.decoder = DeformDecoder(feature_dim, hidden_dim, seed ^ 0x5bd1e995ULL);
    return m;
}

namespace {

// Bilinear footprint of one plane lookup.
struct PlaneLookup {
    int u0 = 0, v0 = 0;
    double a = 0.0, b = 0.0;
    bool inside_u = true, inside_v = true;
};

struct FieldSample {
    std::array<PlaneLookup, kPlaneCount> lookups;
    std::array<Eigen::VectorXd, kPlaneCount> plane_features;
    Eigen::VectorXd fused;
};

double axis_value(const Vec3& p, double tau, int axis) { return axis == 3 ? tau : p[axis]; }

FieldSample sample_field(const HexPlaneField& field, const Vec3& position, double tau) {
    FieldSample s;
    const int nf = field.feature_dim();
    s.fused = Eigen::VectorXd::Ones(nf);
    for (int p = 0; p < kPlaneCount; ++p) {
        const auto plane = static_cast<Plane>(p);
        const auto [au, av] = kPlaneAxes[p];
        PlaneLookup& l = s.lookups[p];
        const double gu = field.grid_coordinate(au, axis_value(position, tau, au), &l.inside_u);
        const double gv = field.grid_coordinate(av, axis_value(position, tau, av), &l.inside_v);
        l.u0 = std::min(static_cast<int>(gu), field.axis_resolution(au) - 2);
        l.v0 = std::min(static_cast<int>(gv), field.axis_resolution(av) - 2);
        l.a = gu - l.u0;
        l.b = gv - l.v0;
        Eigen::VectorXd& fp = s.plane_features[p];
        fp.resize(nf);
        for (int f = 0; f < nf; ++f) {
            fp[f] = (1 - l.a) * (1 - l.b) * field.at(plane, l.u0, l.v0, f) +
                    l.a * (1 - l.b) * field.at(plane, l.u0 + 1, l.v0, f) +
                    (1 - l.a) * l.b * field.at(plane, l.u0, l.v0 + 1, f) +
                    l.a * l.b * field.at(plane, l.u0 + 1, l.v0 + 1, f);
        }
        s.fused.array() *= fp.array();
    }
    return s;
}

double axis_scale(const HexPlaneField& field, int axis) {
    const SpaceTimeBox& d = field.domain();
    const double extent = axis == 3 ? d.t_hi - d.t_lo : d.hi[axis] - d.lo[axis];
    return (field.axis_resolution(axis) - 1.0) / extent;
}

}  // namespace

GaussianDelta compute_delta(const GaussianCloud& cloud, const HexPlaneField& field,
                            const DeformDecoder& decoder, double tau) {
    if (decoder.input_dim() != field.feature_dim()) {
        throw DimensionError("decoder input dimension does not match field feature dimension");
    }
    GaussianDelta delta(cloud.size());
    parallel_for(cloud.size(), 256, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const FieldSample s = sample_field(field, cloud.positions[i], tau);
            const DeformDecoder::Output o = decoder.forward(s.fused);
            delta.d_position[i] = o.d_position;
            delta.d_rotation[i] = o.d_rotation;
            delta.d_log_scale[i] = o.d_log_scale;
        }
    });
    return delta;
}

GaussianCloud deform(const GaussianCloud& cloud, const HexPlaneField& field, const DeformDecoder& decoder,
                     double tau) {
    return apply_delta(cloud, compute_delta(cloud, field, decoder, tau));
}

GaussianCloud deform(const GaussianCloud& cloud, const DeformationModel& model, double tau) {
    return deform(cloud, model.field, model.decoder, tau);
}

DeformationGradients::DeformationGradients(const DeformationModel& model, std::size_t gaussians)
    : DeformationGradients(model.field, model.decoder, gaussians) {}

DeformationGradients::DeformationGradients(const HexPlaneField& f, const DeformDecoder& d, std::size_t gaussians)
    : field(f.values().size(), 0.0), decoder(d.parameter_count(), 0.0), positions(gaussians, Vec3::Zero()) {}

DeformationGradients& DeformationGradients::operator+=(const DeformationGradients& o) {
    if (o.field.size() != field.size() || o.decoder.size() != decoder.size() ||
        o.positions.size() != positions.size()) {
        throw DimensionError("DeformationGradients shape mismatch");
    }
    for (std::size_t i = 0; i < field.size(); ++i) field[i] += o.field[i];
    for (std::size_t i = 0; i < decoder.size(); ++i) decoder[i] += o.decoder[i];
    for (std::size_t i = 0; i < positions.size(); ++i) positions[i] += o.positions[i];
    return *this;
}

DeformationGradients& DeformationGradients::operator*=(double s) {
    for (double& v : field) v *= s;
    for (double& v : decoder) v *= s;
    for (Vec3& v : positions) v *= s;
    return *this;
}

bool DeformationGradients::all_zero() const {
    auto zero = [](double v) { return v == 0.0; };
    return std::all_of(field.begin(), field.end(), zero) && std::all_of(decoder.begin(), decoder.end(), zero) &&
           std::all_of(positions.begin(), positions.end(), [](const Vec3& v) { return v.isZero(0.0); });
}

void accumulate_query_gradients(const HexPlaneField& field, const DeformDecoder& decoder,
                                const GaussianCloud& cloud, double tau, const GaussianDelta& upstream,
                                DeformationGradients& out) {
    const std::size_t n = cloud.size();
    if (upstream.d_position.size() != n || upstream.d_rotation.size() != n ||
        upstream.d_log_scale.size() != n) {
        throw DimensionError("upstream delta gradient has " + std::to_string(upstream.size()) +
                             " rows, cloud has " + std::to_string(n));
    }
    if (out.field.size() != field.values().size() || out.decoder.size() != decoder.parameter_count() ||
        out.positions.size() != n) {
        throw DimensionError("gradient accumulator does not match the deformation model");
    }
    const int nf = field.feature_dim();

    // Per-Gaussian plane gradients, scattered into the field afterwards in
    // Gaussian order so the reduction is independent of the thread count.
    std::vector<FieldSample> samples(n);
    std::vector<std::array<Eigen::VectorXd, kPlaneCount>> plane_grads(n);
    constexpr std::size_t kGrain = 256;
    std::vector<std::vector<double>> decoder_partials(chunk_count(n, kGrain));

    parallel_for(n, kGrain, [&](std::size_t b, std::size_t e) {
        std::vector<double>& dec_grad = decoder_partials[b / kGrain];
        dec_grad.assign(decoder.parameter_count(), 0.0);
        for (std::size_t i = b; i < e; ++i) {
            DeformDecoder::Output g;
            g.d_position = upstream.d_position[i];
            g.d_rotation = upstream.d_rotation[i];
            g.d_log_scale = upstream.d_log_scale[i];
            if (g.d_position.isZero(0.0) && g.d_rotation.isZero(0.0) && g.d_log_scale.isZero(0.0)) {
                continue;
            }
            FieldSample& s = samples[i];
            s = sample_field(field, cloud.positions[i], tau);
            DeformDecoder::Activations act;
            (void)decoder.forward(s.fused, &act);
            const Eigen::VectorXd g_fused = decoder.backward(s.fused, act, g, dec_grad);

            // Products of all planes except p via prefix/suffix products.
            std::array<Eigen::VectorXd, kPlaneCount + 1> prefix, suffix;
            prefix[0] = Eigen::VectorXd::Ones(nf);
            suffix[kPlaneCount] = Eigen::VectorXd::Ones(nf);
            for (int p = 0; p < kPlaneCount; ++p) {
                prefix[p + 1] = prefix[p].cwiseProduct(s.plane_features[p]);
            }
            for (int p = kPlaneCount - 1; p >= 0; --p) {
                suffix[p] = suffix[p + 1].cwiseProduct(s.plane_features[p]);
            }
            Vec3 g_pos = Vec3::Zero();
            for (int p = 0; p < kPlaneCount; ++p) {
                const auto plane = static_cast<Plane>(p);
                const Eigen::VectorXd gp = g_fused.cwiseProduct(prefix[p]).cwiseProduct(suffix[p + 1]);
                plane_grads[i][p] = gp;
                const PlaneLookup& l = s.lookups[p];
                double g_a = 0.0, g_b = 0.0;
                for (int f = 0; f < nf; ++f) {
                    const double c00 = field.at(plane, l.u0, l.v0, f);
                    const double c10 = field.at(plane, l.u0 + 1, l.v0, f);
                    const double c01 = field.at(plane, l.u0, l.v0 + 1, f);
                    const double c11 = field.at(plane, l.u0 + 1, l.v0 + 1, f);
                    g_a += gp[f] * ((1 - l.b) * (c10 - c00) + l.b * (c11 - c01));
                    g_b += gp[f] * ((1 - l.a) * (c01 - c00) + l.a * (c11 - c10));
                }
                const auto [au, av] = kPlaneAxes[p];
                if (au < 3 && l.inside_u) g_pos[au] += g_a * axis_scale(field, au);
                if (av < 3 && l.inside_v) g_pos[av] += g_b * axis_scale(field, av);
            }
            out.positions[i] += g_pos;
        }
    });

    for (const std::vector<double>& part : decoder_partials) {
        for (std::size_t k = 0; k < part.size(); ++k) out.decoder[k] += part[k];
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (plane_grads[i][0].size() == 0) continue;
        for (int p = 0; p < kPlaneCount; ++p) {
            const auto plane = static_cast<Plane>(p);
            const PlaneLookup& l = samples[i].lookups[p];
            const int ru = field.plane_u_resolution(plane);
            const std::size_t base = field.plane_offset(plane);
            auto cell = [&](int iu, int iv) {
                return base + (static_cast<std::size_t>(iv) * ru + iu) * static_cast<std::size_t>(nf);
            };
            const std::array<std::pair<std::size_t, double>, 4> corners{{
                {cell(l.u0, l.v0), (1 - l.a) * (1 - l.b)},
                {cell(l.u0 + 1, l.v0), l.a * (1 - l.b)},
                {cell(l.u0, l.v0 + 1), (1 - l.a) * l.b},
                {cell(l.u0 + 1, l.v0 + 1), l.a * l.b},
            }};
            const Eigen::VectorXd& gp = plane_grads[i][p];
            for (const auto& [offset, w] : corners) {
                if (w == 0.0) continue;
                for (int f = 0; f < nf; ++f) out.field[offset + f] += w * gp[f];
            }
        }
    }
}

DeformationGradients query_gradients(const HexPlaneField& field, const DeformDecoder& decoder,
                                     const GaussianCloud& cloud, double tau, const GaussianDelta& upstream) {
    DeformationGradients g(field, decoder, cloud.size());
    accumulate_query_gradients(field, decoder, cloud, tau, upstream, g);
    return g;
}

GaussianDelta apply_delta_backward(const GaussianCloud& cloud, const GaussianDelta& delta,
                                   const RenderGradients& deformed) {
    const std::size_t n = cloud.size();
    if (delta.size() != n || deformed.size() != n) {
        throw DimensionError("apply_delta_backward: cloud, delta and gradients must have equal size");
    }
    GaussianDelta g(n);
    for (std::size_t i = 0; i < n; ++i) {
        g.d_position[i] = deformed.positions[i];
        g.d_log_scale[i] = deformed.log_scales[i];
        if ((delta.d_rotation[i].array() == 0.0).all()) {
            g.d_rotation[i] = deformed.rotations[i];
        } else {
            g.d_rotation[i] = normalize_backward(cloud.rotations[i] + delta.d_rotation[i], deformed.rotations[i]);
        }
    }
    return g;
}

namespace {

// Distance (world units) from `value` to the nearest lattice line on `axis`.
double lattice_clearance(const HexPlaneField& field, int axis, double value) {
    const double g = field.grid_coordinate(axis, value);
    return std::abs(g - std::round(g)) / axis_scale(field, axis);
}

}  // namespace

GradCheckReport check_deformation_gradients(std::uint64_t seed, const GaussianCloud& cloud_in,
                                            const Camera& camera, const Rgb& background,
                                            const Image& upstream, const GradCheckTolerance& tol) {
    constexpr int kRes = 6, kFeatures = 4, kHidden = 8;
    GaussianCloud cloud = cloud_in;
    std::mt19937_64 tau_rng(seed + 3);
    const double tau = std::uniform_real_distribution<double>(0.0, 1.0)(tau_rng);

    // Bilinear interpolation has kinks on lattice lines and the depth sort
    // jumps when two Gaussians swap; shift the domain and redraw the decoder
    // until every probe is at least ten steps away from both.
    const double margin = 10.0 * tol.step;
    HexPlaneField field;
    DeformDecoder decoder;
    for (std::uint64_t attempt = 0;; ++attempt) {
        SpaceTimeBox box;
        box.lo = Vec3::Constant(-1.0 - 0.0137 * static_cast<double>(attempt));
        box.hi = Vec3::Constant(1.0 - 0.0137 * static_cast<double>(attempt));
        field = HexPlaneField::random(kRes, kRes, kFeatures, seed + attempt * 131, 0.6, 1.4, box);
        decoder = DeformDecoder(kFeatures, kHidden, seed + 1 + attempt * 131);
        std::mt19937_64 rng(seed + 2 + attempt * 131);
        std::uniform_real_distribution<double> u(-0.08, 0.08);
        // Non-zero heads so every parameter influences the output.
        for (double& w : decoder.w_out().reshaped()) w = u(rng);
        for (double& b : decoder.b_out()) b = u(rng);

        bool clear = min_depth_gap(deform(cloud, field, decoder, tau), camera) >= margin;
        for (std::size_t i = 0; clear && i < cloud.size(); ++i) {
            for (int a = 0; a < 3; ++a) clear = clear && lattice_clearance(field, a, cloud.positions[i][a]) >= margin;
        }
        if (clear || attempt == 64) break;
    }

    auto loss = [&] {
        const RenderOutput r = render(deform(cloud, field, decoder, tau), camera, background);
        double s = 0.0;
        for (std::size_t i = 0; i < r.rgb.data.size(); ++i) s += r.rgb.data[i] * upstream.data[i];
        return s;
    };

    const GaussianDelta delta = compute_delta(cloud, field, decoder, tau);
    const GaussianCloud deformed = apply_delta(cloud, delta);
    const RenderGradients rg = render_backward(deformed, camera, background, upstream);
    const GaussianDelta g_delta = apply_delta_backward(cloud, delta, rg);
    DeformationGradients g = query_gradients(field, decoder, cloud, tau, g_delta);
    // Static positions feed both the field lookup and the deformed position.
    for (std::size_t i = 0; i < cloud.size(); ++i) g.positions[i] += rg.positions[i];

    GradCheckReport report;
    check_by_central_differences("hexplane", field.values(), g.field, loss, tol, report);
    check_by_central_differences("decoder", decoder.parameters(), g.decoder, loss, tol, report);
    check_by_central_differences("static_position", flat(cloud.positions), flat(g.positions), loss, tol, report);
    return report;
}

}  // namespace splat4d
