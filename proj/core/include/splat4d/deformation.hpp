#pragma once

#include "splat4d/camera.hpp"
#include "splat4d/decoder.hpp"
#include "splat4d/gaussians.hpp"
#include "splat4d/gradcheck.hpp"
#include "splat4d/hexplane.hpp"
#include "splat4d/image.hpp"
#include "splat4d/rasterizer.hpp"

#include <cstdint>
#include <vector>

namespace splat4d {

/// The deformation network φ: a HexPlane field plus its decoder.
struct DeformationModel {
    HexPlaneField field;
    DeformDecoder decoder;

    /// Field with planes drawn from U[0.9, 1.1] and a zero-initialized decoder.
    [[nodiscard]] static DeformationModel create(int spatial_res, int temporal_res, int feature_dim,
                                                 int hidden_dim, std::uint64_t seed,
                                                 const SpaceTimeBox& domain = {});

    bool operator==(const DeformationModel&) const = default;
};

/// Per-Gaussian decoder output at time τ.
[[nodiscard]] GaussianDelta compute_delta(const GaussianCloud& cloud, const HexPlaneField& field,
                                          const DeformDecoder& decoder, double tau);

/// φ(S, τ): query the field at every Gaussian, decode, and apply the delta.
[[nodiscard]] GaussianCloud deform(const GaussianCloud& cloud, const HexPlaneField& field,
                                   const DeformDecoder& decoder, double tau);
[[nodiscard]] GaussianCloud deform(const GaussianCloud& cloud, const DeformationModel& model, double tau);

struct DeformationGradients {
    std::vector<double> field;    // layout of HexPlaneField::values()
    std::vector<double> decoder;  // layout of DeformDecoder::parameters()
    std::vector<Vec3> positions;  // through the field lookup only

    DeformationGradients() = default;
    DeformationGradients(const DeformationModel& model, std::size_t gaussians);
    DeformationGradients(const HexPlaneField& field, const DeformDecoder& decoder, std::size_t gaussians);

    DeformationGradients& operator+=(const DeformationGradients& o);
    DeformationGradients& operator*=(double s);
    [[nodiscard]] bool all_zero() const;
};

/// Reverse pass of compute_delta for an upstream gradient on the delta.
/// Throws DimensionError when `upstream` does not match the cloud.
[[nodiscard]] DeformationGradients query_gradients(const HexPlaneField& field,
                                                   const DeformDecoder& decoder,
                                                   const GaussianCloud& cloud, double tau,
                                                   const GaussianDelta& upstream);

/// Adds query_gradients(...) into `out`.
void accumulate_query_gradients(const HexPlaneField& field, const DeformDecoder& decoder,
                                const GaussianCloud& cloud, double tau,
                                const GaussianDelta& upstream, DeformationGradients& out);

/// Gradient with respect to the delta given gradients on the deformed cloud
/// (the reverse of apply_delta, including quaternion renormalization).
[[nodiscard]] GaussianDelta apply_delta_backward(const GaussianCloud& cloud, const GaussianDelta& delta,
                                                 const RenderGradients& deformed);

/// Finite-difference check of the HexPlane + decoder gradients chained
/// through the rasterizer, on a small random field and decoder.
[[nodiscard]] GradCheckReport check_deformation_gradients(std::uint64_t seed, const GaussianCloud& cloud,
                                                          const Camera& camera, const Rgb& background,
                                                          const Image& upstream,
                                                          const GradCheckTolerance& tol = {});

}  // namespace splat4d
