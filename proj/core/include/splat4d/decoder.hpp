#pragma once

#include "splat4d/gaussians.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace splat4d {

/// Residual MLP decoding a fused HexPlane feature into per-Gaussian deltas.
///
///   h1  = silu(W1 f + b1)
///   h2  = h1 + silu(W2 h1 + b2)
///   out = Wo h2 + bo      rows 0..2 d_position, 3..6 d_rotation, 7..9 d_log_scale
///
/// Hidden layers get the usual uniform ±1/sqrt(fan_in) init; the output
/// heads start at exactly zero so a fresh decoder predicts no deformation.
/// The skip connection keeps h2 nonzero, so head weights still receive
/// gradient on the first step.
class DeformDecoder {
public:
    static constexpr int kOutputs = 10;

    enum class Head { Position, Rotation, LogScale };

    struct Output {
        Vec3 d_position = Vec3::Zero();
        Vec4 d_rotation = Vec4::Zero();
        Vec3 d_log_scale = Vec3::Zero();
    };

    struct Activations {
        Eigen::VectorXd z1, h1, z2, h2;
    };

    DeformDecoder() = default;
    DeformDecoder(int input_dim, int hidden_dim, std::uint64_t seed);

    [[nodiscard]] int input_dim() const { return input_dim_; }
    [[nodiscard]] int hidden_dim() const { return hidden_dim_; }
    [[nodiscard]] std::size_t parameter_count() const { return params_.size(); }

    [[nodiscard]] std::span<double> parameters() { return params_; }
    [[nodiscard]] std::span<const double> parameters() const { return params_; }

    using MatrixMap = Eigen::Map<Eigen::MatrixXd>;
    using ConstMatrixMap = Eigen::Map<const Eigen::MatrixXd>;
    using VectorMap = Eigen::Map<Eigen::VectorXd>;
    using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

    [[nodiscard]] MatrixMap w1() { return {params_.data() + off_w1_, hidden_dim_, input_dim_}; }
    [[nodiscard]] VectorMap b1() { return {params_.data() + off_b1_, hidden_dim_}; }
    [[nodiscard]] MatrixMap w2() { return {params_.data() + off_w2_, hidden_dim_, hidden_dim_}; }
    [[nodiscard]] VectorMap b2() { return {params_.data() + off_b2_, hidden_dim_}; }
    [[nodiscard]] MatrixMap w_out() { return {params_.data() + off_wo_, kOutputs, hidden_dim_}; }
    [[nodiscard]] VectorMap b_out() { return {params_.data() + off_bo_, kOutputs}; }
    [[nodiscard]] ConstMatrixMap w1() const { return {params_.data() + off_w1_, hidden_dim_, input_dim_}; }
    [[nodiscard]] ConstVectorMap b1() const { return {params_.data() + off_b1_, hidden_dim_}; }
    [[nodiscard]] ConstMatrixMap w2() const { return {params_.data() + off_w2_, hidden_dim_, hidden_dim_}; }
    [[nodiscard]] ConstVectorMap b2() const { return {params_.data() + off_b2_, hidden_dim_}; }
    [[nodiscard]] ConstMatrixMap w_out() const { return {params_.data() + off_wo_, kOutputs, hidden_dim_}; }
    [[nodiscard]] ConstVectorMap b_out() const { return {params_.data() + off_bo_, kOutputs}; }

    /// Bias of one output head (3 or 4 entries).
    [[nodiscard]] Eigen::Map<Eigen::VectorXd> head_bias(Head h);

    [[nodiscard]] Output forward(const Eigen::VectorXd& feature, Activations* cache = nullptr) const;

    /// Accumulates dL/dparams into `grad` (parameter layout) and returns dL/dfeature.
    Eigen::VectorXd backward(const Eigen::VectorXd& feature, const Activations& cache,
                             const Output& upstream, std::span<double> grad) const;

    bool operator==(const DeformDecoder&) const = default;

private:
    int input_dim_ = 0;
    int hidden_dim_ = 0;
    std::vector<double> params_;
    std::size_t off_w1_ = 0, off_b1_ = 0, off_w2_ = 0, off_b2_ = 0, off_wo_ = 0, off_bo_ = 0;
};

}  // namespace splat4d
