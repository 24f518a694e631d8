#include "splat4d/decoder.hpp"

#include "splat4d/errors.hpp"

#include <cmath>
#include <random>

namespace splat4d {
namespace {

double silu(double x) { return x / (1.0 + std::exp(-x)); }

double silu_grad(double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

Eigen::Matrix<double, DeformDecoder::kOutputs, 1> pack(const DeformDecoder::Output& o) {
    Eigen::Matrix<double, DeformDecoder::kOutputs, 1> v;
    v << o.d_position, o.d_rotation, o.d_log_scale;
    return v;
}

}  // namespace

DeformDecoder::DeformDecoder(int input_dim, int hidden_dim, std::uint64_t seed)
    : input_dim_(input_dim), hidden_dim_(hidden_dim) {
    if (input_dim < 1 || hidden_dim < 1) throw RangeError("decoder dimensions must be >= 1");
    const auto f = static_cast<std::size_t>(input_dim);
    const auto h = static_cast<std::size_t>(hidden_dim);
    off_w1_ = 0;
    off_b1_ = off_w1_ + h * f;
    off_w2_ = off_b1_ + h;
    off_b2_ = off_w2_ + h * h;
    off_wo_ = off_b2_ + h;
    off_bo_ = off_wo_ + kOutputs * h;
    params_.assign(off_bo_ + kOutputs, 0.0);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u1(-1.0 / std::sqrt(input_dim), 1.0 / std::sqrt(input_dim));
    std::uniform_real_distribution<double> u2(-1.0 / std::sqrt(hidden_dim), 1.0 / std::sqrt(hidden_dim));
    for (std::size_t i = off_w1_; i < off_w2_; ++i) params_[i] = u1(rng);
    for (std::size_t i = off_w2_; i < off_wo_; ++i) params_[i] = u2(rng);
    // output heads stay zero
}

Eigen::Map<Eigen::VectorXd> DeformDecoder::head_bias(Head h) {
    switch (h) {
        case Head::Position: return {params_.data() + off_bo_, 3};
        case Head::Rotation: return {params_.data() + off_bo_ + 3, 4};
        case Head::LogScale: return {params_.data() + off_bo_ + 7, 3};
    }
    throw RangeError("unknown decoder head");
}

DeformDecoder::Output DeformDecoder::forward(const Eigen::VectorXd& feature, Activations* cache) const {
    if (feature.size() != input_dim_) {
        throw DimensionError("decoder expects " + std::to_string(input_dim_) + " features, got " +
                             std::to_string(feature.size()));
    }
    Eigen::VectorXd z1 = w1() * feature + b1();
    Eigen::VectorXd h1 = z1.unaryExpr(&silu);
    Eigen::VectorXd z2 = w2() * h1 + b2();
    Eigen::VectorXd h2 = h1 + z2.unaryExpr(&silu);
    const Eigen::Matrix<double, kOutputs, 1> out = w_out() * h2 + b_out();
    Output o;
    o.d_position = out.segment<3>(0);
    o.d_rotation = out.segment<4>(3);
    o.d_log_scale = out.segment<3>(7);
    if (cache != nullptr) {
        cache->z1 = std::move(z1);
        cache->h1 = std::move(h1);
        cache->z2 = std::move(z2);
        cache->h2 = std::move(h2);
    }
    return o;
}

Eigen::VectorXd DeformDecoder::backward(const Eigen::VectorXd& feature, const Activations& a,
                                        const Output& upstream, std::span<double> grad) const {
    if (grad.size() != params_.size()) throw DimensionError("decoder gradient buffer has wrong size");
    const Eigen::Matrix<double, kOutputs, 1> g_out = pack(upstream);
    double* gp = grad.data();
    MatrixMap g_w1(gp + off_w1_, hidden_dim_, input_dim_);
    VectorMap g_b1(gp + off_b1_, hidden_dim_);
    MatrixMap g_w2(gp + off_w2_, hidden_dim_, hidden_dim_);
    VectorMap g_b2(gp + off_b2_, hidden_dim_);
    MatrixMap g_wo(gp + off_wo_, kOutputs, hidden_dim_);
    VectorMap g_bo(gp + off_bo_, kOutputs);

    g_wo.noalias() += g_out * a.h2.transpose();
    g_bo += g_out;
    const Eigen::VectorXd g_h2 = w_out().transpose() * g_out;
    const Eigen::VectorXd g_z2 = g_h2.cwiseProduct(a.z2.unaryExpr(&silu_grad));
    g_w2.noalias() += g_z2 * a.h1.transpose();
    g_b2 += g_z2;
    const Eigen::VectorXd g_h1 = g_h2 + w2().transpose() * g_z2;
    const Eigen::VectorXd g_z1 = g_h1.cwiseProduct(a.z1.unaryExpr(&silu_grad));
    g_w1.noalias() += g_z1 * feature.transpose();
    g_b1 += g_z1;
    return w1().transpose() * g_z1;
}

}  // namespace splat4d
