#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace splat4d {

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-15;
};

/// First and second moments for one parameter group.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t step = 0;

    AdamState() = default;
    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
    [[nodiscard]] std::size_t size() const { return m.size(); }
    void resize(std::size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
        step = 0;
    }
    bool operator==(const AdamState&) const = default;
};

/// One bias-corrected Adam update, in place. Throws DimensionError when
/// params, grads and state disagree in size.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamHyper& hyper);

}  // namespace splat4d
