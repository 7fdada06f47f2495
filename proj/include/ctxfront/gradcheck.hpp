#pragma once

#include <functional>
#include <vector>

#include "ctxfront/tensor.hpp"

namespace ctxfront::ad {

// Central-difference check of analytic gradients, run in 64-bit mode.
// `forward` recomputes the scalar loss from scratch using the current values
// of `leaves`; leaves must be the requires_grad inputs/parameters of that
// computation. Returns max |g_analytic - g_numeric| / max(|ga| + |gn|, 1e-8).
inline double grad_check(const std::function<Tensor<double>()> &forward,
                         const std::vector<Tensor<double>> &leaves, double eps = 1e-5) {
    for (const auto &leaf : leaves) leaf.node()->grad.clear();
    Tensor<double> loss = forward();
    backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(leaves.size());
    for (const auto &leaf : leaves) {
        leaf.node()->ensure_grad();
        analytic.push_back(leaf.node()->grad);
    }

    double max_rel = 0.0;
    for (size_t li = 0; li < leaves.size(); ++li) {
        auto &vals = leaves[li].node()->value;
        for (size_t i = 0; i < vals.size(); ++i) {
            const double saved = vals[i];
            vals[i] = saved + eps;
            const double up = forward().item();
            vals[i] = saved - eps;
            const double down = forward().item();
            vals[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double ga = analytic[li][i];
            const double rel =
                std::fabs(ga - numeric) / std::max(std::fabs(ga) + std::fabs(numeric), 1e-8);
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

} // namespace ctxfront::ad
