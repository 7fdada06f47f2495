#pragma once

#include "ctxfront/dsp.hpp"
#include "ctxfront/tensor.hpp"

namespace ctxfront {

// Feature-space <-> tensor adapters. Tensors made here are constants
// (requires_grad = false) unless stated otherwise.

template <typename Real = float>
ad::Tensor<Real> to_tensor(const FeatureMatrix &m) {
    std::vector<Real> v(m.values.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<Real>(m.values[i]);
    return ad::Tensor<Real>::from_values({m.frames, m.channels}, std::move(v));
}

template <typename Real = float>
ad::Tensor<Real> to_row_tensor(const std::vector<float> &v) {
    std::vector<Real> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = static_cast<Real>(v[i]);
    return ad::Tensor<Real>::from_values({1, static_cast<int>(v.size())}, std::move(out));
}

inline FeatureMatrix to_feature_matrix(const ad::Tensor<float> &t, FeatureDomain domain,
                                       float frame_hop_ms) {
    FeatureMatrix m;
    m.frames = t.rows();
    m.channels = t.cols();
    m.domain = domain;
    m.frame_hop_ms = frame_hop_ms;
    m.values = t.values();
    return m;
}

} // namespace ctxfront
