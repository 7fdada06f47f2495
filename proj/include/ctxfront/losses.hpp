#pragma once

#include <cstdint>

#include "ctxfront/layers.hpp"

namespace ctxfront::losses {

using ad::Tensor;

// mean|est - irm| + mean((est - irm)^2), equal unit weights over all entries.
template <typename Real>
Tensor<Real> spectral_loss(const Tensor<Real> &est_mask, const Tensor<Real> &irm) {
    Tensor<Real> d = ad::sub(est_mask, irm);
    return ad::add(ad::reduce_mean(ad::abs(d)), ad::reduce_mean(ad::mul(d, d)));
}

// ASR-loss weight schedule: 0 for step < S0, linear to max_asr_weight over
// the next ramp_steps, constant after.
struct RampSchedule {
    int spectral_only_steps = 200;
    int ramp_steps = 800;
    double max_asr_weight = 1.0;
};

inline double ramp_weight(int64_t step, const RampSchedule &sched) {
    if (step < sched.spectral_only_steps) return 0.0;
    if (step < sched.spectral_only_steps + static_cast<int64_t>(sched.ramp_steps)) {
        return sched.max_asr_weight *
               static_cast<double>(step - sched.spectral_only_steps) / sched.ramp_steps;
    }
    return sched.max_asr_weight;
}

template <typename Real>
Tensor<Real> combined_loss(const Tensor<Real> &spectral, const Tensor<Real> &asr, int64_t step,
                           const RampSchedule &sched) {
    const double w = ramp_weight(step, sched);
    if (w == 0.0) return spectral;
    return ad::add(spectral, ad::scale(asr, static_cast<Real>(w)));
}

// Stand-in for the pre-trained ASR encoder: a small fixed-parameter encoder
// (input projection over stacked/subsampled features plus two conformer
// blocks) whose parameters are seeded once and never updated.
template <typename Real>
struct FrozenEncoderT {
    static constexpr int kInputDim = 512; // 4-frame stacks of 128-dim LFBE
    static constexpr int kDim = 128;
    static constexpr uint64_t kSeed = 7;

    nn::Dense<Real> input_proj;
    std::vector<nn::ConformerBlock<Real>> blocks;

    FrozenEncoderT() {
        std::mt19937_64 rng(kSeed);
        input_proj = nn::Dense<Real>(kInputDim, kDim, rng);
        for (int i = 0; i < 2; ++i) {
            blocks.emplace_back(kDim, /*mult=*/2, /*heads=*/4, /*kernel=*/15, /*window=*/65, rng);
        }
        for (auto &[name, p] : named_parameters()) p.set_requires_grad(false);
    }

    Tensor<Real> forward(const Tensor<Real> &stacked) const {
        Tensor<Real> x = input_proj(stacked);
        for (const auto &b : blocks) x = b(x);
        return x;
    }

    nn::NamedParams<Real> named_parameters() {
        nn::NamedParams<Real> out;
        input_proj.collect("input_proj", out);
        for (size_t i = 0; i < blocks.size(); ++i) {
            blocks[i].collect("block." + std::to_string(i), out);
        }
        return out;
    }

    // FNV-1a over the raw parameter bytes, used to verify the encoder is
    // untouched by training.
    uint64_t parameter_hash() {
        uint64_t h = 1469598103934665603ULL;
        for (auto &[name, p] : named_parameters()) {
            const auto *bytes = reinterpret_cast<const unsigned char *>(p.values().data());
            const size_t n = p.values().size() * sizeof(Real);
            for (size_t i = 0; i < n; ++i) {
                h ^= bytes[i];
                h *= 1099511628211ULL;
            }
        }
        return h;
    }
};

using FrozenEncoder = FrozenEncoderT<float>;

// L2 distance between frozen-encoder outputs for the enhanced and clean
// feature streams. Both streams are stacked/subsampled first. The clean
// stream and the encoder are constants, so gradients reach the mask only.
template <typename Real>
Tensor<Real> asr_loss(const Tensor<Real> &enhanced_lfbe, const Tensor<Real> &clean_lfbe,
                      const FrozenEncoderT<Real> &enc) {
    if (enhanced_lfbe.shape() != clean_lfbe.shape()) {
        throw std::runtime_error("asr_loss: enhanced/clean shape mismatch");
    }
    Tensor<Real> he = enc.forward(ad::frame_stack(enhanced_lfbe, 4, 3));
    Tensor<Real> hc = enc.forward(ad::frame_stack(clean_lfbe, 4, 3));
    Tensor<Real> d = ad::sub(he, hc);
    return ad::reduce_mean(ad::mul(d, d));
}

// Training-mode enhancement path: alpha = 1, beta = 0, so the enhanced mel is
// noisy_mel (.) mask, log-compressed with the feature-pipeline floor. Mask
// scaling stays an inference-only transform.
template <typename Real>
Tensor<Real> enhanced_lfbe_for_training(const Tensor<Real> &noisy_mel_linear,
                                        const Tensor<Real> &mask, Real log_floor = Real(1e-10)) {
    return ad::log_floor(ad::mul(noisy_mel_linear, mask), log_floor);
}

} // namespace ctxfront::losses
