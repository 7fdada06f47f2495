#pragma once

#include <map>
#include <string>
#include <vector>

#include "ctxfront/datagen.hpp"
#include "ctxfront/model.hpp"

namespace ctxfront::infer {

struct MaskPolicy {
    double alpha = 0.5;
    double beta = 0.01;

    void validate() const {
        if (alpha <= 0.0) throw std::runtime_error("mask policy: alpha must be > 0");
        if (beta < 0.0 || beta > 1.0) throw std::runtime_error("mask policy: beta must be in [0, 1]");
    }
};

// out[t,c] = noisy[t,c] * max(mask[t,c], beta)^alpha. Applied in the linear
// mel domain, before log compression.
FeatureMatrix scale_and_apply(const FeatureMatrix &noisy_mel_linear,
                              const FeatureMatrix &est_mask, const MaskPolicy &policy);

struct EnhanceResult {
    FeatureMatrix mask;          // [T x 128]
    FeatureMatrix enhanced_mel;  // [T x 128] linear
    FeatureMatrix enhanced_lfbe; // [T x 128]
    FeatureMatrix enhanced_stacked; // [T' x 512], stacked/subsampled LFBE
};

EnhanceResult enhance_utterance(nn::FrontendModel &model, const UtteranceExample &ex,
                                const MaskPolicy &policy);

// Log-spectral distance: mean over frames of sqrt(mean over channels of
// (a-b)^2).
double lsd(const FeatureMatrix &a, const FeatureMatrix &b);

struct BucketMetrics {
    int count = 0;
    double mask_mae = 0.0;
    double lsd_enhanced = 0.0; // LSD(enhanced, clean)
    double lsd_noisy = 0.0;    // LSD(noisy, clean)
    double lsd_improvement = 0.0; // lsd_noisy - lsd_enhanced
};

// Buckets keyed by condition name, then by SNR (nearest dB, "clean" has a
// single bucket). "overall" aggregates each condition.
struct EvalReport {
    std::map<std::string, std::map<std::string, BucketMetrics>> conditions;
    BucketMetrics overall;

    std::string to_json(const MaskPolicy &policy) const;
};

EvalReport evaluate(nn::FrontendModel &model, const std::vector<UtteranceExample> &dataset,
                    const MaskPolicy &policy);

} // namespace ctxfront::infer
