#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ctxfront/datagen.hpp"
#include "ctxfront/losses.hpp"
#include "ctxfront/model.hpp"

namespace ctxfront::train {

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int batch_size = 4;
    int64_t steps = 1000;
    losses::RampSchedule ramp;
    std::array<double, 4> mix_weights = {0.25, 0.25, 0.25, 0.25}; // echo/noise/multispeaker/clean
    uint64_t seed = 7;
    int64_t checkpoint_every = 500;
    double grad_clip_norm = 5.0;

    void validate() const;
};

// First/second moments per parameter plus the step count.
struct AdamState {
    std::vector<std::vector<float>> m, v;
    int64_t t = 0;
};

// Standard Adam update with bias correction. Throws on NaN gradients,
// reporting the step number.
void adam_step(nn::NamedParams<float> &params, AdamState &state, double lr, double beta1,
               double beta2, double eps);

struct StepMetrics {
    int64_t step = 0;
    double spectral_loss = 0.0;
    double asr_loss = 0.0; // 0 while the ramp weight is 0 (not computed)
    double asr_weight = 0.0;
    double total_loss = 0.0;
};

struct TrainResult {
    std::vector<StepMetrics> metrics;
    double heldout_mask_mae = 0.0; // NaN when no held-out set was given
    uint64_t frozen_encoder_hash_before = 0;
    uint64_t frozen_encoder_hash_after = 0;
};

// Per-step: sample a batch by condition mix, forward, combined loss,
// backward, Adam. Batch items are processed as independent graphs whose
// losses are averaged; gradients are reduced in item order, so the result is
// bit-identical for any worker count. Checkpoints go under out_dir
// ("step_<n>" plus "final") when out_dir is nonempty.
TrainResult run_training(nn::FrontendModel &model, const std::vector<UtteranceExample> &dataset,
                         const TrainConfig &cfg, const std::string &out_dir = "",
                         const std::vector<UtteranceExample> *heldout = nullptr);

// Worker cap: min(CTXFRONT_THREADS if set, hardware concurrency), at least 1.
int worker_count(int max_needed);

// Forward pass without graph construction; mask as a FeatureMatrix.
FeatureMatrix predict_mask(nn::FrontendModel &model, const UtteranceExample &ex);

double mask_mae(nn::FrontendModel &model, const std::vector<UtteranceExample> &examples);

} // namespace ctxfront::train
