#include "ctxfront/trainer.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>
#include <random>
#include <stdexcept>
#include <thread>

#include "ctxfront/bridge.hpp"

namespace ctxfront::train {

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw std::runtime_error("train: learning_rate must be positive");
    if (batch_size < 1) throw std::runtime_error("train: batch_size must be >= 1");
    if (steps < 0) throw std::runtime_error("train: steps must be >= 0");
    if (checkpoint_every < 1) throw std::runtime_error("train: checkpoint_every must be >= 1");
    for (double w : mix_weights) {
        if (w < 0.0) throw std::runtime_error("train: mix weights must be >= 0");
    }
}

void adam_step(nn::NamedParams<float> &params, AdamState &state, double lr, double beta1,
               double beta2, double eps) {
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i].second.numel(), 0.0f);
            state.v[i].assign(params[i].second.numel(), 0.0f);
        }
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < params.size(); ++i) {
        auto &p = params[i].second;
        auto &vals = p.values();
        const auto &g = p.grad();
        auto &m = state.m[i];
        auto &v = state.v[i];
        for (size_t j = 0; j < vals.size(); ++j) {
            const double gj = g[j];
            if (!std::isfinite(gj)) {
                throw std::runtime_error("adam: non-finite gradient in " + params[i].first +
                                         " at step " + std::to_string(state.t));
            }
            m[j] = static_cast<float>(beta1 * m[j] + (1.0 - beta1) * gj);
            v[j] = static_cast<float>(beta2 * v[j] + (1.0 - beta2) * gj * gj);
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            vals[j] = static_cast<float>(vals[j] - lr * mhat / (std::sqrt(vhat) + eps));
        }
    }
}

int worker_count(int max_needed) {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    if (const char *env = std::getenv("CTXFRONT_THREADS")) {
        const int cap = std::atoi(env);
        if (cap >= 1) n = std::min(n, cap);
    }
    return std::max(1, std::min(n, max_needed));
}

namespace {

void set_params_requires_grad(nn::FrontendModel &model, bool rg) {
    for (auto &[name, p] : model.named_parameters()) p.set_requires_grad(rg);
}

void copy_param_values(nn::FrontendModel &src, nn::FrontendModel &dst) {
    auto sp = src.named_parameters();
    auto dp = dst.named_parameters();
    for (size_t i = 0; i < sp.size(); ++i) dp[i].second.values() = sp[i].second.values();
}

struct ItemResult {
    double spectral = 0.0;
    double asr = 0.0;
    double total = 0.0;
    std::vector<std::vector<float>> grads; // per parameter
};

// Forward + backward for one example on the given replica; loss is scaled by
// 1/batch so summing item gradients yields batch-mean gradients.
ItemResult run_item(nn::FrontendModel &model, const losses::FrozenEncoder &enc,
                    const UtteranceExample &ex, double asr_weight, int batch_size) {
    using T = ad::Tensor<float>;
    T noisy = to_tensor(ex.noisy_lfbe);
    T reference = to_tensor(ex.reference_lfbe);
    T ctx = to_tensor(ex.context_lfbe);
    T dvec = to_row_tensor(ex.speaker_embedding);
    T irm = to_tensor(ex.irm_target);

    T mask = model.forward(noisy, reference, ctx, dvec);
    T spectral = losses::spectral_loss(mask, irm);
    T total = spectral;
    double asr_value = 0.0;
    if (asr_weight > 0.0) {
        T enhanced = losses::enhanced_lfbe_for_training(to_tensor(ex.noisy_mel_linear), mask);
        T asr = losses::asr_loss(enhanced, to_tensor(ex.clean_lfbe), enc);
        asr_value = asr.item();
        total = ad::add(spectral, ad::scale(asr, static_cast<float>(asr_weight)));
    }

    ItemResult res;
    res.spectral = spectral.item();
    res.asr = asr_value;
    res.total = total.item();
    if (!std::isfinite(res.total)) throw std::runtime_error("train: non-finite loss");

    T scaled = ad::scale(total, 1.0f / static_cast<float>(batch_size));
    auto params = model.named_parameters();
    for (auto &[name, p] : params) p.zero_grad();
    ad::backward(scaled);
    res.grads.reserve(params.size());
    for (auto &[name, p] : params) res.grads.push_back(p.grad());
    return res;
}

} // namespace

FeatureMatrix predict_mask(nn::FrontendModel &model, const UtteranceExample &ex) {
    set_params_requires_grad(model, false);
    ad::Tensor<float> mask;
    try {
        mask = model.forward(to_tensor(ex.noisy_lfbe), to_tensor(ex.reference_lfbe),
                             to_tensor(ex.context_lfbe), to_row_tensor(ex.speaker_embedding));
    } catch (...) {
        set_params_requires_grad(model, true);
        throw;
    }
    set_params_requires_grad(model, true);
    return to_feature_matrix(mask, FeatureDomain::linear_mel, ex.noisy_lfbe.frame_hop_ms);
}

double mask_mae(nn::FrontendModel &model, const std::vector<UtteranceExample> &examples) {
    if (examples.empty()) return std::numeric_limits<double>::quiet_NaN();
    double acc = 0.0;
    size_t count = 0;
    for (const auto &ex : examples) {
        FeatureMatrix mask = predict_mask(model, ex);
        for (size_t i = 0; i < mask.values.size(); ++i) {
            acc += std::fabs(static_cast<double>(mask.values[i]) - ex.irm_target.values[i]);
        }
        count += mask.values.size();
    }
    return acc / static_cast<double>(count);
}

TrainResult run_training(nn::FrontendModel &model, const std::vector<UtteranceExample> &dataset,
                         const TrainConfig &cfg, const std::string &out_dir,
                         const std::vector<UtteranceExample> *heldout) {
    cfg.validate();
    if (dataset.empty()) throw std::runtime_error("train: dataset is empty");

    losses::FrozenEncoder enc;
    TrainResult result;
    result.frozen_encoder_hash_before = enc.parameter_hash();

    // Condition mix restricted to conditions present in the dataset.
    std::array<std::vector<int>, 4> by_condition;
    for (size_t i = 0; i < dataset.size(); ++i) {
        by_condition[static_cast<int>(dataset[i].condition)].push_back(static_cast<int>(i));
    }
    std::array<double, 4> weights = cfg.mix_weights;
    double wsum = 0.0;
    for (int c = 0; c < 4; ++c) {
        if (by_condition[c].empty()) weights[c] = 0.0;
        wsum += weights[c];
    }

    if (!out_dir.empty()) nn::save_checkpoint(out_dir + "/step_0", model, 0);

    const int n_workers = worker_count(cfg.batch_size);
    std::vector<nn::FrontendModel> replicas;
    for (int w = 1; w < n_workers; ++w) {
        replicas.emplace_back(model.cfg, /*seed=*/0);
        copy_param_values(model, replicas.back());
    }

    std::mt19937_64 rng(cfg.seed);
    auto params = model.named_parameters();
    AdamState adam;

    for (int64_t step = 0; step < cfg.steps; ++step) {
        // Sample the batch up front so the draw sequence is independent of
        // the worker layout.
        std::vector<int> batch(cfg.batch_size);
        for (int b = 0; b < cfg.batch_size; ++b) {
            if (wsum > 0.0) {
                const double r = (static_cast<double>(rng() >> 11) * 0x1.0p-53) * wsum;
                double acc = 0.0;
                int cond = -1;
                for (int c = 0; c < 4; ++c) {
                    if (weights[c] <= 0.0) continue;
                    acc += weights[c];
                    cond = c;
                    if (r < acc) break;
                }
                const auto &pool = by_condition[cond];
                batch[b] = pool[rng() % pool.size()];
            } else {
                batch[b] = static_cast<int>(rng() % dataset.size());
            }
        }

        const double w_asr = losses::ramp_weight(step, cfg.ramp);
        std::vector<ItemResult> items(cfg.batch_size);
        std::vector<std::exception_ptr> errors(n_workers);

        auto worker_fn = [&](int w) {
            nn::FrontendModel &m = w == 0 ? model : replicas[w - 1];
            try {
                for (int b = w; b < cfg.batch_size; b += n_workers) {
                    items[b] = run_item(m, enc, dataset[batch[b]], w_asr, cfg.batch_size);
                }
            } catch (...) {
                errors[w] = std::current_exception();
            }
        };
        std::vector<std::thread> threads;
        for (int w = 1; w < n_workers; ++w) threads.emplace_back(worker_fn, w);
        worker_fn(0);
        for (auto &t : threads) t.join();
        for (auto &e : errors) {
            if (e) {
                try {
                    std::rethrow_exception(e);
                } catch (const std::exception &ex) {
                    throw std::runtime_error(std::string(ex.what()) + " (step " +
                                             std::to_string(step) + ")");
                }
            }
        }

        // Reduce gradients in item order, then clip by global norm.
        StepMetrics sm;
        sm.step = step;
        sm.asr_weight = w_asr;
        for (size_t i = 0; i < params.size(); ++i) {
            auto &g = params[i].second.grad();
            std::fill(g.begin(), g.end(), 0.0f);
            for (int b = 0; b < cfg.batch_size; ++b) {
                const auto &ig = items[b].grads[i];
                for (size_t j = 0; j < g.size(); ++j) g[j] += ig[j];
            }
        }
        for (int b = 0; b < cfg.batch_size; ++b) {
            sm.spectral_loss += items[b].spectral / cfg.batch_size;
            sm.asr_loss += items[b].asr / cfg.batch_size;
            sm.total_loss += items[b].total / cfg.batch_size;
        }

        if (cfg.grad_clip_norm > 0.0) {
            double norm2 = 0.0;
            for (auto &[name, p] : params) {
                for (float g : p.grad()) norm2 += static_cast<double>(g) * g;
            }
            const double norm = std::sqrt(norm2);
            if (norm > cfg.grad_clip_norm) {
                const float s = static_cast<float>(cfg.grad_clip_norm / norm);
                for (auto &[name, p] : params) {
                    for (float &g : p.grad()) g *= s;
                }
            }
        }

        try {
            adam_step(params, adam, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);
        } catch (const std::exception &e) {
            throw std::runtime_error(std::string(e.what()) + " (train step " +
                                     std::to_string(step) + ")");
        }
        for (auto &replica : replicas) copy_param_values(model, replica);

        result.metrics.push_back(sm);
        if (!out_dir.empty() && (step + 1) % cfg.checkpoint_every == 0 && step + 1 < cfg.steps) {
            nn::save_checkpoint(out_dir + "/step_" + std::to_string(step + 1), model, step + 1);
        }
    }

    if (!out_dir.empty()) nn::save_checkpoint(out_dir + "/final", model, cfg.steps);

    result.heldout_mask_mae = heldout ? mask_mae(model, *heldout)
                                      : std::numeric_limits<double>::quiet_NaN();
    result.frozen_encoder_hash_after = enc.parameter_hash();
    if (result.frozen_encoder_hash_after != result.frozen_encoder_hash_before) {
        throw std::runtime_error("train: frozen encoder parameters changed");
    }
    return result;
}

} // namespace ctxfront::train
