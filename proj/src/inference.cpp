#include "ctxfront/inference.hpp"

#include <cmath>
#include <thread>

#include <json.hpp>

#include "ctxfront/bridge.hpp"
#include "ctxfront/trainer.hpp"

namespace ctxfront::infer {

using nlohmann::json;

FeatureMatrix scale_and_apply(const FeatureMatrix &noisy_mel_linear,
                              const FeatureMatrix &est_mask, const MaskPolicy &policy) {
    policy.validate();
    if (noisy_mel_linear.frames != est_mask.frames ||
        noisy_mel_linear.channels != est_mask.channels) {
        throw std::runtime_error("scale_and_apply: shape mismatch [" +
                                 std::to_string(noisy_mel_linear.frames) + "x" +
                                 std::to_string(noisy_mel_linear.channels) + "] vs [" +
                                 std::to_string(est_mask.frames) + "x" +
                                 std::to_string(est_mask.channels) + "]");
    }
    FeatureMatrix out = noisy_mel_linear;
    const float beta = static_cast<float>(policy.beta);
    for (size_t i = 0; i < out.values.size(); ++i) {
        const float m = std::max(est_mask.values[i], beta);
        out.values[i] = noisy_mel_linear.values[i] *
                        static_cast<float>(std::pow(static_cast<double>(m), policy.alpha));
    }
    return out;
}

namespace {

// Forward without touching requires_grad flags; callers flip them off for
// parallel evaluation.
FeatureMatrix forward_mask(nn::FrontendModel &model, const UtteranceExample &ex) {
    ad::Tensor<float> mask =
        model.forward(to_tensor(ex.noisy_lfbe), to_tensor(ex.reference_lfbe),
                      to_tensor(ex.context_lfbe), to_row_tensor(ex.speaker_embedding));
    return to_feature_matrix(mask, FeatureDomain::linear_mel, ex.noisy_lfbe.frame_hop_ms);
}

EnhanceResult enhance_with_mask(const UtteranceExample &ex, FeatureMatrix mask,
                                const MaskPolicy &policy) {
    const DspConfig dsp;
    EnhanceResult res;
    res.enhanced_mel = scale_and_apply(ex.noisy_mel_linear, mask, policy);
    res.enhanced_lfbe = lfbe(res.enhanced_mel, dsp.log_floor);
    res.enhanced_stacked = stack_subsample(res.enhanced_lfbe, 4, 3);
    res.mask = std::move(mask);
    return res;
}

} // namespace

EnhanceResult enhance_utterance(nn::FrontendModel &model, const UtteranceExample &ex,
                                const MaskPolicy &policy) {
    return enhance_with_mask(ex, train::predict_mask(model, ex), policy);
}

double lsd(const FeatureMatrix &a, const FeatureMatrix &b) {
    if (a.frames != b.frames || a.channels != b.channels) {
        throw std::runtime_error("lsd: shape mismatch");
    }
    double acc = 0.0;
    for (int t = 0; t < a.frames; ++t) {
        double frame = 0.0;
        for (int c = 0; c < a.channels; ++c) {
            const double d = static_cast<double>(a.at(t, c)) - b.at(t, c);
            frame += d * d;
        }
        acc += std::sqrt(frame / a.channels);
    }
    return a.frames > 0 ? acc / a.frames : 0.0;
}

EvalReport evaluate(nn::FrontendModel &model, const std::vector<UtteranceExample> &dataset,
                    const MaskPolicy &policy) {
    policy.validate();
    if (dataset.empty()) throw std::runtime_error("evaluate: dataset is empty");

    struct PerExample {
        double mae = 0.0;
        double lsd_enh = 0.0;
        double lsd_noisy = 0.0;
    };
    std::vector<PerExample> rows(dataset.size());

    auto params = model.named_parameters();
    for (auto &[name, p] : params) p.set_requires_grad(false);

    const int n_workers = train::worker_count(static_cast<int>(dataset.size()));
    std::vector<std::exception_ptr> errors(n_workers);
    auto worker_fn = [&](int w) {
        try {
            for (size_t i = w; i < dataset.size(); i += n_workers) {
                const UtteranceExample &ex = dataset[i];
                FeatureMatrix mask = forward_mask(model, ex);
                double mae = 0.0;
                for (size_t j = 0; j < mask.values.size(); ++j) {
                    mae += std::fabs(static_cast<double>(mask.values[j]) -
                                     ex.irm_target.values[j]);
                }
                rows[i].mae = mae / static_cast<double>(mask.values.size());
                EnhanceResult enh = enhance_with_mask(ex, std::move(mask), policy);
                rows[i].lsd_enh = lsd(enh.enhanced_lfbe, ex.clean_lfbe);
                rows[i].lsd_noisy = lsd(ex.noisy_lfbe, ex.clean_lfbe);
            }
        } catch (...) {
            errors[w] = std::current_exception();
        }
    };
    std::vector<std::thread> threads;
    for (int w = 1; w < n_workers; ++w) threads.emplace_back(worker_fn, w);
    worker_fn(0);
    for (auto &t : threads) t.join();
    for (auto &[name, p] : params) p.set_requires_grad(true);
    for (auto &e : errors) {
        if (e) std::rethrow_exception(e);
    }

    EvalReport report;
    auto accumulate = [](BucketMetrics &b, const PerExample &r) {
        b.count += 1;
        b.mask_mae += r.mae;
        b.lsd_enhanced += r.lsd_enh;
        b.lsd_noisy += r.lsd_noisy;
    };
    for (size_t i = 0; i < dataset.size(); ++i) {
        const UtteranceExample &ex = dataset[i];
        const std::string cond = condition_name(ex.condition);
        std::string bucket = "clean";
        if (ex.condition != Condition::clean) {
            bucket = std::to_string(static_cast<int>(std::lround(ex.snr_db))) + "dB";
        }
        accumulate(report.conditions[cond][bucket], rows[i]);
        accumulate(report.conditions[cond]["overall"], rows[i]);
        accumulate(report.overall, rows[i]);
    }
    auto finalize = [](BucketMetrics &b) {
        if (b.count > 0) {
            b.mask_mae /= b.count;
            b.lsd_enhanced /= b.count;
            b.lsd_noisy /= b.count;
            b.lsd_improvement = b.lsd_noisy - b.lsd_enhanced;
        }
    };
    for (auto &[cond, buckets] : report.conditions) {
        for (auto &[name, b] : buckets) finalize(b);
    }
    finalize(report.overall);
    return report;
}

std::string EvalReport::to_json(const MaskPolicy &policy) const {
    json j;
    j["alpha"] = policy.alpha;
    j["beta"] = policy.beta;
    auto bucket_json = [](const BucketMetrics &b) {
        return json{{"count", b.count},
                    {"mask_mae", b.mask_mae},
                    {"lsd_enhanced", b.lsd_enhanced},
                    {"lsd_noisy", b.lsd_noisy},
                    {"lsd_improvement", b.lsd_improvement}};
    };
    for (const auto &[cond, buckets] : conditions) {
        for (const auto &[name, b] : buckets) {
            j["conditions"][cond][name] = bucket_json(b);
        }
    }
    j["overall"] = bucket_json(overall);
    return j.dump(2);
}

} // namespace ctxfront::infer
