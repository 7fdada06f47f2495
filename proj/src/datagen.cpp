#include "ctxfront/datagen.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace ctxfront {

using nlohmann::json;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr float kIrmSilenceEps = 1e-12f;

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

uint64_t mix_seed(uint64_t seed, uint64_t stream) {
    return splitmix64(seed ^ splitmix64(stream + 0x51ed2701));
}

double uniform01(std::mt19937_64 &rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double gaussian(std::mt19937_64 &rng) {
    // Box-Muller; self-contained so results do not depend on the standard
    // library's distribution implementation.
    double u1 = uniform01(rng);
    if (u1 < 1e-300) u1 = 1e-300;
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

void peak_normalize(std::vector<float> &x, float peak) {
    float mx = 0.0f;
    for (float v : x) mx = std::max(mx, std::fabs(v));
    if (mx > 0.0f) {
        const float s = peak / mx;
        for (float &v : x) v *= s;
    }
}

double mean_square(const std::vector<float> &x) {
    double acc = 0.0;
    for (float v : x) acc += static_cast<double>(v) * v;
    return x.empty() ? 0.0 : acc / static_cast<double>(x.size());
}

// 60 dB decay RIR: unit direct path plus white-noise tail with envelope
// 10^(-3 n / N60), tail energy fixed at -6 dB relative to the direct path.
std::vector<float> make_rir(double decay_ms, uint64_t seed, int sample_rate_hz) {
    const int n60 = static_cast<int>(std::lround(decay_ms * 1e-3 * sample_rate_hz));
    std::vector<float> h(static_cast<size_t>(std::max(n60, 0)) + 1, 0.0f);
    h[0] = 1.0f;
    if (n60 < 1) return h;
    std::mt19937_64 rng(mix_seed(seed, 0xA1));
    double tail_energy = 0.0;
    for (int n = 1; n <= n60; ++n) {
        const double env = std::pow(10.0, -3.0 * n / n60);
        h[n] = static_cast<float>(gaussian(rng) * env);
        tail_energy += static_cast<double>(h[n]) * h[n];
    }
    if (tail_energy > 0.0) {
        const float s = static_cast<float>(std::sqrt(0.25 / tail_energy));
        for (int n = 1; n <= n60; ++n) h[n] *= s;
    }
    return h;
}

// Truncated convolution: output length equals input length.
AudioBuffer convolve_same(const AudioBuffer &x, const std::vector<float> &h) {
    AudioBuffer out;
    out.sample_rate_hz = x.sample_rate_hz;
    out.samples.assign(x.samples.size(), 0.0f);
    for (size_t n = 0; n < x.samples.size(); ++n) {
        double acc = 0.0;
        const size_t kmax = std::min(h.size() - 1, n);
        for (size_t k = 0; k <= kmax; ++k) {
            acc += static_cast<double>(h[k]) * x.samples[n - k];
        }
        out.samples[n] = static_cast<float>(acc);
    }
    return out;
}

std::string tensor_file(const std::string &id, const char *tag) {
    return id + "." + tag + ".f32";
}

void write_f32_matrix(const std::string &path, const FeatureMatrix &m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(reinterpret_cast<const char *>(m.values.data()),
              static_cast<std::streamsize>(m.values.size() * sizeof(float)));
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<float> read_f32_file(const std::string &path, size_t expected) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("missing tensor file: " + path);
    const size_t bytes = static_cast<size_t>(in.tellg());
    if (bytes != expected * sizeof(float)) {
        throw std::runtime_error("tensor file " + path + " has " + std::to_string(bytes) +
                                 " bytes, manifest expects " +
                                 std::to_string(expected * sizeof(float)));
    }
    in.seekg(0);
    std::vector<float> v(expected);
    in.read(reinterpret_cast<char *>(v.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw std::runtime_error("read failed: " + path);
    return v;
}

} // namespace

const char *condition_name(Condition c) {
    switch (c) {
        case Condition::echo: return "echo";
        case Condition::noise: return "noise";
        case Condition::multispeaker: return "multispeaker";
        case Condition::clean: return "clean";
    }
    throw std::runtime_error("bad condition value");
}

Condition condition_from_name(const std::string &name) {
    if (name == "echo") return Condition::echo;
    if (name == "noise") return Condition::noise;
    if (name == "multispeaker") return Condition::multispeaker;
    if (name == "clean") return Condition::clean;
    throw std::runtime_error("unknown condition: '" + name + "'");
}

void SceneConfig::validate() const {
    if (reverb_decay_ms < 0.0 || reverb_decay_ms > 900.0) {
        throw std::runtime_error("scene: reverb_decay_ms must be in [0, 900]");
    }
    if (clip_level <= 0.0 || clip_level > 1.0) {
        throw std::runtime_error("scene: clip_level must be in (0, 1]");
    }
    if (utterance_duration_s <= 0.0) {
        throw std::runtime_error("scene: utterance_duration_s must be positive");
    }
    if (echo_delay_ms < 0.0) throw std::runtime_error("scene: echo_delay_ms must be >= 0");
    if (n_speakers < 2) throw std::runtime_error("scene: need at least 2 speakers");
    double wsum = 0.0;
    for (double w : mix_weights) {
        if (w < 0.0) throw std::runtime_error("scene: mix weights must be >= 0");
        wsum += w;
    }
    if (wsum <= 0.0) throw std::runtime_error("scene: mix weights sum to zero");
}

double speaker_f0_hz(int speaker_id) {
    const uint64_t h = splitmix64(static_cast<uint64_t>(speaker_id) * 2654435761ULL + 17);
    return 80.0 + 170.0 * (static_cast<double>(h >> 11) * 0x1.0p-53);
}

AudioBuffer synth_speech_like(uint64_t seed, double duration_s, int speaker_id,
                              int sample_rate_hz) {
    if (duration_s <= 0.0) throw std::runtime_error("synth_speech_like: duration must be positive");
    const size_t n = static_cast<size_t>(std::lround(duration_s * sample_rate_hz));
    std::mt19937_64 rng(mix_seed(seed, 0x5EEC));
    const double f0 = speaker_f0_hz(speaker_id);
    const int n_harm = std::min(12, static_cast<int>(7000.0 / f0));
    std::vector<double> phase(n_harm);
    for (auto &p : phase) p = 2.0 * kPi * uniform01(rng);
    const double syllabic_hz = 2.0 + 4.0 * uniform01(rng);
    const double syl_phase = 2.0 * kPi * uniform01(rng);

    std::vector<float> x(n, 0.0f);
    for (size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sample_rate_hz;
        double v = 0.0;
        for (int h = 1; h <= n_harm; ++h) {
            v += std::sin(2.0 * kPi * f0 * h * t + phase[h - 1]) / h;
        }
        // Syllabic envelope floored at 0.2 so voiced frames never vanish.
        const double u = 0.5 * (1.0 + std::sin(2.0 * kPi * syllabic_hz * t + syl_phase));
        x[i] = static_cast<float>(v * (0.2 + 0.8 * u * u));
    }

    // Brief unvoiced bursts, ~2 per second.
    const int n_bursts = std::max(1, static_cast<int>(duration_s * 2.0));
    const size_t burst_len = static_cast<size_t>(0.04 * sample_rate_hz);
    for (int b = 0; b < n_bursts; ++b) {
        if (n <= burst_len) break;
        const size_t start = static_cast<size_t>(uniform01(rng) * (n - burst_len));
        for (size_t i = 0; i < burst_len; ++i) {
            x[start + i] += static_cast<float>(0.25 * gaussian(rng));
        }
    }
    peak_normalize(x, 0.5f);

    AudioBuffer out;
    out.sample_rate_hz = sample_rate_hz;
    out.samples = std::move(x);
    return out;
}

AudioBuffer synth_colored_noise(uint64_t seed, double duration_s, int sample_rate_hz) {
    if (duration_s <= 0.0) throw std::runtime_error("synth_colored_noise: duration must be positive");
    const size_t n = static_cast<size_t>(std::lround(duration_s * sample_rate_hz));
    std::mt19937_64 rng(mix_seed(seed, 0xC0));
    const double a = 0.6 + 0.35 * uniform01(rng); // one-pole lowpass coefficient
    std::vector<float> x(n);
    double y = 0.0;
    for (size_t i = 0; i < n; ++i) {
        y = a * y + (1.0 - a) * gaussian(rng);
        x[i] = static_cast<float>(y);
    }
    peak_normalize(x, 0.5f);
    AudioBuffer out;
    out.sample_rate_hz = sample_rate_hz;
    out.samples = std::move(x);
    return out;
}

MixResult mix_at_snr(const AudioBuffer &target, const AudioBuffer &interferer, double snr_db) {
    if (target.samples.size() != interferer.samples.size() ||
        target.sample_rate_hz != interferer.sample_rate_hz) {
        throw std::runtime_error("mix_at_snr: length/rate mismatch");
    }
    const double p_target = mean_square(target.samples);
    const double p_intf = mean_square(interferer.samples);
    if (p_target <= 0.0) throw std::runtime_error("mix_at_snr: target has zero power");
    if (p_intf <= 0.0) throw std::runtime_error("cannot set SNR against silence");

    const double gain = std::sqrt(p_target / p_intf) * std::pow(10.0, -snr_db / 20.0);
    MixResult out;
    out.gain = gain;
    out.scaled_interferer.sample_rate_hz = target.sample_rate_hz;
    out.mixture.sample_rate_hz = target.sample_rate_hz;
    out.scaled_interferer.samples.resize(target.samples.size());
    out.mixture.samples.resize(target.samples.size());
    for (size_t i = 0; i < target.samples.size(); ++i) {
        const float s = static_cast<float>(gain * interferer.samples[i]);
        out.scaled_interferer.samples[i] = s;
        out.mixture.samples[i] = target.samples[i] + s;
    }
    return out;
}

AudioBuffer apply_reverb(const AudioBuffer &audio, double reverb_decay_ms, uint64_t seed) {
    if (reverb_decay_ms <= 0.0) return audio;
    return convolve_same(audio, make_rir(reverb_decay_ms, seed, audio.sample_rate_hz));
}

AudioBuffer simulate_echo_path(const AudioBuffer &reference, const SceneConfig &cfg) {
    if (reference.samples.empty()) throw std::runtime_error("simulate_echo_path: empty reference");
    const int delay = static_cast<int>(std::lround(cfg.echo_delay_ms * 1e-3 *
                                                   reference.sample_rate_hz));
    AudioBuffer clipped;
    clipped.sample_rate_hz = reference.sample_rate_hz;
    clipped.samples.assign(reference.samples.size(), 0.0f);
    const float level = static_cast<float>(cfg.clip_level);
    for (size_t i = 0; i < reference.samples.size(); ++i) {
        const long src = static_cast<long>(i) - delay;
        if (src < 0) continue;
        float v = static_cast<float>(cfg.echo_gain) * reference.samples[src];
        clipped.samples[i] = std::max(-level, std::min(level, v));
    }
    return apply_reverb(clipped, cfg.reverb_decay_ms, mix_seed(cfg.seed, 0xEC));
}

FeatureMatrix compute_irm(const FeatureMatrix &speech_mel, const FeatureMatrix &noise_mel) {
    if (speech_mel.frames != noise_mel.frames || speech_mel.channels != noise_mel.channels) {
        throw std::runtime_error("compute_irm: shape mismatch [" +
                                 std::to_string(speech_mel.frames) + "x" +
                                 std::to_string(speech_mel.channels) + "] vs [" +
                                 std::to_string(noise_mel.frames) + "x" +
                                 std::to_string(noise_mel.channels) + "]");
    }
    FeatureMatrix irm;
    irm.frames = speech_mel.frames;
    irm.channels = speech_mel.channels;
    irm.frame_hop_ms = speech_mel.frame_hop_ms;
    irm.domain = FeatureDomain::linear_mel;
    irm.values.resize(speech_mel.values.size());
    for (size_t i = 0; i < irm.values.size(); ++i) {
        const float x = speech_mel.values[i];
        const float denom = x + noise_mel.values[i];
        irm.values[i] = denom < kIrmSilenceEps ? 0.0f : x / denom;
    }
    return irm;
}

std::vector<float> synth_dvector(int speaker_id) {
    if (speaker_id < 0) throw std::runtime_error("synth_dvector: speaker_id must be >= 0");
    std::mt19937_64 rng(mix_seed(static_cast<uint64_t>(speaker_id), 0xD7EC));
    std::vector<float> v(kDvecDim);
    double norm2 = 0.0;
    for (auto &x : v) {
        x = static_cast<float>(gaussian(rng));
        norm2 += static_cast<double>(x) * x;
    }
    const float s = static_cast<float>(1.0 / std::sqrt(norm2));
    for (auto &x : v) x *= s;
    return v;
}

std::vector<float> zero_dvector() { return std::vector<float>(kDvecDim, 0.0f); }

UtteranceExample make_example(const SceneConfig &cfg, Condition condition, uint64_t seed,
                              ExampleDebug *debug) {
    cfg.validate();
    const DspConfig dsp;
    const int sr = dsp.sample_rate_hz;
    const size_t n_ctx = static_cast<size_t>(std::lround(kNoiseContextSeconds * sr));
    const size_t n_seg = static_cast<size_t>(std::lround(cfg.utterance_duration_s * sr));

    // `seed` fixes the target utterance (content and speaker); cfg.seed fixes
    // the scene realization (RIR, interferer draw), so copies of one
    // utterance under different scenes share content.
    const int speaker = static_cast<int>(mix_seed(seed, 0x01) % cfg.n_speakers);
    int other = static_cast<int>(mix_seed(cfg.seed, 0x02) % (cfg.n_speakers - 1));
    if (other >= speaker) ++other;

    AudioBuffer target_dry = synth_speech_like(mix_seed(seed, 0x10), cfg.utterance_duration_s,
                                               speaker, sr);
    AudioBuffer target_rev =
        apply_reverb(target_dry, cfg.reverb_decay_ms, mix_seed(cfg.seed, 0x11));

    const double full_s = kNoiseContextSeconds + cfg.utterance_duration_s;
    AudioBuffer interferer_full;
    AudioBuffer reference_full; // echo condition only
    switch (condition) {
        case Condition::noise:
            interferer_full = synth_colored_noise(mix_seed(cfg.seed, 0x20), full_s, sr);
            break;
        case Condition::multispeaker:
            interferer_full = synth_speech_like(mix_seed(cfg.seed, 0x21), full_s, other, sr);
            break;
        case Condition::echo: {
            reference_full = synth_speech_like(mix_seed(cfg.seed, 0x22), full_s, other, sr);
            SceneConfig echo_cfg = cfg;
            echo_cfg.seed = mix_seed(cfg.seed, 0x23);
            interferer_full = simulate_echo_path(reference_full, echo_cfg);
            break;
        }
        case Condition::clean:
            interferer_full.sample_rate_hz = sr;
            interferer_full.samples.assign(n_ctx + n_seg, 0.0f);
            break;
    }

    auto segment = [&](const AudioBuffer &a, size_t start, size_t len) {
        AudioBuffer out;
        out.sample_rate_hz = a.sample_rate_hz;
        out.samples.assign(a.samples.begin() + start, a.samples.begin() + start + len);
        return out;
    };

    AudioBuffer ctx_raw = segment(interferer_full, 0, n_ctx);
    AudioBuffer seg_raw = segment(interferer_full, n_ctx, n_seg);

    AudioBuffer seg_scaled, ctx_scaled, mixture;
    double gain = 0.0;
    if (condition == Condition::clean) {
        seg_scaled = seg_raw; // zeros
        ctx_scaled = ctx_raw;
        mixture = target_rev;
    } else {
        MixResult mix = mix_at_snr(target_rev, seg_raw, cfg.snr_db);
        gain = mix.gain;
        seg_scaled = std::move(mix.scaled_interferer);
        mixture = std::move(mix.mixture);
        ctx_scaled = ctx_raw;
        for (auto &s : ctx_scaled.samples) s = static_cast<float>(gain * s);
    }

    FeatureMatrix speech_mel = compute_mel(target_rev, dsp);
    FeatureMatrix noise_mel = compute_mel(seg_scaled, dsp);

    UtteranceExample ex;
    ex.condition = condition;
    ex.snr_db = static_cast<float>(cfg.snr_db);
    ex.speaker_id = speaker;
    ex.speaker_embedding = synth_dvector(speaker);

    ex.noisy_mel_linear = speech_mel;
    for (size_t i = 0; i < ex.noisy_mel_linear.values.size(); ++i) {
        ex.noisy_mel_linear.values[i] += noise_mel.values[i];
    }
    ex.noisy_lfbe = lfbe(ex.noisy_mel_linear, dsp.log_floor);
    ex.clean_lfbe = lfbe(speech_mel, dsp.log_floor);
    ex.context_lfbe = compute_lfbe(ctx_scaled, dsp);

    if (condition == Condition::clean) {
        ex.irm_target = ex.noisy_mel_linear;
        std::fill(ex.irm_target.values.begin(), ex.irm_target.values.end(), 1.0f);
    } else {
        ex.irm_target = compute_irm(speech_mel, noise_mel);
    }

    if (condition == Condition::echo) {
        ex.reference_lfbe = compute_lfbe(segment(reference_full, n_ctx, n_seg), dsp);
    } else {
        AudioBuffer silence;
        silence.sample_rate_hz = sr;
        silence.samples.assign(n_seg, 0.0f);
        ex.reference_lfbe = compute_lfbe(silence, dsp);
    }

    if (debug) {
        debug->target_rev = target_rev;
        debug->scaled_interferer = seg_scaled;
        debug->mixture = mixture;
        debug->context_audio = ctx_scaled;
        debug->full_interferer_scaled.sample_rate_hz = sr;
        debug->full_interferer_scaled.samples = ctx_scaled.samples;
        debug->full_interferer_scaled.samples.insert(debug->full_interferer_scaled.samples.end(),
                                                     seg_scaled.samples.begin(),
                                                     seg_scaled.samples.end());
        debug->speech_mel = speech_mel;
        debug->noise_mel = noise_mel;
        debug->gain = gain;
    }
    return ex;
}

std::vector<UtteranceExample> generate_dataset(const DatasetSpec &spec) {
    if (spec.n_examples < 0) throw std::runtime_error("dataset: n_examples must be >= 0");
    if (spec.copies_per_utterance < 1) {
        throw std::runtime_error("dataset: copies_per_utterance must be >= 1");
    }
    double wsum = 0.0;
    for (double w : spec.mix_weights) wsum += w;
    if (wsum <= 0.0) throw std::runtime_error("dataset: mix weights sum to zero");

    std::vector<UtteranceExample> out;
    out.reserve(spec.n_examples);
    std::mt19937_64 rng(splitmix64(spec.seed));
    for (int i = 0; i < spec.n_examples; ++i) {
        const double r = uniform01(rng) * wsum;
        int cond_idx = 0;
        double acc = 0.0;
        for (int c = 0; c < 4; ++c) {
            acc += spec.mix_weights[c];
            if (r < acc) {
                cond_idx = c;
                break;
            }
        }
        SceneConfig scene;
        if (!spec.snr_choices_db.empty()) {
            scene.snr_db = spec.snr_choices_db[rng() % spec.snr_choices_db.size()];
        } else {
            scene.snr_db = spec.snr_range_db[0] +
                           (spec.snr_range_db[1] - spec.snr_range_db[0]) * uniform01(rng);
        }
        scene.reverb_decay_ms =
            spec.reverb_decay_range_ms[0] +
            (spec.reverb_decay_range_ms[1] - spec.reverb_decay_range_ms[0]) * uniform01(rng);
        scene.echo_delay_ms =
            spec.echo_delay_range_ms[0] +
            (spec.echo_delay_range_ms[1] - spec.echo_delay_range_ms[0]) * uniform01(rng);
        scene.echo_gain = spec.echo_gain_range[0] +
                          (spec.echo_gain_range[1] - spec.echo_gain_range[0]) * uniform01(rng);
        scene.clip_level = spec.clip_level_range[0] +
                           (spec.clip_level_range[1] - spec.clip_level_range[0]) * uniform01(rng);
        scene.utterance_duration_s = spec.utterance_duration_s;
        scene.n_speakers = spec.n_speakers;
        // Copies of one utterance share the content seed but get fresh scenes.
        const int utt = i / spec.copies_per_utterance;
        scene.seed = mix_seed(spec.seed ^ 0xBADC0FFEULL, static_cast<uint64_t>(i));
        const uint64_t content_seed = mix_seed(spec.seed, static_cast<uint64_t>(utt) + 0xEABE);

        UtteranceExample ex =
            make_example(scene, static_cast<Condition>(cond_idx), content_seed, nullptr);
        char buf[16];
        std::snprintf(buf, sizeof(buf), "ex%05d", i);
        ex.id = buf;
        out.push_back(std::move(ex));
    }
    return out;
}

void write_dataset(const std::vector<UtteranceExample> &examples, const std::string &dir) {
    std::filesystem::create_directories(dir);
    const DspConfig dsp;
    json manifest;
    manifest["sample_rate_hz"] = dsp.sample_rate_hz;
    manifest["window_ms"] = dsp.window_ms;
    manifest["hop_ms"] = dsp.hop_ms;
    manifest["n_mels"] = dsp.n_mels;
    json entries = json::array();
    for (size_t i = 0; i < examples.size(); ++i) {
        const UtteranceExample &ex = examples[i];
        std::string id = ex.id;
        if (id.empty()) {
            char buf[16];
            std::snprintf(buf, sizeof(buf), "ex%05zu", i);
            id = buf;
        }
        json entry;
        entry["id"] = id;
        entry["condition"] = condition_name(ex.condition);
        entry["snr_db"] = ex.snr_db;
        entry["speaker_id"] = ex.speaker_id;
        entry["frames"] = ex.noisy_lfbe.frames;
        entry["context_frames"] = ex.context_lfbe.frames;
        entry["n_mels"] = ex.noisy_lfbe.channels;
        entry["dvec_dim"] = static_cast<int>(ex.speaker_embedding.size());
        json files;
        files["noisy_lfbe"] = tensor_file(id, "noisy");
        files["reference_lfbe"] = tensor_file(id, "ref");
        files["context_lfbe"] = tensor_file(id, "ctx");
        files["speaker_embedding"] = tensor_file(id, "dvec");
        files["irm_target"] = tensor_file(id, "irm");
        files["noisy_mel_linear"] = tensor_file(id, "mel");
        files["clean_lfbe"] = tensor_file(id, "clean");
        entry["files"] = files;
        entries.push_back(entry);

        write_f32_matrix(dir + "/" + tensor_file(id, "noisy"), ex.noisy_lfbe);
        write_f32_matrix(dir + "/" + tensor_file(id, "ref"), ex.reference_lfbe);
        write_f32_matrix(dir + "/" + tensor_file(id, "ctx"), ex.context_lfbe);
        write_f32_matrix(dir + "/" + tensor_file(id, "irm"), ex.irm_target);
        write_f32_matrix(dir + "/" + tensor_file(id, "mel"), ex.noisy_mel_linear);
        write_f32_matrix(dir + "/" + tensor_file(id, "clean"), ex.clean_lfbe);
        std::ofstream dv(dir + "/" + tensor_file(id, "dvec"), std::ios::binary);
        if (!dv) throw std::runtime_error("cannot write " + tensor_file(id, "dvec"));
        dv.write(reinterpret_cast<const char *>(ex.speaker_embedding.data()),
                 static_cast<std::streamsize>(ex.speaker_embedding.size() * sizeof(float)));
        if (!dv) throw std::runtime_error("write failed: " + tensor_file(id, "dvec"));
    }
    manifest["examples"] = entries;
    std::ofstream mf(dir + "/manifest.json");
    if (!mf) throw std::runtime_error("cannot write " + dir + "/manifest.json");
    mf << manifest.dump(2) << "\n";
}

std::vector<UtteranceExample> read_dataset(const std::string &dir) {
    std::ifstream mf(dir + "/manifest.json");
    if (!mf) throw std::runtime_error("cannot open " + dir + "/manifest.json");
    json manifest;
    try {
        manifest = json::parse(mf);
    } catch (const json::parse_error &e) {
        throw std::runtime_error("malformed manifest in " + dir + ": " + e.what());
    }
    const float hop_ms = manifest.at("hop_ms").get<float>();

    std::vector<UtteranceExample> out;
    for (const json &entry : manifest.at("examples")) {
        UtteranceExample ex;
        ex.id = entry.at("id").get<std::string>();
        ex.condition = condition_from_name(entry.at("condition").get<std::string>());
        ex.snr_db = entry.at("snr_db").get<float>();
        ex.speaker_id = entry.at("speaker_id").get<int>();
        const int frames = entry.at("frames").get<int>();
        const int ctx_frames = entry.at("context_frames").get<int>();
        const int n_mels = entry.at("n_mels").get<int>();
        const int dvec_dim = entry.at("dvec_dim").get<int>();
        const json &files = entry.at("files");

        auto load = [&](const char *key, int rows, FeatureDomain domain) {
            FeatureMatrix m;
            m.frames = rows;
            m.channels = n_mels;
            m.domain = domain;
            m.frame_hop_ms = hop_ms;
            m.values = read_f32_file(dir + "/" + files.at(key).get<std::string>(),
                                     static_cast<size_t>(rows) * n_mels);
            return m;
        };
        ex.noisy_lfbe = load("noisy_lfbe", frames, FeatureDomain::log_mel);
        ex.reference_lfbe = load("reference_lfbe", frames, FeatureDomain::log_mel);
        ex.context_lfbe = load("context_lfbe", ctx_frames, FeatureDomain::log_mel);
        ex.irm_target = load("irm_target", frames, FeatureDomain::linear_mel);
        ex.noisy_mel_linear = load("noisy_mel_linear", frames, FeatureDomain::linear_mel);
        ex.clean_lfbe = load("clean_lfbe", frames, FeatureDomain::log_mel);
        ex.speaker_embedding =
            read_f32_file(dir + "/" + files.at("speaker_embedding").get<std::string>(),
                          static_cast<size_t>(dvec_dim));
        out.push_back(std::move(ex));
    }
    return out;
}

} // namespace ctxfront
