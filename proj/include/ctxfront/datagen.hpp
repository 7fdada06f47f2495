#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ctxfront/audio.hpp"
#include "ctxfront/dsp.hpp"

namespace ctxfront {

enum class Condition { echo, noise, multispeaker, clean };

const char *condition_name(Condition c);
Condition condition_from_name(const std::string &name);

constexpr double kNoiseContextSeconds = 6.0;
constexpr int kDvecDim = 256;

// One training/eval item. All matrices share T except context_lfbe, whose
// frame count corresponds to exactly 6.0 s of audio (597 frames at the
// default DSP settings). For conditions other than echo the reference is the
// LFBE of an all-zero waveform.
struct UtteranceExample {
    FeatureMatrix noisy_lfbe;      // [T x 128] log_mel of X+N
    FeatureMatrix reference_lfbe;  // [T x 128] log_mel
    FeatureMatrix context_lfbe;    // [T_ctx x 128] log_mel
    std::vector<float> speaker_embedding; // 256-dim, unit norm
    FeatureMatrix irm_target;      // [T x 128] in [0, 1]
    FeatureMatrix noisy_mel_linear; // [T x 128] >= 0, defined as X+N
    FeatureMatrix clean_lfbe;      // [T x 128] log_mel of X
    Condition condition = Condition::clean;

    std::string id;
    float snr_db = 0.0f;
    int speaker_id = 0;
};

// Concrete per-example scene. Dataset-level generation draws these values
// from the configured ranges, then make_example is pure given (cfg,
// condition, seed).
struct SceneConfig {
    double snr_db = 5.0;
    double reverb_decay_ms = 300.0; // [0, 900]
    double echo_delay_ms = 20.0;
    double echo_gain = 0.6;
    double clip_level = 0.8; // (0, 1]
    std::array<double, 4> mix_weights = {0.25, 0.25, 0.25, 0.25}; // echo/noise/multispeaker/clean
    uint64_t seed = 0;
    double utterance_duration_s = 2.0;
    int n_speakers = 32;

    void validate() const;
};

// Deterministic pseudo-speech: speaker-dependent fundamental (80-250 Hz)
// with harmonics, syllabic amplitude modulation, brief unvoiced bursts;
// peak-normalized to 0.5.
AudioBuffer synth_speech_like(uint64_t seed, double duration_s, int speaker_id,
                              int sample_rate_hz = 16000);
double speaker_f0_hz(int speaker_id);

AudioBuffer synth_colored_noise(uint64_t seed, double duration_s, int sample_rate_hz = 16000);

struct MixResult {
    AudioBuffer mixture;
    AudioBuffer scaled_interferer;
    double gain = 1.0;
};

// Scales the interferer so that 10*log10(P_target / P_scaled) = snr_db, with
// power measured as full-utterance mean square, and adds it to the target.
MixResult mix_at_snr(const AudioBuffer &target, const AudioBuffer &interferer, double snr_db);

// echo = reverb(hard_clip(gain * delay(reference), clip_level)); delay pads
// with zeros, the RIR is a unit direct path plus exponentially decaying
// white noise with 60 dB decay time reverb_decay_ms. Output length matches
// the input.
AudioBuffer simulate_echo_path(const AudioBuffer &reference, const SceneConfig &cfg);

// Same RIR machinery applied to the target speech.
AudioBuffer apply_reverb(const AudioBuffer &audio, double reverb_decay_ms, uint64_t seed);

// IRM[t,c] = X/(X+N), 0 where X+N < 1e-12.
FeatureMatrix compute_irm(const FeatureMatrix &speech_mel, const FeatureMatrix &noise_mel);

// Seeded pseudo-random Gaussian vector, L2-normalized. The absent-speaker
// sentinel is the all-zero vector.
std::vector<float> synth_dvector(int speaker_id);
std::vector<float> zero_dvector();

// Waveform-level pieces of one example, for invariant checks.
struct ExampleDebug {
    AudioBuffer target_rev;         // reverberant target segment
    AudioBuffer scaled_interferer;  // interferer segment after SNR scaling
    AudioBuffer mixture;
    AudioBuffer context_audio;      // first 6 s of the scaled interferer
    AudioBuffer full_interferer_scaled; // context + segment, contiguous
    FeatureMatrix speech_mel;       // X
    FeatureMatrix noise_mel;        // N
    double gain = 1.0;
};

UtteranceExample make_example(const SceneConfig &cfg, Condition condition, uint64_t seed,
                              ExampleDebug *debug = nullptr);

struct DatasetSpec {
    int n_examples = 64;
    std::array<double, 4> mix_weights = {0.25, 0.25, 0.25, 0.25};
    std::vector<double> snr_choices_db;      // takes precedence when nonempty
    std::array<double, 2> snr_range_db = {-10.0, 30.0};
    std::array<double, 2> reverb_decay_range_ms = {0.0, 900.0};
    std::array<double, 2> echo_delay_range_ms = {5.0, 40.0};
    std::array<double, 2> echo_gain_range = {0.3, 0.9};
    std::array<double, 2> clip_level_range = {0.5, 1.0};
    double utterance_duration_s = 2.0;
    int n_speakers = 32;
    int copies_per_utterance = 1;
    uint64_t seed = 1;
};

std::vector<UtteranceExample> generate_dataset(const DatasetSpec &spec);

// Dataset directory: manifest.json plus one raw float32 little-endian file
// per tensor, row-major.
void write_dataset(const std::vector<UtteranceExample> &examples, const std::string &dir);
std::vector<UtteranceExample> read_dataset(const std::string &dir);

} // namespace ctxfront
