#pragma once

#include <complex>
#include <vector>

#include "ctxfront/audio.hpp"

namespace ctxfront {

enum class FeatureDomain { linear_mel, log_mel };

// [frames x channels] row-major feature matrix. Carries linear mel energies
// or LFBE depending on the domain tag.
struct FeatureMatrix {
    int frames = 0;
    int channels = 0;
    std::vector<float> values; // frames * channels, row-major
    FeatureDomain domain = FeatureDomain::linear_mel;
    float frame_hop_ms = 10.0f;

    float &at(int t, int c) { return values[static_cast<size_t>(t) * channels + c]; }
    float at(int t, int c) const { return values[static_cast<size_t>(t) * channels + c]; }
};

struct Spectrogram {
    int frames = 0;
    int bins = 0; // n_fft/2 + 1
    std::vector<std::complex<float>> values;
    int sample_rate_hz = 16000;
    int n_fft = 512;
    float window_ms = 32.0f;
    float hop_ms = 10.0f;

    std::complex<float> at(int t, int f) const {
        return values[static_cast<size_t>(t) * bins + f];
    }
};

struct DspConfig {
    int sample_rate_hz = 16000;
    float window_ms = 32.0f;
    float hop_ms = 10.0f;
    int n_mels = 128;
    float mel_fmin_hz = 125.0f;
    float mel_fmax_hz = 7500.0f;
    float log_floor = 1e-10f;
};

// floor((len_ms - window_ms)/hop_ms) + 1, in samples. Throws "input too
// short" if the audio does not cover one window.
int stft_frame_count(size_t n_samples, int sample_rate_hz, float window_ms, float hop_ms);

// In-place radix-2 complex FFT, n must be a power of two.
void fft_inplace(std::vector<std::complex<double>> &x);

Spectrogram stft(const AudioBuffer &audio, float window_ms = 32.0f, float hop_ms = 10.0f);

// HTK-style triangular mel filters over [fmin, fmax]; weights on power
// spectrum bin centers. Row-major [n_mels x bins].
std::vector<float> mel_filterbank(int n_mels, int n_fft, int sample_rate_hz,
                                  float fmin_hz, float fmax_hz);

FeatureMatrix mel_energies(const Spectrogram &spec, int n_mels = 128,
                           float fmin_hz = 125.0f, float fmax_hz = 7500.0f);

// values[t,c] = ln(max(mel[t,c], log_floor)).
FeatureMatrix lfbe(const FeatureMatrix &mel, float log_floor = 1e-10f);

// Source frame index for stacked output frame k, slot j: min(subsample*k + j,
// frames-1). Shared by the FeatureMatrix path and the autodiff op.
inline int stacked_source_frame(int k, int j, int frames, int subsample) {
    int idx = subsample * k + j;
    return idx < frames ? idx : frames - 1;
}

inline int stacked_frame_count(int frames, int subsample) {
    return (frames + subsample - 1) / subsample;
}

// Output frame k concatenates input frames [s*k .. s*k+stack-1], left-aligned,
// final partial windows padded by repeating the last frame.
FeatureMatrix stack_subsample(const FeatureMatrix &feats, int stack = 4, int subsample = 3);

// stft -> mel_energies -> lfbe with the shared settings.
FeatureMatrix compute_lfbe(const AudioBuffer &audio, const DspConfig &cfg = {});
FeatureMatrix compute_mel(const AudioBuffer &audio, const DspConfig &cfg = {});

} // namespace ctxfront
