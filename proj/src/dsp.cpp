#include "ctxfront/dsp.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ctxfront {

namespace {

constexpr double kPi = 3.14159265358979323846;

int next_pow2(int n) {
    int p = 1;
    while (p < n) p <<= 1;
    return p;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

} // namespace

int stft_frame_count(size_t n_samples, int sample_rate_hz, float window_ms, float hop_ms) {
    const int win = static_cast<int>(std::lround(window_ms * 1e-3 * sample_rate_hz));
    const int hop = static_cast<int>(std::lround(hop_ms * 1e-3 * sample_rate_hz));
    if (n_samples < static_cast<size_t>(win)) {
        throw std::runtime_error("input too short: " + std::to_string(n_samples) +
                                 " samples < one window of " + std::to_string(win));
    }
    return static_cast<int>((n_samples - win) / hop) + 1;
}

void fft_inplace(std::vector<std::complex<double>> &x) {
    const size_t n = x.size();
    if (n == 0 || (n & (n - 1)) != 0) {
        throw std::runtime_error("fft: size must be a power of two");
    }
    // bit reversal
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(x[i], x[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * kPi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                std::complex<double> u = x[i + k];
                std::complex<double> v = x[i + k + len / 2] * w;
                x[i + k] = u + v;
                x[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

Spectrogram stft(const AudioBuffer &audio, float window_ms, float hop_ms) {
    const int sr = audio.sample_rate_hz;
    const int win = static_cast<int>(std::lround(window_ms * 1e-3 * sr));
    const int hop = static_cast<int>(std::lround(hop_ms * 1e-3 * sr));
    const int frames = stft_frame_count(audio.samples.size(), sr, window_ms, hop_ms);
    const int n_fft = next_pow2(win);
    const int bins = n_fft / 2 + 1;

    std::vector<double> window(win);
    for (int i = 0; i < win; ++i) {
        window[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * i / win));
    }

    Spectrogram out;
    out.frames = frames;
    out.bins = bins;
    out.sample_rate_hz = sr;
    out.n_fft = n_fft;
    out.window_ms = window_ms;
    out.hop_ms = hop_ms;
    out.values.resize(static_cast<size_t>(frames) * bins);

    std::vector<std::complex<double>> buf(n_fft);
    for (int t = 0; t < frames; ++t) {
        const size_t start = static_cast<size_t>(t) * hop;
        for (int i = 0; i < win; ++i) {
            buf[i] = window[i] * static_cast<double>(audio.samples[start + i]);
        }
        for (int i = win; i < n_fft; ++i) buf[i] = 0.0;
        fft_inplace(buf);
        for (int f = 0; f < bins; ++f) {
            out.values[static_cast<size_t>(t) * bins + f] =
                std::complex<float>(static_cast<float>(buf[f].real()),
                                    static_cast<float>(buf[f].imag()));
        }
    }
    return out;
}

std::vector<float> mel_filterbank(int n_mels, int n_fft, int sample_rate_hz,
                                  float fmin_hz, float fmax_hz) {
    if (n_mels < 1) throw std::runtime_error("mel_filterbank: n_mels must be >= 1");
    const int bins = n_fft / 2 + 1;
    const double mel_lo = hz_to_mel(fmin_hz);
    const double mel_hi = hz_to_mel(fmax_hz);

    std::vector<double> edges(n_mels + 2);
    for (int i = 0; i < n_mels + 2; ++i) {
        edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));
    }

    std::vector<float> weights(static_cast<size_t>(n_mels) * bins, 0.0f);
    for (int c = 0; c < n_mels; ++c) {
        const double left = edges[c], center = edges[c + 1], right = edges[c + 2];
        for (int k = 0; k < bins; ++k) {
            const double f = static_cast<double>(k) * sample_rate_hz / n_fft;
            double w = 0.0;
            if (f > left && f < center) {
                w = (f - left) / (center - left);
            } else if (f >= center && f < right) {
                w = (right - f) / (right - center);
            }
            weights[static_cast<size_t>(c) * bins + k] = static_cast<float>(w);
        }
    }
    return weights;
}

FeatureMatrix mel_energies(const Spectrogram &spec, int n_mels, float fmin_hz, float fmax_hz) {
    const std::vector<float> fb =
        mel_filterbank(n_mels, spec.n_fft, spec.sample_rate_hz, fmin_hz, fmax_hz);
    const int bins = spec.bins;

    FeatureMatrix out;
    out.frames = spec.frames;
    out.channels = n_mels;
    out.domain = FeatureDomain::linear_mel;
    out.frame_hop_ms = spec.hop_ms;
    out.values.resize(static_cast<size_t>(spec.frames) * n_mels);

    std::vector<double> power(bins);
    for (int t = 0; t < spec.frames; ++t) {
        const std::complex<float> *row = &spec.values[static_cast<size_t>(t) * bins];
        for (int f = 0; f < bins; ++f) {
            const double re = row[f].real(), im = row[f].imag();
            power[f] = re * re + im * im;
        }
        for (int c = 0; c < n_mels; ++c) {
            const float *w = &fb[static_cast<size_t>(c) * bins];
            double acc = 0.0;
            for (int f = 0; f < bins; ++f) acc += w[f] * power[f];
            out.at(t, c) = static_cast<float>(acc);
        }
    }
    return out;
}

FeatureMatrix lfbe(const FeatureMatrix &mel, float log_floor) {
    if (mel.domain != FeatureDomain::linear_mel) {
        throw std::runtime_error("lfbe: expected linear-mel input");
    }
    FeatureMatrix out = mel;
    out.domain = FeatureDomain::log_mel;
    for (float &v : out.values) {
        v = std::log(std::max(v, log_floor));
    }
    return out;
}

FeatureMatrix stack_subsample(const FeatureMatrix &feats, int stack, int subsample) {
    if (feats.frames < stack) {
        throw std::runtime_error("stack_subsample: need at least " + std::to_string(stack) +
                                 " frames, got " + std::to_string(feats.frames));
    }
    const int out_frames = stacked_frame_count(feats.frames, subsample);
    const int c_in = feats.channels;

    FeatureMatrix out;
    out.frames = out_frames;
    out.channels = stack * c_in;
    out.domain = feats.domain;
    out.frame_hop_ms = feats.frame_hop_ms * static_cast<float>(subsample);
    out.values.resize(static_cast<size_t>(out_frames) * out.channels);
    for (int k = 0; k < out_frames; ++k) {
        for (int j = 0; j < stack; ++j) {
            const int src = stacked_source_frame(k, j, feats.frames, subsample);
            for (int c = 0; c < c_in; ++c) {
                out.at(k, j * c_in + c) = feats.at(src, c);
            }
        }
    }
    return out;
}

FeatureMatrix compute_mel(const AudioBuffer &audio, const DspConfig &cfg) {
    Spectrogram spec = stft(audio, cfg.window_ms, cfg.hop_ms);
    return mel_energies(spec, cfg.n_mels, cfg.mel_fmin_hz, cfg.mel_fmax_hz);
}

FeatureMatrix compute_lfbe(const AudioBuffer &audio, const DspConfig &cfg) {
    return lfbe(compute_mel(audio, cfg), cfg.log_floor);
}

} // namespace ctxfront
