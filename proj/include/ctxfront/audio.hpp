#pragma once

#include <string>
#include <vector>

namespace ctxfront {

// Mono waveform, samples in [-1, 1]. All buffers in one pipeline share the
// sample rate (default 16 kHz).
struct AudioBuffer {
    std::vector<float> samples;
    int sample_rate_hz = 16000;

    size_t size() const { return samples.size(); }
    double duration_s() const {
        return static_cast<double>(samples.size()) / sample_rate_hz;
    }
};

// Throws if any sample is NaN/Inf.
void check_finite(const AudioBuffer &audio, const std::string &what);

// File IO. Format is selected by extension: ".wav" reads/writes mono 16-bit
// PCM RIFF (little-endian), anything else is treated as raw float32 LE.
AudioBuffer read_audio(const std::string &path, int sample_rate_hz = 16000);
void write_audio(const std::string &path, const AudioBuffer &audio);

AudioBuffer read_wav(const std::string &path);
void write_wav(const std::string &path, const AudioBuffer &audio);
AudioBuffer read_f32(const std::string &path, int sample_rate_hz);
void write_f32(const std::string &path, const AudioBuffer &audio);

} // namespace ctxfront
