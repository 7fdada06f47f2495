#include "ctxfront/audio.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ctxfront {

void check_finite(const AudioBuffer &audio, const std::string &what) {
    for (float s : audio.samples) {
        if (!std::isfinite(s)) {
            throw std::runtime_error("non-finite sample in " + what);
        }
    }
}

namespace {

bool ends_with(const std::string &s, const std::string &suffix) {
    return s.size() >= suffix.size() &&
           s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

uint32_t read_u32(std::istream &in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char *>(b), 4);
    return b[0] | (b[1] << 8) | (b[2] << 16) | (uint32_t(b[3]) << 24);
}

uint16_t read_u16(std::istream &in) {
    unsigned char b[2];
    in.read(reinterpret_cast<char *>(b), 2);
    return uint16_t(b[0] | (b[1] << 8));
}

void write_u32(std::ostream &out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<char *>(b), 4);
}

void write_u16(std::ostream &out, uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff)};
    out.write(reinterpret_cast<char *>(b), 2);
}

} // namespace

AudioBuffer read_wav(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open wav file: " + path);

    char tag[4];
    in.read(tag, 4);
    if (!in || std::memcmp(tag, "RIFF", 4) != 0)
        throw std::runtime_error("not a RIFF file: " + path);
    read_u32(in); // riff size
    in.read(tag, 4);
    if (!in || std::memcmp(tag, "WAVE", 4) != 0)
        throw std::runtime_error("not a WAVE file: " + path);

    AudioBuffer audio;
    uint16_t n_channels = 0, bits = 0;
    bool got_fmt = false;
    while (in.read(tag, 4)) {
        uint32_t chunk_size = read_u32(in);
        if (std::memcmp(tag, "fmt ", 4) == 0) {
            uint16_t fmt = read_u16(in);
            n_channels = read_u16(in);
            audio.sample_rate_hz = static_cast<int>(read_u32(in));
            read_u32(in); // byte rate
            read_u16(in); // block align
            bits = read_u16(in);
            if (fmt != 1) throw std::runtime_error("wav: only PCM supported: " + path);
            if (n_channels != 1) throw std::runtime_error("wav: only mono supported: " + path);
            if (bits != 16) throw std::runtime_error("wav: only 16-bit supported: " + path);
            if (chunk_size > 16) in.seekg(chunk_size - 16, std::ios::cur);
            got_fmt = true;
        } else if (std::memcmp(tag, "data", 4) == 0) {
            if (!got_fmt) throw std::runtime_error("wav: data before fmt: " + path);
            size_t n = chunk_size / 2;
            audio.samples.resize(n);
            std::vector<int16_t> raw(n);
            in.read(reinterpret_cast<char *>(raw.data()), chunk_size);
            if (!in) throw std::runtime_error("wav: truncated data chunk: " + path);
            for (size_t i = 0; i < n; ++i) {
                audio.samples[i] = static_cast<float>(raw[i]) / 32768.0f;
            }
            return audio;
        } else {
            in.seekg(chunk_size + (chunk_size & 1), std::ios::cur);
        }
    }
    throw std::runtime_error("wav: no data chunk: " + path);
}

void write_wav(const std::string &path, const AudioBuffer &audio) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write wav file: " + path);

    uint32_t n = static_cast<uint32_t>(audio.samples.size());
    uint32_t data_bytes = n * 2;
    out.write("RIFF", 4);
    write_u32(out, 36 + data_bytes);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    write_u32(out, 16);
    write_u16(out, 1); // PCM
    write_u16(out, 1); // mono
    write_u32(out, static_cast<uint32_t>(audio.sample_rate_hz));
    write_u32(out, static_cast<uint32_t>(audio.sample_rate_hz) * 2);
    write_u16(out, 2);
    write_u16(out, 16);
    out.write("data", 4);
    write_u32(out, data_bytes);
    for (float s : audio.samples) {
        float c = std::max(-1.0f, std::min(1.0f, s));
        int16_t q = static_cast<int16_t>(std::lrintf(c * 32767.0f));
        write_u16(out, static_cast<uint16_t>(q));
    }
    if (!out) throw std::runtime_error("wav: write failed: " + path);
}

AudioBuffer read_f32(const std::string &path, int sample_rate_hz) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("cannot open f32 file: " + path);
    std::streamsize bytes = in.tellg();
    if (bytes % 4 != 0)
        throw std::runtime_error("f32 file size not a multiple of 4: " + path);
    in.seekg(0);
    AudioBuffer audio;
    audio.sample_rate_hz = sample_rate_hz;
    audio.samples.resize(static_cast<size_t>(bytes / 4));
    in.read(reinterpret_cast<char *>(audio.samples.data()), bytes);
    if (!in) throw std::runtime_error("f32 read failed: " + path);
    return audio;
}

void write_f32(const std::string &path, const AudioBuffer &audio) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write f32 file: " + path);
    out.write(reinterpret_cast<const char *>(audio.samples.data()),
              static_cast<std::streamsize>(audio.samples.size() * 4));
    if (!out) throw std::runtime_error("f32 write failed: " + path);
}

AudioBuffer read_audio(const std::string &path, int sample_rate_hz) {
    AudioBuffer audio = ends_with(path, ".wav") ? read_wav(path)
                                                : read_f32(path, sample_rate_hz);
    check_finite(audio, path);
    return audio;
}

void write_audio(const std::string &path, const AudioBuffer &audio) {
    if (ends_with(path, ".wav")) {
        write_wav(path, audio);
    } else {
        write_f32(path, audio);
    }
}

} // namespace ctxfront
