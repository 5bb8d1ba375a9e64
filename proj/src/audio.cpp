#include "ttsaug/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "ttsaug/util.hpp"

namespace ttsaug {

namespace {

uint32_t read_u32(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
           static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}

uint16_t read_u16(const unsigned char* p) {
    return static_cast<uint16_t>(p[0] | p[1] << 8);
}

void put_u32(std::string& s, uint32_t v) {
    s.push_back(static_cast<char>(v & 0xff));
    s.push_back(static_cast<char>((v >> 8) & 0xff));
    s.push_back(static_cast<char>((v >> 16) & 0xff));
    s.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u16(std::string& s, uint16_t v) {
    s.push_back(static_cast<char>(v & 0xff));
    s.push_back(static_cast<char>((v >> 8) & 0xff));
}

[[noreturn]] void wav_error(const std::string& path, const std::string& what) {
    throw Error(Errc::io, path + ": " + what);
}

float pick(const float* frame, uint16_t channels, ChannelMode mode) {
    switch (mode) {
        case ChannelMode::left:
            return frame[0];
        case ChannelMode::right:
            return channels > 1 ? frame[1] : frame[0];
        case ChannelMode::mix:
            break;
    }
    double acc = 0.0;
    for (uint16_t c = 0; c < channels; ++c) acc += frame[c];
    return static_cast<float>(acc / channels);
}

}  // namespace

Waveform read_wav(const std::string& path, ChannelMode mode) {
    std::string bytes = read_file(path);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0) {
        wav_error(path, "not a RIFF/WAVE file");
    }

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    size_t data_off = 0, data_len = 0;
    bool have_fmt = false;

    size_t off = 12;
    while (off + 8 <= bytes.size()) {
        const unsigned char* hdr = p + off;
        uint32_t chunk_len = read_u32(hdr + 4);
        size_t body = off + 8;
        if (body + chunk_len > bytes.size()) {
            // Tolerate a short final data chunk from truncated writers.
            if (std::memcmp(hdr, "data", 4) == 0) chunk_len = static_cast<uint32_t>(bytes.size() - body);
            else wav_error(path, "chunk extends past end of file");
        }
        if (std::memcmp(hdr, "fmt ", 4) == 0) {
            if (chunk_len < 16) wav_error(path, "fmt chunk too short");
            format = read_u16(p + body);
            channels = read_u16(p + body + 2);
            rate = read_u32(p + body + 4);
            bits = read_u16(p + body + 14);
            have_fmt = true;
        } else if (std::memcmp(hdr, "data", 4) == 0) {
            data_off = body;
            data_len = chunk_len;
        }
        off = body + chunk_len + (chunk_len & 1);  // chunks are word-aligned
    }
    if (!have_fmt) wav_error(path, "missing fmt chunk");
    if (data_off == 0) wav_error(path, "missing data chunk");
    if (channels == 0 || rate == 0) wav_error(path, "bad fmt chunk");
    // 0xfffe = extensible; the subformat is the first format's layout here.
    if (format == 0xfffe) format = bits == 32 ? 3 : 1;
    if (!((format == 1 && bits == 16) || (format == 3 && bits == 32))) {
        wav_error(path, "unsupported encoding (want PCM16 or float32)");
    }

    const size_t bytes_per_sample = bits / 8;
    const size_t frame_bytes = bytes_per_sample * channels;
    const size_t n_frames = data_len / frame_bytes;

    Waveform w;
    w.sample_rate = static_cast<int>(rate);
    w.samples.resize(n_frames);
    std::vector<float> frame(channels);
    const unsigned char* d = p + data_off;
    for (size_t i = 0; i < n_frames; ++i) {
        const unsigned char* f = d + i * frame_bytes;
        for (uint16_t c = 0; c < channels; ++c) {
            if (format == 1) {
                int16_t v = static_cast<int16_t>(read_u16(f + c * 2));
                frame[c] = static_cast<float>(v) / 32768.0f;
            } else {
                float v;
                std::memcpy(&v, f + c * 4, 4);
                frame[c] = v;
            }
        }
        w.samples[i] = pick(frame.data(), channels, mode);
    }
    return w;
}

void write_wav_pcm16(const std::string& path, const Waveform& wave) {
    if (wave.sample_rate <= 0) throw Error(Errc::io, path + ": waveform has no sample rate");
    const uint32_t n = static_cast<uint32_t>(wave.samples.size());
    const uint32_t data_len = n * 2;
    std::string out;
    out.reserve(44 + data_len);
    out += "RIFF";
    put_u32(out, 36 + data_len);
    out += "WAVE";
    out += "fmt ";
    put_u32(out, 16);
    put_u16(out, 1);  // PCM
    put_u16(out, 1);  // mono
    put_u32(out, static_cast<uint32_t>(wave.sample_rate));
    put_u32(out, static_cast<uint32_t>(wave.sample_rate) * 2);
    put_u16(out, 2);
    put_u16(out, 16);
    out += "data";
    put_u32(out, data_len);
    for (float v : wave.samples) {
        float clamped = std::clamp(v, -1.0f, 1.0f);
        auto q = static_cast<int16_t>(std::lrint(clamped * 32767.0f));
        put_u16(out, static_cast<uint16_t>(q));
    }
    write_file_atomic(path, out);
}

Waveform load_waveform(const std::string& path, int target_rate, ChannelMode mode) {
    Waveform w = read_wav(path, mode);
    if (target_rate > 0 && w.sample_rate != target_rate) {
        w.samples = kernels::resample(w.samples, w.sample_rate, target_rate);
        w.sample_rate = target_rate;
    }
    return w;
}

size_t window_length(int sample_rate, double window_seconds) {
    return static_cast<size_t>(std::llround(window_seconds * sample_rate));
}

std::vector<float> fit_to_window(std::vector<float> samples, int sample_rate,
                                 double window_seconds) {
    const size_t target = window_length(sample_rate, window_seconds);
    if (samples.size() > target) {
        samples.resize(target);  // keep the beginning
    } else if (samples.size() < target) {
        samples.resize(target, 0.0f);  // zero-pad the end
    }
    return samples;
}

FeatureTensor extract_features(const Waveform& wave, const FeatureConfig& cfg) {
    if (wave.sample_rate != cfg.mel.sample_rate) {
        throw Error(Errc::backend,
                    "feature extraction expects audio at " + std::to_string(cfg.mel.sample_rate) +
                        " Hz, got " + std::to_string(wave.sample_rate));
    }
    const size_t want = window_length(wave.sample_rate, cfg.window_seconds);
    if (wave.samples.size() != want) {
        throw Error(Errc::backend, "feature extraction expects window-fitted audio (" +
                                       std::to_string(want) + " samples, got " +
                                       std::to_string(wave.samples.size()) + ")");
    }
    FeatureTensor t;
    t.frames = kernels::mel_frame_count(wave.samples.size(), cfg.mel);
    t.dims = static_cast<size_t>(cfg.mel.n_mels);
    t.frame_rate = static_cast<double>(cfg.mel.sample_rate) / cfg.mel.hop;
    t.data.resize(t.frames * t.dims);
    auto fbank = kernels::mel_filterbank(cfg.mel);
    kernels::log_mel(wave.samples.data(), wave.samples.size(), cfg.mel, fbank, t.data.data());
    return t;
}

}  // namespace ttsaug
