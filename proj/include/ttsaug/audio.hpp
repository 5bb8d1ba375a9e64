// Waveform loading and the fixed-window feature pipeline: decode, mix to
// mono, resample, fit to the window length, then log-mel features.
#pragma once

#include <string>
#include <vector>

#include "ttsaug/errors.hpp"
#include "ttsaug/kernels.hpp"

namespace ttsaug {

struct Waveform {
    std::vector<float> samples;  // mono unless stated otherwise
    int sample_rate = 0;

    double duration() const {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
};

// Which channel of a multi-channel file to keep.
enum class ChannelMode { mix, left, right };

// RIFF/WAVE reader for PCM16 and IEEE float32, any channel count. The result
// keeps the file's sample rate; channels are selected or mixed down here.
// Throws Errc::io on malformed or unsupported files.
Waveform read_wav(const std::string& path, ChannelMode mode = ChannelMode::mix);

// Mono PCM16 writer (values clamped to [-1, 1]).
void write_wav_pcm16(const std::string& path, const Waveform& wave);

// read_wav + resample to target_rate. When the file already has the target
// rate the samples pass through untouched.
Waveform load_waveform(const std::string& path, int target_rate,
                       ChannelMode mode = ChannelMode::mix);

// Zero-pads at the end or truncates (keeping the beginning) so the result is
// exactly round(window_seconds * sample_rate) samples. Idempotent.
std::vector<float> fit_to_window(std::vector<float> samples, int sample_rate,
                                 double window_seconds);
size_t window_length(int sample_rate, double window_seconds);

struct FeatureConfig {
    kernels::MelConfig mel;
    double window_seconds = 30.0;
};

struct FeatureTensor {
    size_t frames = 0;
    size_t dims = 0;
    double frame_rate = 0.0;        // frames per second
    std::vector<double> data;       // frames x dims, row-major

    const double* row(size_t t) const { return data.data() + t * dims; }
};

// Log-mel features for window-fitted audio. The waveform must already be at
// the config's sample rate and exactly one window long; anything else throws
// Errc::backend, because silently refitting here would hide caller bugs.
FeatureTensor extract_features(const Waveform& wave, const FeatureConfig& cfg);

}  // namespace ttsaug
