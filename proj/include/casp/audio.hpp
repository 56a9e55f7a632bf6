#pragma once

#include <cstdint>
#include <string>

#include "casp/io.hpp"
#include "casp/nn.hpp"

namespace casp::audio {

// Front-end conventions (VGGish-style): 16 kHz mono, 25 ms periodic-Hann
// window, 10 ms hop, 64 HTK-mel bands over 125-7500 Hz, log offset 0.01,
// 96 frames per example.
struct FrontendConfig {
    double sample_rate = 16000.0;
    int64_t win_len = 400;
    int64_t hop = 160;
    int64_t n_mels = 64;
    double f_min = 125.0;
    double f_max = 7500.0;
    double log_floor = 0.01;
    int64_t frames = 96;
};

// Returns exactly round(sample_rate * clip_frames / fps) samples starting at
// round(start_frame * sample_rate / fps).
Waveform crop_align(const Waveform& w, int64_t clip_frames, double fps, int64_t start_frame = 0);

// |one-sided DFT| of periodic-Hann windowed frames: [frames, win_len/2 + 1],
// frames = 1 + floor((len - win_len) / hop).
Tensor<float> stft_magnitude(const Waveform& w, int64_t win_len, int64_t hop);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

struct MelFilterbank {
    int64_t n_mels = 0;
    int64_t n_bins = 0;
    double f_min = 0, f_max = 0;
    std::vector<double> weights;  // [n_mels, n_bins] row-major

    static MelFilterbank build(int64_t n_mels, int64_t n_bins, double sample_rate, double f_min, double f_max);
    double at(int64_t mel, int64_t bin) const { return weights[static_cast<std::size_t>(mel * n_bins + bin)]; }
    // Center frequency of each filter in Hz.
    std::vector<double> centers_hz() const;
};

// log(fb * mag^2 + floor), center-cropped or padded (with zero energy) to
// `frames` rows: [frames, n_mels].
Tensor<float> log_mel(const Tensor<float>& mag, const MelFilterbank& fb, double log_floor = 0.01,
                      int64_t frames = 96);

// Full pipeline: waveform -> [96, 64] log-mel spectrogram.
Tensor<float> spectrogram(const Waveform& w, const FrontendConfig& cfg = {});

struct EmbedderConfig {
    int64_t conv1 = 8;
    int64_t conv2 = 16;
    int64_t dim = 128;  // C_A
    int64_t frames = 96;
    int64_t mels = 64;
};

// Small 2D conv embedder: two stride-2 3x3 convs with gelu, an average over
// time that keeps the mel axis, then an affine map to `dim`.
template <class T>
class AudioEmbedder {
public:
    AudioEmbedder() = default;
    AudioEmbedder(ParamStore<T>& store, const std::string& name, const EmbedderConfig& cfg);

    // spec: [frames, mels] -> [dim]
    Tensor<T> operator()(const Tensor<T>& spec) const;
    const EmbedderConfig& config() const { return cfg_; }
    LinearLayer<T>& head() { return fc_; }

private:
    EmbedderConfig cfg_;
    Conv3dLayer<T> conv1_, conv2_;
    LinearLayer<T> fc_;
};

}  // namespace casp::audio
