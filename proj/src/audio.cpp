#include "casp/audio.hpp"

#include <cmath>
#include <numbers>

namespace casp::audio {

Waveform crop_align(const Waveform& w, int64_t clip_frames, double fps, int64_t start_frame) {
    if (clip_frames < 1 || !(fps > 0)) throw InputError("crop_align: clip_frames and fps must be positive");
    const auto count = static_cast<int64_t>(std::llround(w.sample_rate * static_cast<double>(clip_frames) / fps));
    const auto offset = static_cast<int64_t>(std::llround(static_cast<double>(start_frame) * w.sample_rate / fps));
    const auto available = static_cast<int64_t>(w.samples.size());
    if (offset < 0 || offset + count > available) {
        throw InputError("crop_align: waveform too short, need " +
                         std::to_string(static_cast<double>(offset + count) / w.sample_rate) + " s, have " +
                         std::to_string(w.duration()) + " s");
    }
    Waveform out;
    out.sample_rate = w.sample_rate;
    out.samples.assign(w.samples.begin() + offset, w.samples.begin() + offset + count);
    return out;
}

Tensor<float> stft_magnitude(const Waveform& w, int64_t win_len, int64_t hop) {
    const auto len = static_cast<int64_t>(w.samples.size());
    if (win_len < 2 || win_len > len) {
        throw InputError("stft: window of " + std::to_string(win_len) + " samples exceeds signal of " +
                         std::to_string(len));
    }
    if (hop < 1) throw InputError("stft: hop must be >= 1");
    const int64_t frames = 1 + (len - win_len) / hop;
    const int64_t bins = win_len / 2 + 1;
    const double two_pi = 2.0 * std::numbers::pi;
    std::vector<double> window(static_cast<std::size_t>(win_len)), cos_t(window.size()), sin_t(window.size());
    for (int64_t n = 0; n < win_len; ++n) {
        const double phase = two_pi * static_cast<double>(n) / static_cast<double>(win_len);
        window[n] = 0.5 - 0.5 * std::cos(phase);
        cos_t[n] = std::cos(phase);
        sin_t[n] = std::sin(phase);
    }
    Buffer<float> out(static_cast<std::size_t>(frames * bins));
    std::vector<double> seg(window.size());
    for (int64_t f = 0; f < frames; ++f) {
        for (int64_t n = 0; n < win_len; ++n) seg[n] = window[n] * w.samples[f * hop + n];
        for (int64_t k = 0; k < bins; ++k) {
            double re = 0, im = 0;
            int64_t idx = 0;
            for (int64_t n = 0; n < win_len; ++n) {
                re += seg[n] * cos_t[idx];
                im -= seg[n] * sin_t[idx];
                idx += k;
                if (idx >= win_len) idx -= win_len;
            }
            out[f * bins + k] = static_cast<float>(std::sqrt(re * re + im * im));
        }
    }
    return Tensor<float>({frames, bins}, std::move(out));
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank MelFilterbank::build(int64_t n_mels, int64_t n_bins, double sample_rate, double f_min, double f_max) {
    if (n_mels < 1 || n_bins < 2 || !(f_min >= 0) || !(f_max > f_min) || f_max > sample_rate / 2) {
        throw ConfigError("invalid mel filterbank configuration");
    }
    MelFilterbank fb;
    fb.n_mels = n_mels;
    fb.n_bins = n_bins;
    fb.f_min = f_min;
    fb.f_max = f_max;
    fb.weights.assign(static_cast<std::size_t>(n_mels * n_bins), 0.0);
    const double lo = hz_to_mel(f_min), hi = hz_to_mel(f_max);
    std::vector<double> edges(static_cast<std::size_t>(n_mels + 2));
    for (int64_t i = 0; i < n_mels + 2; ++i) edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_mels + 1);
    const double nyquist = sample_rate / 2;
    for (int64_t b = 1; b < n_bins; ++b) {  // DC carries no weight
        const double mel = hz_to_mel(nyquist * static_cast<double>(b) / static_cast<double>(n_bins - 1));
        for (int64_t m = 0; m < n_mels; ++m) {
            const double lower = (mel - edges[m]) / (edges[m + 1] - edges[m]);
            const double upper = (edges[m + 2] - mel) / (edges[m + 2] - edges[m + 1]);
            fb.weights[m * n_bins + b] = std::max(0.0, std::min(lower, upper));
        }
    }
    for (int64_t m = 0; m < n_mels; ++m) {
        double s = 0;
        for (int64_t b = 0; b < n_bins; ++b) s += fb.at(m, b);
        if (s <= 0) throw ConfigError("mel filter " + std::to_string(m) + " has empty support at this FFT resolution");
    }
    return fb;
}

std::vector<double> MelFilterbank::centers_hz() const {
    const double lo = hz_to_mel(f_min), hi = hz_to_mel(f_max);
    std::vector<double> c;
    for (int64_t m = 1; m <= n_mels; ++m) c.push_back(mel_to_hz(lo + (hi - lo) * double(m) / double(n_mels + 1)));
    return c;
}

Tensor<float> log_mel(const Tensor<float>& mag, const MelFilterbank& fb, double log_floor, int64_t frames) {
    if (mag.rank() != 2 || mag.dim(1) != fb.n_bins) {
        throw DimensionError("log_mel: magnitude " + shape_str(mag.shape()) + " does not match " +
                             std::to_string(fb.n_bins) + " filterbank bins");
    }
    const int64_t in_frames = mag.dim(0), bins = mag.dim(1);
    // Source row for output row r (center crop or center pad).
    const int64_t shift = (in_frames - frames) / 2;
    const float floor_value = static_cast<float>(std::log(log_floor));
    Buffer<float> out(static_cast<std::size_t>(frames * fb.n_mels), floor_value);
    const auto m = mag.data();
    for (int64_t r = 0; r < frames; ++r) {
        const int64_t src = r + shift;
        if (src < 0 || src >= in_frames) continue;
        for (int64_t k = 0; k < fb.n_mels; ++k) {
            double e = 0;
            for (int64_t b = 0; b < bins; ++b) {
                const double a = m[src * bins + b];
                e += fb.at(k, b) * a * a;
            }
            out[r * fb.n_mels + k] = static_cast<float>(std::log(e + log_floor));
        }
    }
    return Tensor<float>({frames, fb.n_mels}, std::move(out));
}

Tensor<float> spectrogram(const Waveform& w, const FrontendConfig& cfg) {
    if (std::abs(w.sample_rate - cfg.sample_rate) > 1e-9) {
        throw InputError("expected " + std::to_string(cfg.sample_rate) + " Hz audio, got " +
                         std::to_string(w.sample_rate));
    }
    const auto mag = stft_magnitude(w, cfg.win_len, cfg.hop);
    const auto fb = MelFilterbank::build(cfg.n_mels, cfg.win_len / 2 + 1, cfg.sample_rate, cfg.f_min, cfg.f_max);
    return log_mel(mag, fb, cfg.log_floor, cfg.frames);
}

template <class T>
AudioEmbedder<T>::AudioEmbedder(ParamStore<T>& store, const std::string& name, const EmbedderConfig& cfg) : cfg_(cfg) {
    Conv3dOptions o;
    o.stride = {1, 2, 2};
    o.padding = {0, 1, 1};
    conv1_ = Conv3dLayer<T>(store, name + ".conv1", 1, cfg.conv1, {1, 3, 3}, o);
    conv2_ = Conv3dLayer<T>(store, name + ".conv2", cfg.conv1, cfg.conv2, {1, 3, 3}, o);
    // Time is pooled away; the reduced mel axis stays so pitch remains visible to the head.
    const int64_t mel_bins = conv_out_extent(conv_out_extent(cfg.mels, 3, 2, 1, 1), 3, 2, 1, 1);
    fc_ = LinearLayer<T>(store, name + ".fc", cfg.conv2 * mel_bins, cfg.dim);
}

template <class T>
Tensor<T> AudioEmbedder<T>::operator()(const Tensor<T>& spec) const {
    if (spec.rank() != 2 || spec.dim(0) != cfg_.frames || spec.dim(1) != cfg_.mels) {
        throw DimensionError("audio embedder expects a [" + std::to_string(cfg_.frames) + "," +
                             std::to_string(cfg_.mels) + "] spectrogram, got " + shape_str(spec.shape()));
    }
    auto x = reshape(spec, {1, 1, cfg_.frames, cfg_.mels});
    x = gelu(conv1_(x));
    x = gelu(conv2_(x));
    auto pooled = mean(x, {1, 2});
    return fc_(reshape(pooled, {pooled.size()}));
}

template class AudioEmbedder<float>;
template class AudioEmbedder<double>;
template class AudioEmbedder<long double>;

}  // namespace casp::audio
