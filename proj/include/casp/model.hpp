#pragma once

#include <array>
#include <string>
#include <vector>

#include "casp/audio.hpp"
#include "casp/avim.hpp"
#include "casp/cpc.hpp"
#include "casp/decoder.hpp"
#include "casp/encoders.hpp"

namespace casp {

struct ModelConfig {
    int64_t frames = 16;
    int64_t height = 64;
    int64_t width_px = 96;

    EncoderConfig encoder;
    audio::FrontendConfig frontend;
    audio::EmbedderConfig embedder;

    int64_t channels = 256;  // C, shared by ASPP, AVIM, CPC and the decoder input
    std::vector<int64_t> aspp_rates{1, 2, 4};
    int64_t aspp_branch_channels = 0;  // 0: same as `channels`

    // Visual-only ablation when false: no audio stream, no AVIM, no CPC.
    bool use_audio = true;
    AttentionMode attention = AttentionMode::Linear;
    std::array<bool, 4> avim_stages{true, true, true, true};
    int64_t bilinear_rank = 0;

    bool use_cpc = true;
    CpcConfig cpc;

    DecoderConfig decoder;

    void validate() const;
};

struct ForwardInfo {
    std::vector<double> cpc_trace;  // filled only when requested
};

// Full saliency network: video encoder -> ASPP -> (audio broadcast + AVIM per
// stage) -> CPC on the deepest stage -> SalDecoder.
template <class T>
class CaspNet {
public:
    CaspNet(ParamStore<T>& store, const ModelConfig& cfg);

    // clip [3, frames, height, width_px], spec [embedder.frames, embedder.mels] -> map [height, width_px].
    Tensor<T> operator()(const Tensor<T>& clip, const Tensor<T>& spec, ForwardInfo* info = nullptr) const;

    // Stage features handed to the decoder (after AVIM and CPC).
    std::vector<Tensor<T>> features(const Tensor<T>& clip, const Tensor<T>& spec, ForwardInfo* info = nullptr) const;

    const ModelConfig& config() const { return cfg_; }
    Cpc<T>& cpc() { return cpc_; }
    audio::AudioEmbedder<T>& embedder() { return embedder_; }

private:
    ModelConfig cfg_;
    VideoEncoder<T> encoder_;
    std::vector<Aspp<T>> aspp_;
    audio::AudioEmbedder<T> embedder_;
    std::vector<AudioBroadcast<T>> broadcast_;
    std::vector<Avim<T>> avim_;
    Cpc<T> cpc_;
    SalDecoder<T> decoder_;
};

// Converts between precisions by value (no gradient link).
template <class To, class From>
Tensor<To> cast(const Tensor<From>& x) {
    Buffer<To> out(x.data().begin(), x.data().end());
    return Tensor<To>(x.shape(), std::move(out));
}

}  // namespace casp
