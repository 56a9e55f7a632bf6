#include "casp/model.hpp"

namespace casp {

void ModelConfig::validate() const {
    if (frames < 1) throw ConfigError("model.frames must be >= 1");
    if (height % 32 != 0 || width_px % 32 != 0 || height < 32 || width_px < 32) {
        throw ConfigError("model resolution " + std::to_string(height) + "x" + std::to_string(width_px) +
                          " must be a positive multiple of 32");
    }
    if (channels < 1) throw ConfigError("model.channels must be >= 1");
    if (aspp_rates.empty()) throw ConfigError("model.aspp_rates must not be empty");
    if (use_cpc && !use_audio) throw ConfigError("CPC needs the audio stream (use_audio = true)");
}

template <class T>
CaspNet<T>::CaspNet(ParamStore<T>& store, const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    cfg_.cpc.channels = cfg_.channels;
    // Short clips can end with fewer than `temporal` frames at the deepest stage.
    cfg_.decoder.temporal = std::min(cfg_.decoder.temporal, pyramid_extents({cfg_.frames, cfg_.height, cfg_.width_px},
                                                                            cfg_.encoder)[3][0]);
    encoder_ = VideoEncoder<T>(store, "encoder", cfg_.encoder);
    for (int i = 0; i < 4; ++i) {
        const auto s = std::to_string(i + 1);
        aspp_.emplace_back(store, "aspp" + s, cfg_.encoder.channels[i], cfg_.channels, cfg_.aspp_rates,
                           cfg_.aspp_branch_channels);
    }
    if (cfg_.use_audio) {
        embedder_ = audio::AudioEmbedder<T>(store, "audio", cfg_.embedder);
        for (int i = 0; i < 4; ++i) {
            const auto s = std::to_string(i + 1);
            broadcast_.emplace_back(store, "audio_proj" + s, cfg_.embedder.dim, cfg_.channels);
            avim_.push_back(cfg_.avim_stages[i]
                                ? Avim<T>(store, "avim" + s, cfg_.channels, cfg_.attention, cfg_.bilinear_rank)
                                : Avim<T>());
        }
        if (cfg_.use_cpc) cpc_ = Cpc<T>(store, "cpc", cfg_.cpc);
    }
    const int64_t c = cfg_.channels;
    decoder_ = SalDecoder<T>(store, "decoder", {c, c, c, c}, cfg_.decoder);
}

template <class T>
std::vector<Tensor<T>> CaspNet<T>::features(const Tensor<T>& clip, const Tensor<T>& spec, ForwardInfo* info) const {
    if (clip.rank() != 4 || clip.dim(0) != 3 || clip.dim(1) != cfg_.frames || clip.dim(2) != cfg_.height ||
        clip.dim(3) != cfg_.width_px) {
        throw DimensionError("model expects a clip of shape [3," + std::to_string(cfg_.frames) + "," +
                             std::to_string(cfg_.height) + "," + std::to_string(cfg_.width_px) + "], got " +
                             shape_str(clip.shape()));
    }
    auto stages = encoder_(clip);
    std::vector<Tensor<T>> v(4), audio_maps(4);
    for (int i = 0; i < 4; ++i) v[i] = aspp_[i](stages[i]);
    if (!cfg_.use_audio) return v;

    const auto f_a = embedder_(spec);
    for (int i = 0; i < 4; ++i) {
        audio_maps[i] = broadcast_[i](f_a, {v[i].dim(1), v[i].dim(2), v[i].dim(3)});
        if (cfg_.avim_stages[i]) v[i] = avim_[i](v[i], audio_maps[i]);
    }
    if (cfg_.use_cpc) {
        v[3] = cpc_.infer(v[3], audio_maps[3], cfg_.cpc.iterations, info ? &info->cpc_trace : nullptr);
    }
    return v;
}

template <class T>
Tensor<T> CaspNet<T>::operator()(const Tensor<T>& clip, const Tensor<T>& spec, ForwardInfo* info) const {
    return decoder_(features(clip, spec, info), {cfg_.height, cfg_.width_px});
}

template class CaspNet<float>;
template class CaspNet<double>;
template class CaspNet<long double>;

}  // namespace casp
