#include "casp/encoders.hpp"

#include <cmath>

namespace casp {

namespace {

constexpr double kGeluGain = 1.41421356;

void check_clip(const Shape& s) {
    if (s.size() != 4 || s[0] != 3) {
        throw DimensionError("video clip must be [3, T, H, W], got " + shape_str(s));
    }
    if (s[2] % 32 != 0 || s[3] % 32 != 0) {
        throw DimensionError("clip height and width must be divisible by 32, got " + std::to_string(s[2]) + "x" +
                             std::to_string(s[3]));
    }
}

}  // namespace

std::vector<Triple> pyramid_extents(const Triple& clip_extent, const EncoderConfig& cfg) {
    std::vector<Triple> out;
    int64_t t = clip_extent[0];
    for (int i = 0; i < 4; ++i) {
        t = conv_out_extent(t, 3, cfg.temporal_strides[i], 1, 1);
        out.push_back({t, clip_extent[1] >> (i + 2), clip_extent[2] >> (i + 2)});
    }
    return out;
}

template <class T>
VideoEncoder<T>::VideoEncoder(ParamStore<T>& store, const std::string& name, const EncoderConfig& cfg) : cfg_(cfg) {
    Conv3dOptions stem_opt;
    stem_opt.stride = {1, 2, 2};
    stem_opt.padding = {1, 1, 1};
    stem_ = Conv3dLayer<T>(store, name + ".stem", 3, cfg.stem_channels, {3, 3, 3}, stem_opt, true, kGeluGain);
    int64_t c_in = cfg.stem_channels;
    for (int i = 0; i < 4; ++i) {
        Conv3dOptions o;
        o.stride = {cfg.temporal_strides[i], 2, 2};
        o.padding = {1, 1, 1};
        const std::string stage = name + ".stage" + std::to_string(i + 1);
        convs_[i] = Conv3dLayer<T>(store, stage + ".conv", c_in, cfg.channels[i], {3, 3, 3}, o, true, kGeluGain);
        norms_[i] = GroupNorm<T>(store, stage + ".norm", cfg.channels[i], cfg.groups);
        c_in = cfg.channels[i];
    }
}

template <class T>
std::vector<Tensor<T>> VideoEncoder<T>::operator()(const Tensor<T>& clip) const {
    check_clip(clip.shape());
    auto x = gelu(stem_(clip));
    std::vector<Tensor<T>> stages;
    for (int i = 0; i < 4; ++i) {
        x = gelu(norms_[i](convs_[i](x)));
        stages.push_back(x);
    }
    return stages;
}

template <class T>
Aspp<T>::Aspp(ParamStore<T>& store, const std::string& name, int64_t c_in, int64_t c_out,
              const std::vector<int64_t>& rates, int64_t branch_channels) {
    if (branch_channels <= 0) branch_channels = c_out;
    branches_.emplace_back(store, name + ".b0", c_in, branch_channels, Triple{1, 1, 1}, Conv3dOptions{}, true,
                           kGeluGain);
    for (std::size_t i = 0; i < rates.size(); ++i) {
        const int64_t r = rates[i];
        if (r < 1) throw ConfigError("ASPP rate must be >= 1, got " + std::to_string(r));
        Conv3dOptions o;
        o.dilation = {1, r, r};
        o.padding = {1, r, r};
        branches_.emplace_back(store, name + ".b" + std::to_string(i + 1), c_in, branch_channels, Triple{3, 3, 3}, o,
                               true, kGeluGain);
    }
    proj_ = Conv3dLayer<T>(store, name + ".proj", branch_channels * static_cast<int64_t>(branches_.size()), c_out,
                           {1, 1, 1});
}

template <class T>
std::vector<Tensor<T>> Aspp<T>::branches(const Tensor<T>& x) const {
    std::vector<Tensor<T>> outs;
    outs.reserve(branches_.size());
    for (const auto& b : branches_) outs.push_back(gelu(b(x)));
    return outs;
}

template <class T>
Tensor<T> Aspp<T>::operator()(const Tensor<T>& x) const {
    return proj_(concat(branches(x), 0));
}

template <class T>
AudioBroadcast<T>::AudioBroadcast(ParamStore<T>& store, const std::string& name, int64_t c_audio, int64_t c_out)
    : fc_(store, name, c_audio, c_out) {}

template <class T>
Tensor<T> AudioBroadcast<T>::operator()(const Tensor<T>& f_a, const Triple& extent) const {
    auto v = fc_(f_a);
    const int64_t c = v.dim(0);
    return expand(reshape(v, {c, 1, 1, 1}), {c, extent[0], extent[1], extent[2]});
}

template class VideoEncoder<float>;
template class VideoEncoder<double>;
template class VideoEncoder<long double>;
template class Aspp<float>;
template class Aspp<double>;
template class Aspp<long double>;
template class AudioBroadcast<float>;
template class AudioBroadcast<double>;
template class AudioBroadcast<long double>;

}  // namespace casp
