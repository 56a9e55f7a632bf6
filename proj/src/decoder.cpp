#include "casp/decoder.hpp"

namespace casp {

template <class T>
Tensor<T> temporal_align(const Tensor<T>& x, int64_t target) {
    if (x.rank() != 4) throw DimensionError("temporal_align expects [C, T, h, w], got " + shape_str(x.shape()));
    const int64_t t = x.dim(1);
    if (t == target) return x;
    if (target < 1 || t % target != 0) {
        throw DimensionError("cannot align temporal extent " + std::to_string(t) + " to " + std::to_string(target));
    }
    auto grouped = reshape(x, {x.dim(0), target, t / target, x.dim(2), x.dim(3)});
    return mean(grouped, {2});
}

template <class T>
DenseBlock<T>::DenseBlock(ParamStore<T>& store, const std::string& name, int64_t c_in, const DecoderConfig& cfg)
    : temporal_(cfg.temporal), out_channels_(c_in) {
    if (cfg.growth <= 0) return;
    Conv3dOptions o;
    o.padding = {0, 1, 1};
    for (int64_t l = 0; l < cfg.dense_layers; ++l) {
        const std::string layer = name + ".layer" + std::to_string(l + 1);
        norms_.emplace_back(store, layer + ".norm", out_channels_, cfg.groups);
        convs_.emplace_back(store, layer + ".conv", out_channels_, cfg.growth, Triple{1, 3, 3}, o, true, 1.41421356);
        out_channels_ += cfg.growth;
    }
}

template <class T>
Tensor<T> DenseBlock<T>::operator()(const Tensor<T>& x) const {
    std::vector<Tensor<T>> parts{temporal_align(x, temporal_)};
    for (std::size_t l = 0; l < convs_.size(); ++l) {
        auto in = parts.size() == 1 ? parts[0] : concat(parts, 0);
        parts.push_back(convs_[l](relu(norms_[l](in))));
    }
    return parts.size() == 1 ? parts[0] : concat(parts, 0);
}

template <class T>
FusionBlock<T>::FusionBlock(ParamStore<T>& store, const std::string& name, int64_t prev_channels,
                            int64_t cur_channels, bool project)
    : project_(project) {
    if (!project) {
        if (prev_channels != cur_channels) {
            throw ConfigError("fusion of " + std::to_string(prev_channels) + " into " + std::to_string(cur_channels) +
                              " channels requires a projection");
        }
        return;
    }
    proj_ = Conv3dLayer<T>(store, name + ".proj", prev_channels, cur_channels, {1, 1, 1});
}

template <class T>
Tensor<T> FusionBlock<T>::operator()(const Tensor<T>& prev, const Tensor<T>& cur) const {
    if (prev.rank() != 4 || cur.rank() != 4 || prev.dim(1) != cur.dim(1)) {
        throw DimensionError("fusion: incompatible inputs " + shape_str(prev.shape()) + " and " +
                             shape_str(cur.shape()));
    }
    // The pointwise projection commutes with trilinear resampling (weights sum
    // to one), so it runs at the coarser resolution.
    auto p = project_ ? proj_(prev) : prev;
    if (p.dim(0) != cur.dim(0)) {
        throw DimensionError("fusion: " + std::to_string(p.dim(0)) + " channels cannot be added to " +
                             std::to_string(cur.dim(0)));
    }
    return add(upsample_trilinear(p, {cur.dim(1), cur.dim(2), cur.dim(3)}), cur);
}

template <class T>
FeatureGeneration<T>::FeatureGeneration(ParamStore<T>& store, const std::string& name, int64_t c_in, int64_t c_out,
                                        int64_t groups)
    : norm_(store, name + ".norm", c_in, groups) {
    Conv3dOptions o;
    o.padding = {1, 1, 1};
    conv_ = Conv3dLayer<T>(store, name + ".conv", c_in, c_out, {3, 3, 3}, o, true, 1.41421356);
}

template <class T>
SalDecoder<T>::SalDecoder(ParamStore<T>& store, const std::string& name, const std::array<int64_t, 4>& in_channels,
                          const DecoderConfig& cfg)
    : cfg_(cfg) {
    for (int i = 3; i >= 0; --i) {
        const std::string block = name + ".dec" + std::to_string(i + 1);
        dense_[i] = DenseBlock<T>(store, block + ".dense", in_channels[i], cfg);
        const int64_t cur = dense_[i].out_channels();
        if (i < 3) fusion_[i] = FusionBlock<T>(store, block + ".fusion", cfg.width, cur);
        gen_[i] = FeatureGeneration<T>(store, block + ".gen", cur, cfg.width, cfg.groups);
    }
    Conv3dOptions o;
    o.padding = {0, 1, 1};
    head_ = Conv3dLayer<T>(store, name + ".dec1.head", cfg.width, 1, {1, 3, 3}, o);
}

template <class T>
Tensor<T> SalDecoder<T>::operator()(const std::vector<Tensor<T>>& features,
                                    const std::array<int64_t, 2>& out_hw) const {
    if (features.size() != 4) throw DimensionError("decoder expects 4 stage features");
    for (int i = 0; i < 4; ++i) {
        const auto& f = features[i];
        const int64_t div = int64_t{1} << (i + 2);
        if (f.rank() != 4 || out_hw[0] % div != 0 || out_hw[1] % div != 0 || f.dim(2) != out_hw[0] / div ||
            f.dim(3) != out_hw[1] / div) {
            throw DimensionError("decoder stage " + std::to_string(i + 1) + " feature " + shape_str(f.shape()) +
                                 " does not match a " + std::to_string(out_hw[0]) + "x" + std::to_string(out_hw[1]) +
                                 " output at 1/" + std::to_string(div) + " scale");
        }
    }
    Tensor<T> x;
    for (int i = 3; i >= 0; --i) {
        auto cur = dense_[i](features[i]);
        if (i < 3) cur = fusion_[i](x, cur);
        x = gen_[i](cur);
    }
    auto collapsed = mean(x, {1}, true);  // [D, 1, h1, w1]
    auto logits = upsample_trilinear(head_(collapsed), {1, out_hw[0], out_hw[1]});
    return reshape(sigmoid(logits), {out_hw[0], out_hw[1]});
}

template <class T>
UnetDecoderStub<T>::UnetDecoderStub(ParamStore<T>& store, const std::string& name,
                                    const std::array<int64_t, 4>& in_channels, int64_t width) {
    Conv3dOptions o;
    o.padding = {1, 1, 1};
    for (int i = 3; i >= 0; --i) {
        const std::string level = name + ".level" + std::to_string(i + 1);
        const int64_t c_in = in_channels[i] + (i < 3 ? width : 0);
        Conv3dLayer<T>(store, level + ".conv1", c_in, width, {3, 3, 3}, o);
        Conv3dLayer<T>(store, level + ".conv2", width, width, {3, 3, 3}, o);
    }
    Conv3dLayer<T>(store, name + ".head", width, 1, {1, 1, 1});
}

template Tensor<float> temporal_align(const Tensor<float>&, int64_t);
template Tensor<double> temporal_align(const Tensor<double>&, int64_t);
template Tensor<long double> temporal_align(const Tensor<long double>&, int64_t);
template class DenseBlock<float>;
template class DenseBlock<double>;
template class DenseBlock<long double>;
template class FusionBlock<float>;
template class FusionBlock<double>;
template class FusionBlock<long double>;
template class FeatureGeneration<float>;
template class FeatureGeneration<double>;
template class FeatureGeneration<long double>;
template class SalDecoder<float>;
template class SalDecoder<double>;
template class SalDecoder<long double>;
template class UnetDecoderStub<float>;
template class UnetDecoderStub<double>;
template class UnetDecoderStub<long double>;

}  // namespace casp
