#pragma once

#include <array>
#include <string>
#include <vector>

#include "casp/nn.hpp"

namespace casp {

struct EncoderConfig {
    int64_t stem_channels = 8;
    std::array<int64_t, 4> channels{16, 32, 64, 128};
    std::array<int64_t, 4> temporal_strides{1, 2, 2, 1};
    int64_t groups = 4;
};

// Toy 3D-conv video backbone. A stride-2 stem followed by four
// conv -> group norm -> gelu stages; stage i sits at 1/2^(i+1) resolution.
template <class T>
class VideoEncoder {
public:
    VideoEncoder() = default;
    VideoEncoder(ParamStore<T>& store, const std::string& name, const EncoderConfig& cfg);

    // clip [3, T_v, H_v, W_v] -> four stage features [C_i, T_i, H_v/2^(i+1), W_v/2^(i+1)]
    std::vector<Tensor<T>> operator()(const Tensor<T>& clip) const;
    const EncoderConfig& config() const { return cfg_; }

private:
    EncoderConfig cfg_;
    Conv3dLayer<T> stem_;
    std::array<Conv3dLayer<T>, 4> convs_;
    std::array<GroupNorm<T>, 4> norms_;
};

// Stage extents the encoder produces for a clip of the given size.
std::vector<Triple> pyramid_extents(const Triple& clip_extent, const EncoderConfig& cfg);

// Atrous spatial pyramid pooling: a 1x1x1 branch plus one 3x3x3 branch per
// rate (spatial dilation = rate, temporal dilation 1, same padding), each
// followed by gelu, concatenated and projected to `c_out` channels.
template <class T>
class Aspp {
public:
    Aspp() = default;
    Aspp(ParamStore<T>& store, const std::string& name, int64_t c_in, int64_t c_out, const std::vector<int64_t>& rates,
         int64_t branch_channels = 0);

    Tensor<T> operator()(const Tensor<T>& x) const;
    // Individual branch outputs after gelu, before concatenation.
    std::vector<Tensor<T>> branches(const Tensor<T>& x) const;

    std::vector<Conv3dLayer<T>>& branch_layers() { return branches_; }
    Conv3dLayer<T>& projection() { return proj_; }
    const Conv3dLayer<T>& projection() const { return proj_; }

private:
    std::vector<Conv3dLayer<T>> branches_;
    Conv3dLayer<T> proj_;
};

// Affine map of the clip-level audio embedding to the visual width, replicated
// at every site of a stage.
template <class T>
class AudioBroadcast {
public:
    AudioBroadcast() = default;
    AudioBroadcast(ParamStore<T>& store, const std::string& name, int64_t c_audio, int64_t c_out);

    // f_a [C_A] -> [C, t, h, w]
    Tensor<T> operator()(const Tensor<T>& f_a, const Triple& extent) const;
    LinearLayer<T>& affine() { return fc_; }

private:
    LinearLayer<T> fc_;
};

}  // namespace casp
