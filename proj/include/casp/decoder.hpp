#pragma once

#include <array>
#include <string>
#include <vector>

#include "casp/nn.hpp"

namespace casp {

struct DecoderConfig {
    int64_t width = 256;        // output channels of each feature-generation stage
    int64_t growth = 16;
    int64_t dense_layers = 2;
    int64_t temporal = 4;       // common temporal extent inside the decoder
    int64_t groups = 4;
};

// Averages non-overlapping temporal windows so x[C, T, h, w] becomes
// [C, target, h, w]. T must be a multiple of target.
template <class T>
Tensor<T> temporal_align(const Tensor<T>& x, int64_t target);

// Densely connected layers (norm -> relu -> 1x3x3 conv), each fed the
// concatenation of the block input and every earlier layer output. Output has
// in + layers * growth channels.
template <class T>
class DenseBlock {
public:
    DenseBlock() = default;
    DenseBlock(ParamStore<T>& store, const std::string& name, int64_t c_in, const DecoderConfig& cfg);

    Tensor<T> operator()(const Tensor<T>& x) const;
    int64_t out_channels() const { return out_channels_; }
    std::vector<Conv3dLayer<T>>& convs() { return convs_; }
    std::vector<GroupNorm<T>>& norms() { return norms_; }

private:
    int64_t temporal_ = 4;
    int64_t out_channels_ = 0;
    std::vector<GroupNorm<T>> norms_;
    std::vector<Conv3dLayer<T>> convs_;
};

// Adds the deeper decoder output to the current one after bringing it to the
// current spatial size and channel width.
template <class T>
class FusionBlock {
public:
    FusionBlock() = default;
    // Without `project`, mismatched widths are rejected.
    FusionBlock(ParamStore<T>& store, const std::string& name, int64_t prev_channels, int64_t cur_channels,
                bool project = true);

    Tensor<T> operator()(const Tensor<T>& prev, const Tensor<T>& cur) const;
    bool projects() const { return project_; }
    Conv3dLayer<T>& projection() { return proj_; }

private:
    bool project_ = true;
    Conv3dLayer<T> proj_;
};

// norm -> relu -> 3x3x3 conv.
template <class T>
class FeatureGeneration {
public:
    FeatureGeneration() = default;
    FeatureGeneration(ParamStore<T>& store, const std::string& name, int64_t c_in, int64_t c_out, int64_t groups);

    Tensor<T> operator()(const Tensor<T>& x) const { return conv_(relu(norm_(x))); }
    Conv3dLayer<T>& conv() { return conv_; }
    GroupNorm<T>& norm() { return norm_; }

private:
    GroupNorm<T> norm_;
    Conv3dLayer<T> conv_;
};

// Four-block saliency decoder. Block 4 consumes the deepest feature; blocks
// 3..1 fuse the previous block output with their own dense features. Block 1
// averages over time, maps to one channel, upsamples to the clip size and
// applies a sigmoid.
template <class T>
class SalDecoder {
public:
    SalDecoder() = default;
    SalDecoder(ParamStore<T>& store, const std::string& name, const std::array<int64_t, 4>& in_channels,
               const DecoderConfig& cfg);

    // features: four stage tensors obeying the /4 ... /32 pyramid law for
    // `out_hw`. Returns [H, W] with values in [0, 1].
    Tensor<T> operator()(const std::vector<Tensor<T>>& features, const std::array<int64_t, 2>& out_hw) const;

    DenseBlock<T>& dense(int i) { return dense_[i]; }
    FusionBlock<T>& fusion(int i) { return fusion_[i]; }
    FeatureGeneration<T>& generation(int i) { return gen_[i]; }
    Conv3dLayer<T>& head() { return head_; }

private:
    DecoderConfig cfg_;
    std::array<DenseBlock<T>, 4> dense_;
    std::array<FusionBlock<T>, 4> fusion_;  // index 3 unused
    std::array<FeatureGeneration<T>, 4> gen_;
    Conv3dLayer<T> head_;
};

// Parameters of a UNet-style decoder with the same stage widths: at each level
// two 3x3x3 convs over concat(upsampled deeper output, skip), plus a 1x1x1
// head. Built only to compare parameter counts.
template <class T>
class UnetDecoderStub {
public:
    UnetDecoderStub(ParamStore<T>& store, const std::string& name, const std::array<int64_t, 4>& in_channels,
                    int64_t width);
};

}  // namespace casp
