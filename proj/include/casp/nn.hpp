#pragma once

#include <string>
#include <utility>
#include <vector>

#include "casp/ops.hpp"
#include "casp/rng.hpp"

namespace casp {

enum class Init { Zeros, Ones, FanIn, Normal };

// Named, ordered parameter registry. Each tensor is drawn from its own RNG
// stream keyed by (seed, name), so adding a module never perturbs the others.
template <class T>
class ParamStore {
public:
    explicit ParamStore(uint64_t seed = 0) : seed_(seed) {}

    // `scale` multiplies the std of FanIn/Normal draws.
    Tensor<T> add(const std::string& name, const Shape& shape, Init init, double scale = 1.0);

    const std::vector<std::pair<std::string, Tensor<T>>>& items() const { return items_; }
    std::vector<std::pair<std::string, Tensor<T>>>& items() { return items_; }
    Tensor<T> get(const std::string& name) const;
    bool contains(const std::string& name) const;
    int64_t parameter_count() const;
    void zero_grad();
    uint64_t seed() const { return seed_; }

private:
    uint64_t seed_;
    std::vector<std::pair<std::string, Tensor<T>>> items_;
};

template <class T>
struct Conv3dLayer {
    Tensor<T> weight, bias;
    Conv3dOptions opt;

    Conv3dLayer() = default;
    // `kernel` per axis; weight init scaled by 1/sqrt(fan_in) times `gain`.
    Conv3dLayer(ParamStore<T>& store, const std::string& name, int64_t c_in, int64_t c_out, Triple kernel,
                Conv3dOptions opt = {}, bool with_bias = true, double gain = 1.0);
    Tensor<T> operator()(const Tensor<T>& x) const { return conv3d(x, weight, bias, opt); }
    int64_t in_channels() const { return weight.dim(1); }
    int64_t out_channels() const { return weight.dim(0); }
};

template <class T>
struct LinearLayer {
    Tensor<T> weight, bias;  // [out, in], [out]

    LinearLayer() = default;
    LinearLayer(ParamStore<T>& store, const std::string& name, int64_t in, int64_t out, double gain = 1.0);
    // v: [in] -> [out]
    Tensor<T> operator()(const Tensor<T>& v) const;
};

// Normalizes [C,T,H,W] over (channel group, T, H, W) per sample, then applies
// a per-channel affine map.
template <class T>
struct GroupNorm {
    int64_t groups = 1;
    Tensor<T> gamma, beta;
    T eps = T(1e-5);

    GroupNorm() = default;
    GroupNorm(ParamStore<T>& store, const std::string& name, int64_t channels, int64_t groups);
    Tensor<T> operator()(const Tensor<T>& x) const;
};

// Adds bias[C] along axis 0 of x[C,...].
template <class T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& bias);
// Multiplies x[C,...] by scale[C] along axis 0.
template <class T>
Tensor<T> mul_channel(const Tensor<T>& x, const Tensor<T>& scale);

}  // namespace casp
