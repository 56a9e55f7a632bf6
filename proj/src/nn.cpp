#include "casp/nn.hpp"

#include <cmath>

namespace casp {

template <class T>
Tensor<T> ParamStore<T>::add(const std::string& name, const Shape& shape, Init init, double scale) {
    if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
    Buffer<T> values(static_cast<std::size_t>(numel(shape)));
    switch (init) {
    case Init::Zeros:
        std::fill(values.begin(), values.end(), T(0));
        break;
    case Init::Ones:
        std::fill(values.begin(), values.end(), T(1));
        break;
    case Init::FanIn:
    case Init::Normal: {
        double stddev = scale;
        if (init == Init::FanIn) {
            int64_t fan_in = 1;
            for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
            stddev = scale / std::sqrt(static_cast<double>(fan_in));
        }
        Rng rng(seed_, name);
        for (auto& v : values) v = static_cast<T>(rng.normal(0.0, stddev));
        break;
    }
    }
    Tensor<T> t(shape, std::move(values));
    t.set_requires_grad(true);
    items_.emplace_back(name, t);
    return t;
}

template <class T>
Tensor<T> ParamStore<T>::get(const std::string& name) const {
    for (const auto& [n, t] : items_)
        if (n == name) return t;
    throw ConfigError("unknown parameter: " + name);
}

template <class T>
bool ParamStore<T>::contains(const std::string& name) const {
    for (const auto& item : items_)
        if (item.first == name) return true;
    return false;
}

template <class T>
int64_t ParamStore<T>::parameter_count() const {
    int64_t n = 0;
    for (const auto& item : items_) n += item.second.size();
    return n;
}

template <class T>
void ParamStore<T>::zero_grad() {
    for (auto& item : items_) item.second.zero_grad();
}

template <class T>
Conv3dLayer<T>::Conv3dLayer(ParamStore<T>& store, const std::string& name, int64_t c_in, int64_t c_out,
                            Triple kernel, Conv3dOptions o, bool with_bias, double gain)
    : opt(o) {
    weight = store.add(name + ".weight", {c_out, c_in, kernel[0], kernel[1], kernel[2]}, Init::FanIn, gain);
    if (with_bias) bias = store.add(name + ".bias", {c_out}, Init::Zeros);
}

template <class T>
LinearLayer<T>::LinearLayer(ParamStore<T>& store, const std::string& name, int64_t in, int64_t out, double gain) {
    weight = store.add(name + ".weight", {out, in}, Init::FanIn, gain);
    bias = store.add(name + ".bias", {out}, Init::Zeros);
}

template <class T>
Tensor<T> LinearLayer<T>::operator()(const Tensor<T>& v) const {
    if (v.rank() != 1 || v.dim(0) != weight.dim(1)) {
        throw DimensionError("linear: input " + shape_str(v.shape()) + " does not match weight " +
                             shape_str(weight.shape()));
    }
    auto y = matmul(weight, reshape(v, {v.dim(0), 1}));
    return add(reshape(y, {weight.dim(0)}), bias);
}

template <class T>
GroupNorm<T>::GroupNorm(ParamStore<T>& store, const std::string& name, int64_t channels, int64_t g) : groups(g) {
    if (g < 1 || channels % g != 0) {
        throw ConfigError("group norm: " + std::to_string(channels) + " channels not divisible into " +
                          std::to_string(g) + " groups");
    }
    gamma = store.add(name + ".gamma", {channels}, Init::Ones);
    beta = store.add(name + ".beta", {channels}, Init::Zeros);
}

template <class T>
Tensor<T> GroupNorm<T>::operator()(const Tensor<T>& x) const {
    const auto& s = x.shape();
    const int64_t C = s[0];
    if (C != gamma.dim(0)) throw DimensionError("group norm: channel mismatch on " + shape_str(s));
    const int64_t per = x.size() / C;
    auto g = reshape(x, {groups, (C / groups) * per});
    auto mu = mean(g, {1}, true);
    auto centered = sub(g, expand(mu, g.shape()));
    auto var = mean(square(centered), {1}, true);
    auto inv = div(Tensor<T>::full(var.shape(), T(1)), sqrt(add_scalar(var, eps)));
    auto normed = reshape(mul(centered, expand(inv, g.shape())), s);
    return add_channel_bias(mul_channel(normed, gamma), beta);
}

template <class T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& bias) {
    Shape bs(x.shape().size(), 1);
    bs[0] = x.dim(0);
    return add(x, expand(reshape(bias, bs), x.shape()));
}

template <class T>
Tensor<T> mul_channel(const Tensor<T>& x, const Tensor<T>& scale) {
    Shape bs(x.shape().size(), 1);
    bs[0] = x.dim(0);
    return mul(x, expand(reshape(scale, bs), x.shape()));
}

template class ParamStore<float>;
template class ParamStore<double>;
template class ParamStore<long double>;
template struct Conv3dLayer<float>;
template struct Conv3dLayer<double>;
template struct Conv3dLayer<long double>;
template struct LinearLayer<float>;
template struct LinearLayer<double>;
template struct LinearLayer<long double>;
template struct GroupNorm<float>;
template struct GroupNorm<double>;
template struct GroupNorm<long double>;
template Tensor<float> add_channel_bias(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> add_channel_bias(const Tensor<double>&, const Tensor<double>&);
template Tensor<long double> add_channel_bias(const Tensor<long double>&, const Tensor<long double>&);
template Tensor<float> mul_channel(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> mul_channel(const Tensor<double>&, const Tensor<double>&);
template Tensor<long double> mul_channel(const Tensor<long double>&, const Tensor<long double>&);

}  // namespace casp
