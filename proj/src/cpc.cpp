#include "casp/cpc.hpp"

namespace casp {

template <class T>
Cpc<T>::Cpc(ParamStore<T>& store, const std::string& name, const CpcConfig& cfg) : cfg_(cfg) {
    if (cfg.layers < 2) throw ConfigError("CPC needs at least 2 layers, got " + std::to_string(cfg.layers));
    if (!(cfg.alpha > 0)) throw ConfigError("CPC step size must be positive");
    if (cfg.iterations < 0) throw ConfigError("CPC iteration count must be >= 0");
    const int64_t c = cfg.channels;
    fuse_ = Conv3dLayer<T>(store, name + ".fuse", 2 * c, c, {1, 1, 1});
    const auto opt = layer_options();
    for (int64_t i = 1; i < cfg.layers; ++i) {
        const std::string idx = std::to_string(i);
        up_.emplace_back(store, name + ".phi" + idx, c, c, cfg.kernel, opt, true, 1.41421356);
        const auto& k = cfg.kernel;
        down_.push_back(store.add(name + ".theta" + idx + ".weight", {c, c, k[0], k[1], k[2]}, Init::FanIn));
    }
}

template <class T>
Conv3dOptions Cpc<T>::layer_options() const {
    Conv3dOptions o;
    o.stride = cfg_.stride;
    for (int a = 0; a < 3; ++a) o.padding[a] = cfg_.kernel[a] / 2;
    return o;
}

template <class T>
Tensor<T> Cpc<T>::fuse(const Tensor<T>& vis, const Tensor<T>& aud) const {
    if (vis.shape() != aud.shape()) {
        throw DimensionError("CPC: vis " + shape_str(vis.shape()) + " and aud " + shape_str(aud.shape()) +
                             " must share a shape");
    }
    return fuse_(concat(std::vector<Tensor<T>>{vis, aud}, 0));
}

template <class T>
CpcState<T> Cpc<T>::feedforward(const Tensor<T>& bottom) const {
    CpcState<T> s;
    s.mu.push_back(bottom);
    for (const auto& f : up_) {
        auto next = f(s.mu.back());
        if (cfg_.feedforward_activation == Activation::Gelu) next = gelu(next);
        s.mu.push_back(next);
    }
    return s;
}

template <class T>
Tensor<T> Cpc<T>::predict(const CpcState<T>& s, int64_t i) const {
    const auto& below = s.mu[static_cast<std::size_t>(i)].shape();
    return conv_transpose3d(s.mu[static_cast<std::size_t>(i + 1)], down_[static_cast<std::size_t>(i)], Tensor<T>{},
                            layer_options(), Triple{below[1], below[2], below[3]});
}

template <class T>
std::vector<Tensor<T>> Cpc<T>::errors(const CpcState<T>& s) const {
    std::vector<Tensor<T>> e;
    for (int64_t i = 0; i + 1 < static_cast<int64_t>(s.mu.size()); ++i) e.push_back(sub(s.mu[i], predict(s, i)));
    return e;
}

template <class T>
std::vector<Tensor<T>> Cpc<T>::error_gradients(const CpcState<T>& s) const {
    return gradients_from(s, errors(s));
}

template <class T>
std::vector<Tensor<T>> Cpc<T>::gradients_from(const CpcState<T>& s, const std::vector<Tensor<T>>& e) const {
    const auto layers = s.mu.size();
    std::vector<Tensor<T>> g(layers);
    for (std::size_t i = 0; i + 1 < layers; ++i) {
        // d eps_i / d mu_i
        g[i] = mul_scalar(e[i], static_cast<T>(2.0 / static_cast<double>(e[i].size())));
        if (i > 0) {
            // d eps_{i-1} / d mu_i through the transposed conv: its adjoint is conv3d with the same weight.
            auto back = conv3d(e[i - 1], down_[i - 1], layer_options());
            g[i] = sub(g[i], mul_scalar(back, static_cast<T>(2.0 / static_cast<double>(e[i - 1].size()))));
        }
    }
    g[layers - 1] = Tensor<T>::zeros(s.mu.back().shape());
    return g;
}

template <class T>
CpcState<T> Cpc<T>::iterate(const CpcState<T>& s) const {
    CpcState<T> next;
    const auto e = errors(s);
    for (const auto& ei : e) next.eps.push_back(mean_all(square(ei)).item());
    const auto g = gradients_from(s, e);
    next.mu = s.mu;
    for (std::size_t i = 0; i + 1 < s.mu.size(); ++i)
        next.mu[i] = sub(s.mu[i], mul_scalar(g[i], static_cast<T>(cfg_.alpha)));
    return next;
}

namespace {

template <class T>
double total_error(const std::vector<Tensor<T>>& e) {
    double t = 0;
    for (const auto& ei : e) {
        double acc = 0;
        for (T v : ei.data()) acc += static_cast<double>(v) * static_cast<double>(v);
        t += acc / static_cast<double>(ei.size());
    }
    return t;
}

}  // namespace

template <class T>
Tensor<T> Cpc<T>::infer(const Tensor<T>& vis, const Tensor<T>& aud, int64_t iterations,
                        std::vector<double>* trace) const {
    if (iterations < 0) throw ContractError("CPC iteration count must be >= 0, got " + std::to_string(iterations));
    auto state = feedforward(fuse(vis, aud));
    if (trace) trace->clear();
    for (int64_t n = 0; n < iterations; ++n) {
        if (cfg_.refresh && n > 0) {
            auto refreshed = feedforward(state.mu[0]);
            state.mu = std::move(refreshed.mu);
        }
        if (trace) {
            NoGradGuard guard;
            trace->push_back(total_error(errors(state)));
        }
        state = iterate(state);
    }
    if (trace) {
        NoGradGuard guard;
        trace->push_back(total_error(errors(state)));
    }
    return state.mu[0];
}

template class Cpc<float>;
template class Cpc<double>;
template class Cpc<long double>;

}  // namespace casp
