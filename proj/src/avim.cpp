#include "casp/avim.hpp"

namespace casp {

AttentionMode parse_attention_mode(const std::string& s) {
    if (s == "quadratic") return AttentionMode::Quadratic;
    if (s == "linear") return AttentionMode::Linear;
    if (s == "linear_normalized") return AttentionMode::LinearNormalized;
    if (s == "bilinear") return AttentionMode::Bilinear;
    throw ConfigError("unknown attention mode '" + s + "' (quadratic, linear, linear_normalized, bilinear)");
}

std::string to_string(AttentionMode m) {
    switch (m) {
    case AttentionMode::Quadratic: return "quadratic";
    case AttentionMode::Linear: return "linear";
    case AttentionMode::LinearNormalized: return "linear_normalized";
    case AttentionMode::Bilinear: return "bilinear";
    }
    return "?";
}

template <class T>
Tensor<T> kernel_phi(const Tensor<T>& x) {
    return add_scalar(gelu(x), T(0.2));
}

namespace {

template <class T>
void check_tokens(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
    if (q.rank() != 2 || k.shape() != q.shape() || v.shape() != q.shape()) {
        throw DimensionError("attention expects matching [C, L] tokens, got Q " + shape_str(q.shape()) + ", K " +
                             shape_str(k.shape()) + ", V " + shape_str(v.shape()));
    }
}

}  // namespace

template <class T>
Tensor<T> attention_quadratic(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, double scale) {
    check_tokens(q, k, v);
    auto sim = mul_scalar(matmul(transpose2d(q), k), static_cast<T>(1.0 / scale));  // [L, L]
    auto weights = softmax(sim, 1);
    return transpose2d(matmul(weights, transpose2d(v)));
}

template <class T>
Tensor<T> attention_linear(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, bool normalized) {
    check_tokens(q, k, v);
    auto pq = kernel_phi(q);
    auto pk = kernel_phi(k);
    auto kv = matmul(pk, transpose2d(v));       // [C, C]
    auto out = matmul(transpose2d(kv), pq);     // [C, L]
    if (!normalized) return out;
    auto ksum = sum(pk, {1}, true);             // [C, 1]
    auto z = matmul(transpose2d(ksum), pq);     // [1, L]
    return div(out, expand(z, out.shape()));
}

template <class T>
Tensor<T> attention_kernel_explicit(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
    check_tokens(q, k, v);
    auto a = matmul(transpose2d(kernel_phi(q)), kernel_phi(k));  // [L, L]
    return transpose2d(matmul(a, transpose2d(v)));
}

template <class T>
Avim<T>::Avim(ParamStore<T>& store, const std::string& name, int64_t c, AttentionMode mode, int64_t rank)
    : mode_(mode) {
    const Triple one{1, 1, 1};
    if (mode == AttentionMode::Bilinear) {
        if (rank <= 0) rank = c;
        p1_ = Conv3dLayer<T>(store, name + ".p1", c, rank, one, {}, false);
        p2_ = Conv3dLayer<T>(store, name + ".p2", c, rank, one, {}, false);
        p3_ = Conv3dLayer<T>(store, name + ".p3", rank, c, one, {}, true, 0.5);
        return;
    }
    alpha_ = Conv3dLayer<T>(store, name + ".alpha", c, c, one);
    beta_ = Conv3dLayer<T>(store, name + ".beta", c, c, one);
    gamma_ = Conv3dLayer<T>(store, name + ".gamma", c, c, one);
    delta_ = Conv3dLayer<T>(store, name + ".delta", c, c, one, {}, false, 0.5);
}

template <class T>
Tensor<T> Avim<T>::operator()(const Tensor<T>& v, const Tensor<T>& a) const {
    if (v.rank() != 4 || a.shape() != v.shape()) {
        throw DimensionError("AVIM: visual " + shape_str(v.shape()) + " and audio " + shape_str(a.shape()) +
                             " features must share a [C, T, h, w] shape");
    }
    if (mode_ == AttentionMode::Bilinear) return add(v, p3_(mul(p1_(v), p2_(a))));

    const int64_t c = v.dim(0), tokens = v.size() / c;
    auto q = reshape(alpha_(v), {c, tokens});
    auto k = reshape(beta_(a), {c, tokens});
    auto val = reshape(gamma_(v), {c, tokens});
    Tensor<T> attended;
    switch (mode_) {
    case AttentionMode::Quadratic:
        attended = attention_quadratic(q, k, val, static_cast<double>(tokens));
        break;
    case AttentionMode::Linear:
        attended = attention_linear(q, k, val, false);
        break;
    default:
        attended = attention_linear(q, k, val, true);
        break;
    }
    return add(v, delta_(reshape(attended, v.shape())));
}

template Tensor<float> kernel_phi(const Tensor<float>&);
template Tensor<double> kernel_phi(const Tensor<double>&);
template Tensor<long double> kernel_phi(const Tensor<long double>&);
template Tensor<float> attention_quadratic(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, double);
template Tensor<double> attention_quadratic(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                                            double);
template Tensor<long double> attention_quadratic(const Tensor<long double>&, const Tensor<long double>&, const Tensor<long double>&,
                                            double);
template Tensor<float> attention_linear(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, bool);
template Tensor<double> attention_linear(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&, bool);
template Tensor<long double> attention_linear(const Tensor<long double>&, const Tensor<long double>&, const Tensor<long double>&, bool);
template Tensor<float> attention_kernel_explicit(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> attention_kernel_explicit(const Tensor<double>&, const Tensor<double>&,
                                                  const Tensor<double>&);
template Tensor<long double> attention_kernel_explicit(const Tensor<long double>&, const Tensor<long double>&,
                                                  const Tensor<long double>&);
template class Avim<float>;
template class Avim<double>;
template class Avim<long double>;

}  // namespace casp
