#pragma once

#include <string>

#include "casp/nn.hpp"

namespace casp {

enum class AttentionMode { Quadratic, Linear, LinearNormalized, Bilinear };

AttentionMode parse_attention_mode(const std::string& s);
std::string to_string(AttentionMode m);

// Positive feature map phi(x) = gelu(x) + 0.2.
template <class T>
Tensor<T> kernel_phi(const Tensor<T>& x);

// Attention cores on channel-major tokens: Q, K, V are [C, L], result [C, L].
//
// softmax(Q^T K / scale) V^T, rows of the L x L similarity summing to 1.
template <class T>
Tensor<T> attention_quadratic(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, double scale);
// phi(Q)^T (phi(K) V^T), evaluated right to left; never forms an L x L matrix.
// With `normalized`, each token is divided by phi(Q_l) . sum_j phi(K_j).
template <class T>
Tensor<T> attention_linear(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, bool normalized = false);
// (phi(Q)^T phi(K)) V^T with the L x L kernel matrix materialized. Reference
// path for the linear form.
template <class T>
Tensor<T> attention_kernel_explicit(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v);

// Audio-visual interaction on one pyramid stage.
//
// Q = alpha(v), K = beta(a), V = gamma(v); out = v + delta(attend(Q, K, V)).
// The quadratic form scales the similarity by N = T*h*w. In Bilinear mode
// out = v + p3(p1(v) * p2(a)) with rank-r projections p1, p2 (no bias).
//
// The broadcast audio feature is identical at every site, so all key rows
// coincide. Quadratic and normalized-linear attention then reduce to a
// site-independent average of V and carry no audio information; the
// unnormalized linear form yields a per-site gate phi(Q_l) . phi(k) on sum(V).
template <class T>
class Avim {
public:
    Avim() = default;
    Avim(ParamStore<T>& store, const std::string& name, int64_t channels, AttentionMode mode,
         int64_t bilinear_rank = 0);

    // v, a: [C, T, h, w]
    Tensor<T> operator()(const Tensor<T>& v, const Tensor<T>& a) const;
    AttentionMode mode() const { return mode_; }

    Conv3dLayer<T>& alpha() { return alpha_; }
    Conv3dLayer<T>& beta() { return beta_; }
    Conv3dLayer<T>& gamma() { return gamma_; }
    Conv3dLayer<T>& delta() { return delta_; }
    Conv3dLayer<T>& p1() { return p1_; }
    Conv3dLayer<T>& p2() { return p2_; }
    Conv3dLayer<T>& p3() { return p3_; }

private:
    AttentionMode mode_ = AttentionMode::Linear;
    Conv3dLayer<T> alpha_, beta_, gamma_, delta_;
    Conv3dLayer<T> p1_, p2_, p3_;
};

}  // namespace casp
