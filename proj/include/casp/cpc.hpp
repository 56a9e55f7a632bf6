#pragma once

#include <string>
#include <vector>

#include "casp/nn.hpp"

namespace casp {

enum class Activation { Identity, Gelu };

struct CpcConfig {
    int64_t channels = 256;
    int64_t layers = 3;         // number of variable units, mu_0 .. mu_{L-1}
    int64_t iterations = 3;     // N
    double alpha = 0.1;         // inference step size
    bool refresh = false;       // re-run the feedforward pass between iterations
    Triple kernel{3, 3, 3};
    Triple stride{1, 2, 2};
    Activation feedforward_activation = Activation::Gelu;
};

template <class T>
struct CpcState {
    std::vector<Tensor<T>> mu;   // L activities, mu[0] is the fused input
    std::vector<T> eps;          // L-1 prediction errors from the latest iteration
};

// Hierarchical predictive coding over a stack of variable units.
//
// Bottom-up:  mu_i = f_phi_i(mu_{i-1})            (strided conv, optional gelu)
// Top-down:   pred_{i} = f_theta_{i+1}(mu_{i+1})  (transposed conv, linear)
// Errors:     eps_i = mean((mu_i - pred_i)^2),  i = 0 .. L-2
// Inference:  mu_i -= alpha * d(sum eps)/d(mu_i) for every non-top layer; the
//             top layer keeps its feedforward value.
//
// All steps are ordinary graph operations, so the whole inference is
// differentiable with respect to the parameters and the input.
template <class T>
class Cpc {
public:
    Cpc() = default;
    Cpc(ParamStore<T>& store, const std::string& name, const CpcConfig& cfg);

    // mu_0 = 1x1x1 projection of concat(vis, aud) along channels.
    Tensor<T> fuse(const Tensor<T>& vis, const Tensor<T>& aud) const;
    CpcState<T> feedforward(const Tensor<T>& bottom) const;
    // Top-down prediction of layer i from layer i+1.
    Tensor<T> predict(const CpcState<T>& s, int64_t i) const;
    // Prediction errors of the current state without updating it.
    std::vector<Tensor<T>> errors(const CpcState<T>& s) const;
    // Analytic gradient of sum(eps) with respect to each mu_i (top entry zero).
    std::vector<Tensor<T>> error_gradients(const CpcState<T>& s) const;
    // One inference step. Records the errors of the incoming state in `eps`.
    CpcState<T> iterate(const CpcState<T>& s) const;
    // fuse -> feedforward -> N iterations; returns the corrected mu_0 and,
    // optionally, the total error before each iteration and after the last.
    Tensor<T> infer(const Tensor<T>& vis, const Tensor<T>& aud, int64_t iterations,
                    std::vector<double>* trace = nullptr) const;
    Tensor<T> operator()(const Tensor<T>& vis, const Tensor<T>& aud) const { return infer(vis, aud, cfg_.iterations); }

    const CpcConfig& config() const { return cfg_; }
    CpcConfig& config() { return cfg_; }
    std::vector<Conv3dLayer<T>>& up() { return up_; }
    std::vector<Tensor<T>>& down() { return down_; }
    Conv3dLayer<T>& fusion() { return fuse_; }

private:
    Conv3dOptions layer_options() const;
    std::vector<Tensor<T>> gradients_from(const CpcState<T>& s, const std::vector<Tensor<T>>& e) const;

    CpcConfig cfg_;
    Conv3dLayer<T> fuse_;
    std::vector<Conv3dLayer<T>> up_;   // f_phi_1 .. f_phi_{L-1}
    std::vector<Tensor<T>> down_;      // f_theta weights [C, C, k...], predicting layer i from i+1
};

}  // namespace casp
