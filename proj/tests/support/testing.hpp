#pragma once

// Test-only helpers: random tensors and a central finite-difference oracle
// that is independent of the autodiff path it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <vector>

#include "casp/ops.hpp"
#include "casp/rng.hpp"

namespace casp::testing {

template <class T = double>
Tensor<T> random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Buffer<T> v(static_cast<std::size_t>(numel(shape)));
    for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
    return Tensor<T>(shape, std::move(v));
}

template <class T = double>
Tensor<T> random_param(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    auto t = random_tensor<T>(shape, rng, lo, hi);
    t.set_requires_grad(true);
    return t;
}

// Reduces any tensor to a scalar through fixed random weights so every output
// element contributes a distinct coefficient.
template <class T>
Tensor<T> weighted_sum(const Tensor<T>& y, uint64_t seed = 99) {
    Rng rng(seed, "weighted_sum");
    auto w = random_tensor<T>(y.shape(), rng, 0.5, 1.5);
    return sum_all(mul(y, w));
}

struct GradCheckResult {
    double max_rel_error = 0.0;
    int64_t checked = 0;
};

// Compares autodiff gradients of `loss_fn` w.r.t. `inputs` against central
// differences. Checks at most `max_per_input` coordinates per input (chosen by
// a fixed stride walk) and returns the worst |ad - fd| / (|fd| + 1e-8).
inline GradCheckResult grad_check(const std::function<Tensor<double>()>& loss_fn,
                                  std::vector<Tensor<double>> inputs, double h = 1e-3,
                                  int64_t max_per_input = 64) {
    for (auto& t : inputs) t.zero_grad();
    auto loss = loss_fn();
    backward(loss);
    GradCheckResult result;
    for (auto& t : inputs) {
        auto ad = t.grad_tensor();
        auto data = t.mutable_data();
        const int64_t n = t.size();
        const int64_t step = std::max<int64_t>(1, n / max_per_input);
        for (int64_t i = 0; i < n; i += step) {
            const double orig = data[i];
            double fp, fm;
            {
                NoGradGuard ng;
                data[i] = orig + h;
                fp = loss_fn().item();
                data[i] = orig - h;
                fm = loss_fn().item();
                data[i] = orig;
            }
            const double fd = (fp - fm) / (2.0 * h);
            const double err = std::abs(ad[i] - fd) / (std::abs(fd) + 1e-8);
            result.max_rel_error = std::max(result.max_rel_error, err);
            ++result.checked;
        }
    }
    return result;
}

// Same comparison, but the central differences are taken on an
// extended-precision copy of the computation. `wide_inputs[k]` must hold the
// values of `inputs[k]`. Deep compositions have coordinates whose gradients
// fall below what a double-precision difference quotient can resolve; the
// wider oracle lowers that floor by about three orders of magnitude.
inline GradCheckResult grad_check_extended(const std::function<Tensor<double>()>& loss_fn,
                                           std::vector<Tensor<double>> inputs,
                                           const std::function<Tensor<long double>()>& wide_loss_fn,
                                           std::vector<Tensor<long double>> wide_inputs, long double h = 1e-5L,
                                           int64_t max_per_input = 64) {
    if (inputs.size() != wide_inputs.size()) throw ContractError("grad_check_extended: input lists differ");
    for (auto& t : inputs) t.zero_grad();
    backward(loss_fn());
    GradCheckResult result;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        auto ad = inputs[k].grad_tensor();
        auto data = wide_inputs[k].mutable_data();
        const int64_t n = inputs[k].size();
        if (wide_inputs[k].size() != n) throw ContractError("grad_check_extended: input sizes differ");
        const int64_t step = std::max<int64_t>(1, n / max_per_input);
        for (int64_t i = 0; i < n; i += step) {
            const long double orig = data[i];
            long double fp, fm;
            {
                NoGradGuard ng;
                data[i] = orig + h;
                fp = wide_loss_fn().item();
                data[i] = orig - h;
                fm = wide_loss_fn().item();
                data[i] = orig;
            }
            const double fd = static_cast<double>((fp - fm) / (2.0L * h));
            const double err = std::abs(ad[i] - fd) / (std::abs(fd) + 1e-8);
            result.max_rel_error = std::max(result.max_rel_error, err);
            ++result.checked;
        }
    }
    return result;
}

// Binary fixation map with density about p, at least one fixation and one
// non-fixation.
inline Tensor<float> random_fixations(Rng& rng, const Shape& s, double p) {
    Buffer<float> v(static_cast<std::size_t>(numel(s)));
    for (auto& x : v) x = rng.uniform() < p ? 1.0f : 0.0f;
    v[rng.below(v.size())] = 1.0f;
    v[rng.below(v.size())] = 0.0f;
    if (std::count(v.begin(), v.end(), 1.0f) == 0) v[0] = 1.0f;
    return Tensor<float>(s, std::move(v));
}

// Exhaustive ROC oracle for AUC-Judd: for every distinct fixation value, count directly.
inline double auc_bruteforce(const Tensor<float>& s, const Tensor<float>& fix) {
    std::set<float, std::greater<>> thresholds;
    double n_fix = 0, n_neg = 0;
    for (int64_t i = 0; i < s.size(); ++i) {
        if (fix[i] == 1.0f) {
            thresholds.insert(s[i]);
            ++n_fix;
        } else {
            ++n_neg;
        }
    }
    std::vector<std::pair<double, double>> pts{{0, 0}};
    for (float t : thresholds) {
        double tp = 0, fp = 0;
        for (int64_t i = 0; i < s.size(); ++i) {
            if (s[i] >= t) (fix[i] == 1.0f ? tp : fp) += 1;
        }
        pts.emplace_back(fp / n_neg, tp / n_fix);
    }
    pts.emplace_back(1, 1);
    double area = 0;
    for (std::size_t i = 1; i < pts.size(); ++i)
        area += (pts[i].first - pts[i - 1].first) * (pts[i].second + pts[i - 1].second) / 2.0;
    return area;
}

// Direct nested-loop cross-correlation, independent of the im2col path.
inline Tensor<double> naive_conv3d(const Tensor<double>& x, const Tensor<double>& w, const Conv3dOptions& o) {
    const auto C = x.dim(0), T = x.dim(1), H = x.dim(2), W = x.dim(3);
    const auto Co = w.dim(0), kt = w.dim(2), kh = w.dim(3), kw = w.dim(4);
    const auto To = conv_out_extent(T, kt, o.stride[0], o.padding[0], o.dilation[0]);
    const auto Ho = conv_out_extent(H, kh, o.stride[1], o.padding[1], o.dilation[1]);
    const auto Wo = conv_out_extent(W, kw, o.stride[2], o.padding[2], o.dilation[2]);
    Buffer<double> out(static_cast<std::size_t>(Co * To * Ho * Wo), 0.0);
    for (int64_t co = 0; co < Co; ++co)
        for (int64_t t = 0; t < To; ++t)
            for (int64_t h = 0; h < Ho; ++h)
                for (int64_t ww = 0; ww < Wo; ++ww) {
                    double s = 0;
                    for (int64_t ci = 0; ci < C; ++ci)
                        for (int64_t a = 0; a < kt; ++a)
                            for (int64_t b = 0; b < kh; ++b)
                                for (int64_t e = 0; e < kw; ++e) {
                                    const auto ti = t * o.stride[0] - o.padding[0] + a * o.dilation[0];
                                    const auto hi = h * o.stride[1] - o.padding[1] + b * o.dilation[1];
                                    const auto wi = ww * o.stride[2] - o.padding[2] + e * o.dilation[2];
                                    if (ti < 0 || hi < 0 || wi < 0 || ti >= T || hi >= H || wi >= W) continue;
                                    s += x[((ci * T + ti) * H + hi) * W + wi] *
                                         w[(((co * C + ci) * kt + a) * kh + b) * kw + e];
                                }
                    out[((co * To + t) * Ho + h) * Wo + ww] = s;
                }
    return Tensor<double>({Co, To, Ho, Wo}, std::move(out));
}

// Reference gelu via the complementary error function.
inline double gelu_ref(double x) { return 0.5 * x * std::erfc(-x / std::sqrt(2.0)); }

inline double max_abs_diff(std::span<const float> a, std::span<const float> b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
    return m;
}
inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace casp::testing
