#pragma once

#include <array>
#include <vector>

#include "casp/tensor.hpp"

namespace casp {

using Triple = std::array<int64_t, 3>;

// Elementwise, identical shapes only.
template <class T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> minimum(const Tensor<T>& a, const Tensor<T>& b);

template <class T> Tensor<T> add_scalar(const Tensor<T>& x, T c);
template <class T> Tensor<T> mul_scalar(const Tensor<T>& x, T c);
template <class T> Tensor<T> neg(const Tensor<T>& x);
template <class T> Tensor<T> exp(const Tensor<T>& x);
template <class T> Tensor<T> log(const Tensor<T>& x);
template <class T> Tensor<T> sqrt(const Tensor<T>& x);
template <class T> Tensor<T> square(const Tensor<T>& x);
template <class T> Tensor<T> relu(const Tensor<T>& x);
template <class T> Tensor<T> sigmoid(const Tensor<T>& x);
template <class T> Tensor<T> clamp_min(const Tensor<T>& x, T floor);
// x * Phi(x) with Phi the standard normal CDF (erf form).
template <class T> Tensor<T> gelu(const Tensor<T>& x);

template <class T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <class T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <class T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <class T> Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }

// Shape manipulation.
template <class T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <class T> Tensor<T> permute(const Tensor<T>& x, const std::vector<int64_t>& order);
template <class T> Tensor<T> transpose2d(const Tensor<T>& x);
// Repeats size-1 axes of `x` up to `shape`; ranks must agree.
template <class T> Tensor<T> expand(const Tensor<T>& x, const Shape& shape);
template <class T> Tensor<T> concat(const std::vector<Tensor<T>>& xs, int64_t axis);
template <class T> Tensor<T> slice(const Tensor<T>& x, int64_t axis, int64_t begin, int64_t end);

enum class Reduce { Sum, Mean };
template <class T> Tensor<T> reduce(const Tensor<T>& x, Reduce kind, const std::vector<int64_t>& axes,
                                    bool keepdim = false);
template <class T> Tensor<T> sum(const Tensor<T>& x, const std::vector<int64_t>& axes, bool keepdim = false) {
    return reduce(x, Reduce::Sum, axes, keepdim);
}
template <class T> Tensor<T> mean(const Tensor<T>& x, const std::vector<int64_t>& axes, bool keepdim = false) {
    return reduce(x, Reduce::Mean, axes, keepdim);
}
template <class T> Tensor<T> sum_all(const Tensor<T>& x);
template <class T> Tensor<T> mean_all(const Tensor<T>& x);

template <class T> Tensor<T> softmax(const Tensor<T>& x, int64_t axis);

// [.., m, k] x [.., k, n]; leading batch extents broadcast.
template <class T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

struct Conv3dOptions {
    Triple stride{1, 1, 1};
    Triple padding{0, 0, 0};
    Triple dilation{1, 1, 1};
};

// Cross-correlation of x[C_in,T,H,W] with w[C_out,C_in,kt,kh,kw]; bias[C_out] optional.
template <class T> Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                                    const Conv3dOptions& opt = {});
template <class T> Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Conv3dOptions& opt = {}) {
    return conv3d(x, w, Tensor<T>{}, opt);
}
// Adjoint of conv3d: x[C_in,...] with w[C_in,C_out,kt,kh,kw] producing [C_out, out_extent...].
// `out_extent` must be an extent that conv3d with the same options maps back onto x.
template <class T> Tensor<T> conv_transpose3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                                              const Conv3dOptions& opt, const Triple& out_extent);

int64_t conv_out_extent(int64_t in, int64_t kernel, int64_t stride, int64_t pad, int64_t dilation);

// Corner-aligned trilinear resampling of x[C,T,H,W].
template <class T> Tensor<T> upsample_trilinear(const Tensor<T>& x, const Triple& target);

}  // namespace casp
