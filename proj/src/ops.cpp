#include "casp/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace casp {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// C[m,n] (+)= op(A) * op(B), row-major, op = optional transpose.
template <class T>
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c,
          bool accumulate) {
    op_stats().multiply_adds += m * n * k;
    Eigen::Map<RowMat<T>> C(c, m, n);
    if (!accumulate) C.setZero();
    if (!trans_a && !trans_b) {
        C.noalias() += Eigen::Map<const RowMat<T>>(a, m, k) * Eigen::Map<const RowMat<T>>(b, k, n);
    } else if (trans_a && !trans_b) {
        C.noalias() += Eigen::Map<const RowMat<T>>(a, k, m).transpose() * Eigen::Map<const RowMat<T>>(b, k, n);
    } else if (!trans_a && trans_b) {
        C.noalias() += Eigen::Map<const RowMat<T>>(a, m, k) * Eigen::Map<const RowMat<T>>(b, n, k).transpose();
    } else {
        C.noalias() +=
            Eigen::Map<const RowMat<T>>(a, k, m).transpose() * Eigen::Map<const RowMat<T>>(b, n, k).transpose();
    }
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

template <class T>
Buffer<T> make_buffer(int64_t n) {
    return Buffer<T>(static_cast<std::size_t>(n));
}

// Attaches a backward closure that can see the output storage.
template <class T, class F>
Tensor<T> finish(Tensor<T> y, F&& fn) {
    if (y.impl()->grad_fn) y.impl()->grad_fn->backward = std::forward<F>(fn);
    return y;
}

template <class T, class F, class D>
Tensor<T> unary(const Tensor<T>& x, const char* name, F f, D df) {
    const auto xs = x.data();
    auto out = make_buffer<T>(x.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = f(xs[i]);
    auto y = make_result<T>(x.shape(), std::move(out), name, {x}, nullptr);
    auto xd = x.impl()->data;
    auto yd = y.impl()->data;
    return finish(y, [xd, yd, df](std::span<const T> g, Node<T>& self) {
        auto& in = *self.inputs[0];
        in.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) in.grad[i] += g[i] * df((*xd)[i], (*yd)[i]);
    });
}

// Strides of a row-major shape.
std::vector<int64_t> strides_of(const Shape& s) {
    std::vector<int64_t> st(s.size(), 1);
    for (int64_t i = static_cast<int64_t>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
    return st;
}

// Visits every multi-index of `shape` in row-major order with the offset
// obtained from `strides` (which may contain zeros for broadcast axes).
template <class F>
void for_each_offset(const Shape& shape, const std::vector<int64_t>& strides, F&& fn) {
    const auto rank = shape.size();
    const int64_t n = numel(shape);
    std::vector<int64_t> idx(rank, 0);
    int64_t off = 0;
    for (int64_t lin = 0; lin < n; ++lin) {
        fn(lin, off);
        for (int64_t ax = static_cast<int64_t>(rank) - 1; ax >= 0; --ax) {
            if (++idx[ax] < shape[ax]) {
                off += strides[ax];
                break;
            }
            off -= strides[ax] * (shape[ax] - 1);
            idx[ax] = 0;
        }
    }
}

int64_t norm_axis(int64_t axis, int64_t rank) {
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) throw DimensionError("axis out of range");
    return axis;
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "add");
    auto out = make_buffer<T>(a.size());
    const auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
    return make_result<T>(a.shape(), std::move(out), "add", {a, b}, [](std::span<const T> g, Node<T>& self) {
        for (auto& in : self.inputs)
            if (in->requires_grad) in->accumulate(g);
    });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "sub");
    auto out = make_buffer<T>(a.size());
    const auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
    return make_result<T>(a.shape(), std::move(out), "sub", {a, b}, [](std::span<const T> g, Node<T>& self) {
        if (self.inputs[0]->requires_grad) self.inputs[0]->accumulate(g);
        if (self.inputs[1]->requires_grad) {
            auto& in = *self.inputs[1];
            in.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) in.grad[i] -= g[i];
        }
    });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "mul");
    auto out = make_buffer<T>(a.size());
    const auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
    auto ad = a.impl()->data, bd = b.impl()->data;
    return make_result<T>(a.shape(), std::move(out), "mul", {a, b},
                          [ad, bd](std::span<const T> g, Node<T>& self) {
                              if (self.inputs[0]->requires_grad) {
                                  auto& in = *self.inputs[0];
                                  in.ensure_grad();
                                  for (std::size_t i = 0; i < g.size(); ++i) in.grad[i] += g[i] * (*bd)[i];
                              }
                              if (self.inputs[1]->requires_grad) {
                                  auto& in = *self.inputs[1];
                                  in.ensure_grad();
                                  for (std::size_t i = 0; i < g.size(); ++i) in.grad[i] += g[i] * (*ad)[i];
                              }
                          });
}

template <class T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "div");
    auto out = make_buffer<T>(a.size());
    const auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] / y[i];
    auto bd = b.impl()->data;
    auto r = make_result<T>(a.shape(), std::move(out), "div", {a, b}, nullptr);
    auto rd = r.impl()->data;
    return finish(r, [bd, rd](std::span<const T> g, Node<T>& self) {
        if (self.inputs[0]->requires_grad) {
            auto& in = *self.inputs[0];
            in.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) in.grad[i] += g[i] / (*bd)[i];
        }
        if (self.inputs[1]->requires_grad) {
            auto& in = *self.inputs[1];
            in.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) in.grad[i] -= g[i] * (*rd)[i] / (*bd)[i];
        }
    });
}

template <class T>
Tensor<T> minimum(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "minimum");
    auto out = make_buffer<T>(a.size());
    const auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(x[i], y[i]);
    auto ad = a.impl()->data, bd = b.impl()->data;
    // Ties route the gradient to the first argument.
    return make_result<T>(a.shape(), std::move(out), "minimum", {a, b},
                          [ad, bd](std::span<const T> g, Node<T>& self) {
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                  const bool first = (*ad)[i] <= (*bd)[i];
                                  auto& in = *self.inputs[first ? 0 : 1];
                                  if (in.requires_grad) in.accumulate_at(i, g[i]);
                              }
                          });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
    return unary(x, "add_scalar", [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> mul_scalar(const Tensor<T>& x, T c) {
    return unary(x, "mul_scalar", [c](T v) { return v * c; }, [c](T, T) { return c; });
}

template <class T>
Tensor<T> neg(const Tensor<T>& x) {
    return mul_scalar(x, T(-1));
}

template <class T>
Tensor<T> exp(const Tensor<T>& x) {
    return unary(x, "exp", [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <class T>
Tensor<T> log(const Tensor<T>& x) {
    return unary(x, "log", [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <class T>
Tensor<T> sqrt(const Tensor<T>& x) {
    return unary(x, "sqrt", [](T v) { return std::sqrt(v); }, [](T, T y) { return T(0.5) / y; });
}

template <class T>
Tensor<T> square(const Tensor<T>& x) {
    return unary(x, "square", [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
    return unary(x, "relu", [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return unary(
        x, "sigmoid",
        [](T v) {
            if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
            const T e = std::exp(v);
            return e / (T(1) + e);
        },
        [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> clamp_min(const Tensor<T>& x, T floor) {
    return unary(
        x, "clamp_min", [floor](T v) { return v < floor ? floor : v; },
        [floor](T v, T) { return v < floor ? T(0) : T(1); });
}

template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
    using W = Wide<T>;
    constexpr W inv_sqrt2 = W(0.70710678118654752440L);
    constexpr W inv_sqrt2pi = W(0.39894228040143267794L);
    return unary(
        x, "gelu",
        [](T v) {
            const W d = v;
            return static_cast<T>(W(0.5) * d * (W(1) + std::erf(d * inv_sqrt2)));
        },
        [](T v, T) {
            const W d = v;
            const W cdf = W(0.5) * (W(1) + std::erf(d * inv_sqrt2));
            return static_cast<T>(cdf + d * inv_sqrt2pi * std::exp(W(-0.5) * d * d));
        });
}

// ---------------------------------------------------------------------------
// shape manipulation

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    int64_t infer = -1, known = 1;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (shape[i] == -1) {
            if (infer >= 0) throw DimensionError("reshape: more than one inferred extent");
            infer = static_cast<int64_t>(i);
        } else {
            known *= shape[i];
        }
    }
    if (infer >= 0 && known > 0) shape[infer] = x.size() / known;
    return make_view<T>(x, std::move(shape), "reshape", [](std::span<const T> g, Node<T>& self) {
        self.inputs[0]->accumulate(g);
    });
}

template <class T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int64_t>& order) {
    const auto rank = x.rank();
    if (static_cast<int64_t>(order.size()) != rank) throw DimensionError("permute: order rank mismatch");
    std::vector<bool> used(rank, false);
    for (auto o : order) {
        if (o < 0 || o >= rank || used[o]) throw DimensionError("permute: invalid axis order");
        used[o] = true;
    }
    const auto in_strides = strides_of(x.shape());
    Shape out_shape(rank);
    std::vector<int64_t> src_strides(rank);
    for (int64_t i = 0; i < rank; ++i) {
        out_shape[i] = x.shape()[order[i]];
        src_strides[i] = in_strides[order[i]];
    }
    auto out = make_buffer<T>(x.size());
    const auto xs = x.data();
    for_each_offset(out_shape, src_strides, [&](int64_t lin, int64_t off) { out[lin] = xs[off]; });
    return make_result<T>(out_shape, std::move(out), "permute", {x},
                          [out_shape, src_strides](std::span<const T> g, Node<T>& self) {
                              auto& in = *self.inputs[0];
                              in.ensure_grad();
                              for_each_offset(out_shape, src_strides,
                                              [&](int64_t lin, int64_t off) { in.grad[off] += g[lin]; });
                          });
}

template <class T>
Tensor<T> transpose2d(const Tensor<T>& x) {
    if (x.rank() != 2) throw DimensionError("transpose2d expects rank 2, got " + shape_str(x.shape()));
    return permute(x, {1, 0});
}

template <class T>
Tensor<T> expand(const Tensor<T>& x, const Shape& shape) {
    if (x.rank() != static_cast<int64_t>(shape.size())) {
        throw DimensionError("expand: rank mismatch " + shape_str(x.shape()) + " -> " + shape_str(shape));
    }
    auto st = strides_of(x.shape());
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (x.shape()[i] == shape[i]) continue;
        if (x.shape()[i] != 1) {
            throw DimensionError("expand: cannot broadcast " + shape_str(x.shape()) + " to " + shape_str(shape));
        }
        st[i] = 0;
    }
    auto out = make_buffer<T>(numel(shape));
    const auto xs = x.data();
    for_each_offset(shape, st, [&](int64_t lin, int64_t off) { out[lin] = xs[off]; });
    return make_result<T>(shape, std::move(out), "expand", {x}, [shape, st](std::span<const T> g, Node<T>& self) {
        auto& in = *self.inputs[0];
        in.ensure_grad();
        for_each_offset(shape, st, [&](int64_t lin, int64_t off) { in.grad[off] += g[lin]; });
    });
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, int64_t axis) {
    if (xs.empty()) throw DimensionError("concat of zero tensors");
    const auto rank = xs[0].rank();
    axis = norm_axis(axis, rank);
    Shape out_shape = xs[0].shape();
    out_shape[axis] = 0;
    for (const auto& t : xs) {
        if (t.rank() != rank) throw DimensionError("concat: rank mismatch");
        for (int64_t i = 0; i < rank; ++i) {
            if (i != axis && t.shape()[i] != xs[0].shape()[i]) {
                throw DimensionError("concat: shape mismatch " + shape_str(t.shape()) + " vs " +
                                     shape_str(xs[0].shape()));
            }
        }
        out_shape[axis] += t.shape()[axis];
    }
    int64_t outer = 1, inner = 1;
    for (int64_t i = 0; i < axis; ++i) outer *= out_shape[i];
    for (int64_t i = axis + 1; i < rank; ++i) inner *= out_shape[i];
    std::vector<int64_t> widths;
    for (const auto& t : xs) widths.push_back(t.shape()[axis] * inner);
    const int64_t row = out_shape[axis] * inner;
    auto out = make_buffer<T>(numel(out_shape));
    int64_t col = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const auto src = xs[k].data();
        for (int64_t o = 0; o < outer; ++o) {
            std::copy_n(src.data() + o * widths[k], widths[k], out.data() + o * row + col);
        }
        col += widths[k];
    }
    return make_result<T>(out_shape, std::move(out), "concat", xs,
                          [outer, row, widths](std::span<const T> g, Node<T>& self) {
                              int64_t c = 0;
                              for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                                  auto& in = *self.inputs[k];
                                  if (in.requires_grad) {
                                      in.ensure_grad();
                                      for (int64_t o = 0; o < outer; ++o)
                                          for (int64_t j = 0; j < widths[k]; ++j)
                                              in.grad[o * widths[k] + j] += g[o * row + c + j];
                                  }
                                  c += widths[k];
                              }
                          });
}

template <class T>
Tensor<T> slice(const Tensor<T>& x, int64_t axis, int64_t begin, int64_t end) {
    axis = norm_axis(axis, x.rank());
    const auto extent = x.shape()[axis];
    if (begin < 0 || end > extent || begin >= end) {
        throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") out of range for " +
                             shape_str(x.shape()));
    }
    Shape out_shape = x.shape();
    out_shape[axis] = end - begin;
    int64_t outer = 1, inner = 1;
    for (int64_t i = 0; i < axis; ++i) outer *= out_shape[i];
    for (int64_t i = axis + 1; i < x.rank(); ++i) inner *= out_shape[i];
    const int64_t src_row = extent * inner, dst_row = (end - begin) * inner, skip = begin * inner;
    auto out = make_buffer<T>(numel(out_shape));
    const auto xs = x.data();
    for (int64_t o = 0; o < outer; ++o) std::copy_n(xs.data() + o * src_row + skip, dst_row, out.data() + o * dst_row);
    return make_result<T>(out_shape, std::move(out), "slice", {x},
                          [outer, src_row, dst_row, skip](std::span<const T> g, Node<T>& self) {
                              auto& in = *self.inputs[0];
                              in.ensure_grad();
                              for (int64_t o = 0; o < outer; ++o)
                                  for (int64_t j = 0; j < dst_row; ++j) in.grad[o * src_row + skip + j] += g[o * dst_row + j];
                          });
}

// ---------------------------------------------------------------------------
// reductions

template <class T>
Tensor<T> reduce(const Tensor<T>& x, Reduce kind, const std::vector<int64_t>& axes, bool keepdim) {
    if (axes.empty()) throw DimensionError("reduce: empty reduction set");
    const auto rank = x.rank();
    std::vector<bool> reduced(rank, false);
    for (auto a : axes) reduced[norm_axis(a, rank)] = true;
    Shape kept_shape = x.shape();
    int64_t count = 1;
    for (int64_t i = 0; i < rank; ++i) {
        if (reduced[i]) {
            count *= kept_shape[i];
            kept_shape[i] = 1;
        }
    }
    auto st = strides_of(kept_shape);
    for (int64_t i = 0; i < rank; ++i)
        if (reduced[i]) st[i] = 0;
    auto out = Buffer<T>(static_cast<std::size_t>(numel(kept_shape)), T(0));
    const auto xs = x.data();
    for_each_offset(x.shape(), st, [&](int64_t lin, int64_t off) { out[off] += xs[lin]; });
    const T scale = kind == Reduce::Mean ? T(1) / static_cast<T>(count) : T(1);
    if (kind == Reduce::Mean)
        for (auto& v : out) v *= scale;
    Shape out_shape;
    if (keepdim) {
        out_shape = kept_shape;
    } else {
        for (int64_t i = 0; i < rank; ++i)
            if (!reduced[i]) out_shape.push_back(kept_shape[i]);
        if (out_shape.empty()) out_shape.push_back(1);
    }
    Shape in_shape = x.shape();
    return make_result<T>(out_shape, std::move(out), kind == Reduce::Mean ? "mean" : "sum", {x},
                          [in_shape, st, scale](std::span<const T> g, Node<T>& self) {
                              auto& in = *self.inputs[0];
                              in.ensure_grad();
                              for_each_offset(in_shape, st,
                                              [&](int64_t lin, int64_t off) { in.grad[lin] += g[off] * scale; });
                          });
}

template <class T>
Tensor<T> sum_all(const Tensor<T>& x) {
    std::vector<int64_t> axes(static_cast<std::size_t>(x.rank()));
    std::iota(axes.begin(), axes.end(), 0);
    return reduce(x, Reduce::Sum, axes, false);
}

template <class T>
Tensor<T> mean_all(const Tensor<T>& x) {
    std::vector<int64_t> axes(static_cast<std::size_t>(x.rank()));
    std::iota(axes.begin(), axes.end(), 0);
    return reduce(x, Reduce::Mean, axes, false);
}

template <class T>
Tensor<T> softmax(const Tensor<T>& x, int64_t axis) {
    axis = norm_axis(axis, x.rank());
    int64_t outer = 1, inner = 1;
    const int64_t n = x.shape()[axis];
    for (int64_t i = 0; i < axis; ++i) outer *= x.shape()[i];
    for (int64_t i = axis + 1; i < x.rank(); ++i) inner *= x.shape()[i];
    auto out = make_buffer<T>(x.size());
    const auto xs = x.data();
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
            const int64_t base = o * n * inner + in;
            T mx = xs[base];
            for (int64_t j = 1; j < n; ++j) mx = std::max(mx, xs[base + j * inner]);
            T total = 0;
            for (int64_t j = 0; j < n; ++j) {
                const T e = std::exp(xs[base + j * inner] - mx);
                out[base + j * inner] = e;
                total += e;
            }
            for (int64_t j = 0; j < n; ++j) out[base + j * inner] /= total;
        }
    }
    auto y = make_result<T>(x.shape(), std::move(out), "softmax", {x}, nullptr);
    auto yd = y.impl()->data;
    return finish(y, [yd, outer, inner, n](std::span<const T> g, Node<T>& self) {
        auto& in_t = *self.inputs[0];
        in_t.ensure_grad();
        const auto& ys = *yd;
        for (int64_t o = 0; o < outer; ++o) {
            for (int64_t in = 0; in < inner; ++in) {
                const int64_t base = o * n * inner + in;
                T dot = 0;
                for (int64_t j = 0; j < n; ++j) dot += g[base + j * inner] * ys[base + j * inner];
                for (int64_t j = 0; j < n; ++j) {
                    const auto k = base + j * inner;
                    in_t.grad[k] += ys[k] * (g[k] - dot);
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// matmul

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() < 2 || b.rank() < 2) {
        throw DimensionError("matmul: operands must have rank >= 2, got " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    }
    const int64_t m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
    if (b.dim(-2) != k) {
        throw DimensionError("matmul: inner extents differ in " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    }
    const Shape ab(a.shape().begin(), a.shape().end() - 2), bb(b.shape().begin(), b.shape().end() - 2);
    const std::size_t br = std::max(ab.size(), bb.size());
    Shape batch(br), a_pad(br, 1), b_pad(br, 1);
    std::copy(ab.begin(), ab.end(), a_pad.begin() + (br - ab.size()));
    std::copy(bb.begin(), bb.end(), b_pad.begin() + (br - bb.size()));
    for (std::size_t i = 0; i < br; ++i) {
        if (a_pad[i] != b_pad[i] && a_pad[i] != 1 && b_pad[i] != 1) {
            throw DimensionError("matmul: batch extents not broadcastable in " + shape_str(a.shape()) + " x " +
                                 shape_str(b.shape()));
        }
        batch[i] = std::max(a_pad[i], b_pad[i]);
    }
    // Per-batch-entry matrix offsets for each operand.
    auto as = strides_of(a_pad), bs = strides_of(b_pad);
    for (std::size_t i = 0; i < br; ++i) {
        if (a_pad[i] == 1) as[i] = 0;
        if (b_pad[i] == 1) bs[i] = 0;
    }
    const int64_t nb = numel(batch);
    std::vector<int64_t> a_off(nb), b_off(nb);
    if (br == 0) {
        a_off[0] = b_off[0] = 0;
    } else {
        for_each_offset(batch, as, [&](int64_t lin, int64_t off) { a_off[lin] = off * m * k; });
        for_each_offset(batch, bs, [&](int64_t lin, int64_t off) { b_off[lin] = off * k * n; });
    }
    Shape out_shape = batch;
    out_shape.push_back(m);
    out_shape.push_back(n);
    auto out = make_buffer<T>(numel(out_shape));
    const auto ad = a.data(), bd = b.data();
    for (int64_t i = 0; i < nb; ++i) gemm(false, false, m, n, k, ad.data() + a_off[i], bd.data() + b_off[i], out.data() + i * m * n, false);
    auto a_data = a.impl()->data, b_data = b.impl()->data;
    return make_result<T>(out_shape, std::move(out), "matmul", {a, b},
                          [=](std::span<const T> g, Node<T>& self) {
                              auto& ga = *self.inputs[0];
                              auto& gb = *self.inputs[1];
                              if (ga.requires_grad) ga.ensure_grad();
                              if (gb.requires_grad) gb.ensure_grad();
                              for (int64_t i = 0; i < nb; ++i) {
                                  const T* gi = g.data() + i * m * n;
                                  if (ga.requires_grad)
                                      gemm(false, true, m, k, n, gi, b_data->data() + b_off[i], ga.grad.data() + a_off[i], true);
                                  if (gb.requires_grad)
                                      gemm(true, false, k, n, m, a_data->data() + a_off[i], gi, gb.grad.data() + b_off[i], true);
                              }
                          });
}

// ---------------------------------------------------------------------------
// convolution

int64_t conv_out_extent(int64_t in, int64_t kernel, int64_t stride, int64_t pad, int64_t dilation) {
    const int64_t span = dilation * (kernel - 1) + 1;
    const int64_t padded = in + 2 * pad;
    if (span > padded) return 0;
    return (padded - span) / stride + 1;
}

namespace {

struct ConvGeometry {
    int64_t channels;  // input channels of the correlation
    Triple in;         // T, H, W
    Triple kernel;
    Triple out;
    Conv3dOptions opt;

    int64_t rows() const { return channels * kernel[0] * kernel[1] * kernel[2]; }
    int64_t cols() const { return out[0] * out[1] * out[2]; }
    int64_t in_volume() const { return in[0] * in[1] * in[2]; }
    bool pointwise() const {
        return kernel == Triple{1, 1, 1} && opt.stride == Triple{1, 1, 1} && opt.padding == Triple{0, 0, 0};
    }
};

template <class T>
void im2col(const ConvGeometry& g, const T* x, T* cols) {
    const int64_t P = g.cols();
    const auto& [st, sh, sw] = g.opt.stride;
    const auto& [pt, ph, pw] = g.opt.padding;
    const auto& [dt, dh, dw] = g.opt.dilation;
    int64_t r = 0;
    for (int64_t c = 0; c < g.channels; ++c) {
        const T* xc = x + c * g.in_volume();
        for (int64_t a = 0; a < g.kernel[0]; ++a)
            for (int64_t b = 0; b < g.kernel[1]; ++b)
                for (int64_t e = 0; e < g.kernel[2]; ++e, ++r) {
                    T* row = cols + r * P;
                    int64_t p = 0;
                    for (int64_t to = 0; to < g.out[0]; ++to) {
                        const int64_t ti = to * st - pt + a * dt;
                        if (ti < 0 || ti >= g.in[0]) {
                            std::fill_n(row + p, g.out[1] * g.out[2], T(0));
                            p += g.out[1] * g.out[2];
                            continue;
                        }
                        for (int64_t ho = 0; ho < g.out[1]; ++ho) {
                            const int64_t hi = ho * sh - ph + b * dh;
                            if (hi < 0 || hi >= g.in[1]) {
                                std::fill_n(row + p, g.out[2], T(0));
                                p += g.out[2];
                                continue;
                            }
                            const T* xr = xc + (ti * g.in[1] + hi) * g.in[2];
                            for (int64_t wo = 0; wo < g.out[2]; ++wo, ++p) {
                                const int64_t wi = wo * sw - pw + e * dw;
                                row[p] = (wi >= 0 && wi < g.in[2]) ? xr[wi] : T(0);
                            }
                        }
                    }
                }
    }
}

template <class T>
void col2im(const ConvGeometry& g, const T* cols, T* x) {
    const int64_t P = g.cols();
    const auto& [st, sh, sw] = g.opt.stride;
    const auto& [pt, ph, pw] = g.opt.padding;
    const auto& [dt, dh, dw] = g.opt.dilation;
    int64_t r = 0;
    for (int64_t c = 0; c < g.channels; ++c) {
        T* xc = x + c * g.in_volume();
        for (int64_t a = 0; a < g.kernel[0]; ++a)
            for (int64_t b = 0; b < g.kernel[1]; ++b)
                for (int64_t e = 0; e < g.kernel[2]; ++e, ++r) {
                    const T* row = cols + r * P;
                    int64_t p = 0;
                    for (int64_t to = 0; to < g.out[0]; ++to) {
                        const int64_t ti = to * st - pt + a * dt;
                        if (ti < 0 || ti >= g.in[0]) {
                            p += g.out[1] * g.out[2];
                            continue;
                        }
                        for (int64_t ho = 0; ho < g.out[1]; ++ho) {
                            const int64_t hi = ho * sh - ph + b * dh;
                            if (hi < 0 || hi >= g.in[1]) {
                                p += g.out[2];
                                continue;
                            }
                            T* xr = xc + (ti * g.in[1] + hi) * g.in[2];
                            for (int64_t wo = 0; wo < g.out[2]; ++wo, ++p) {
                                const int64_t wi = wo * sw - pw + e * dw;
                                if (wi >= 0 && wi < g.in[2]) xr[wi] += row[p];
                            }
                        }
                    }
                }
    }
}

void validate_options(const Conv3dOptions& opt) {
    for (int i = 0; i < 3; ++i) {
        if (opt.stride[i] < 1) throw DimensionError("conv3d: stride must be >= 1");
        if (opt.dilation[i] < 1) throw DimensionError("conv3d: dilation must be >= 1");
        if (opt.padding[i] < 0) throw DimensionError("conv3d: padding must be >= 0");
    }
}

ConvGeometry make_geometry(const Shape& in_shape, const Shape& w_shape, const Conv3dOptions& opt, int64_t channels) {
    ConvGeometry g;
    g.channels = channels;
    g.in = {in_shape[1], in_shape[2], in_shape[3]};
    g.kernel = {w_shape[2], w_shape[3], w_shape[4]};
    g.opt = opt;
    for (int i = 0; i < 3; ++i) {
        g.out[i] = conv_out_extent(g.in[i], g.kernel[i], opt.stride[i], opt.padding[i], opt.dilation[i]);
        if (g.out[i] < 1) {
            throw DimensionError("conv3d: kernel " + shape_str(w_shape) + " with dilation " +
                                 std::to_string(opt.dilation[i]) + " exceeds padded input " + shape_str(in_shape));
        }
    }
    return g;
}

template <class T>
void add_bias(T* out, const T* bias, int64_t channels, int64_t volume) {
    for (int64_t c = 0; c < channels; ++c)
        for (int64_t p = 0; p < volume; ++p) out[c * volume + p] += bias[c];
}

template <class T>
void bias_grad(TensorImpl<T>& b, std::span<const T> g, int64_t channels, int64_t volume) {
    b.ensure_grad();
    for (int64_t c = 0; c < channels; ++c) {
        T s = 0;
        for (int64_t p = 0; p < volume; ++p) s += g[c * volume + p];
        b.grad[c] += s;
    }
}

}  // namespace

template <class T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, const Conv3dOptions& opt) {
    if (x.rank() != 4 || w.rank() != 5) {
        throw DimensionError("conv3d: expected input [C,T,H,W] and weight [Co,Ci,kt,kh,kw], got " +
                             shape_str(x.shape()) + " and " + shape_str(w.shape()));
    }
    if (w.dim(1) != x.dim(0)) {
        throw DimensionError("conv3d: weight " + shape_str(w.shape()) + " expects " + std::to_string(w.dim(1)) +
                             " input channels, input is " + shape_str(x.shape()));
    }
    validate_options(opt);
    const int64_t c_out = w.dim(0);
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != c_out)) {
        throw DimensionError("conv3d: bias shape " + shape_str(bias.shape()) + " does not match output channels");
    }
    const auto g = make_geometry(x.shape(), w.shape(), opt, x.dim(0));
    const int64_t K = g.rows(), P = g.cols();
    auto out = make_buffer<T>(c_out * P);
    if (g.pointwise()) {
        gemm(false, false, c_out, P, K, w.data().data(), x.data().data(), out.data(), false);
    } else {
        Buffer<T> cols(static_cast<std::size_t>(K * P));
        im2col(g, x.data().data(), cols.data());
        gemm(false, false, c_out, P, K, w.data().data(), cols.data(), out.data(), false);
    }
    if (bias.defined()) add_bias(out.data(), bias.data().data(), c_out, P);
    std::vector<Tensor<T>> inputs{x, w};
    if (bias.defined()) inputs.push_back(bias);
    auto xd = x.impl()->data, wd = w.impl()->data;
    return make_result<T>({c_out, g.out[0], g.out[1], g.out[2]}, std::move(out), "conv3d", std::move(inputs),
                          [g, xd, wd, c_out](std::span<const T> go, Node<T>& self) {
                              const int64_t K = g.rows(), P = g.cols();
                              auto& gx = *self.inputs[0];
                              auto& gw = *self.inputs[1];
                              if (self.inputs.size() > 2 && self.inputs[2]->requires_grad)
                                  bias_grad(*self.inputs[2], go, c_out, P);
                              if (g.pointwise()) {
                                  if (gw.requires_grad) {
                                      gw.ensure_grad();
                                      gemm(false, true, c_out, K, P, go.data(), xd->data(), gw.grad.data(), true);
                                  }
                                  if (gx.requires_grad) {
                                      gx.ensure_grad();
                                      gemm(true, false, K, P, c_out, wd->data(), go.data(), gx.grad.data(), true);
                                  }
                                  return;
                              }
                              if (gw.requires_grad) {
                                  Buffer<T> cols(static_cast<std::size_t>(K * P));
                                  im2col(g, xd->data(), cols.data());
                                  gw.ensure_grad();
                                  gemm(false, true, c_out, K, P, go.data(), cols.data(), gw.grad.data(), true);
                              }
                              if (gx.requires_grad) {
                                  Buffer<T> dcols(static_cast<std::size_t>(K * P));
                                  gemm(true, false, K, P, c_out, wd->data(), go.data(), dcols.data(), false);
                                  gx.ensure_grad();
                                  col2im(g, dcols.data(), gx.grad.data());
                              }
                          });
}

template <class T>
Tensor<T> conv_transpose3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, const Conv3dOptions& opt,
                           const Triple& out_extent) {
    if (x.rank() != 4 || w.rank() != 5) {
        throw DimensionError("conv_transpose3d: expected input [C,T,H,W] and weight [Ci,Co,kt,kh,kw], got " +
                             shape_str(x.shape()) + " and " + shape_str(w.shape()));
    }
    if (w.dim(0) != x.dim(0)) {
        throw DimensionError("conv_transpose3d: weight " + shape_str(w.shape()) + " does not match input " +
                             shape_str(x.shape()));
    }
    validate_options(opt);
    const int64_t c_out = w.dim(1), c_in = x.dim(0);
    // Geometry of the forward correlation that this operator is the adjoint of.
    const Shape target{c_out, out_extent[0], out_extent[1], out_extent[2]};
    const auto g = make_geometry(target, w.shape(), opt, c_out);
    for (int i = 0; i < 3; ++i) {
        if (g.out[i] != x.shape()[i + 1]) {
            throw DimensionError("conv_transpose3d: output extent " + shape_str(target) +
                                 " is not consistent with input " + shape_str(x.shape()));
        }
    }
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != c_out)) {
        throw DimensionError("conv_transpose3d: bias shape mismatch");
    }
    const int64_t K = g.rows(), P = g.cols(), V = g.in_volume();
    auto out = Buffer<T>(static_cast<std::size_t>(c_out * V), T(0));
    {
        Buffer<T> cols(static_cast<std::size_t>(K * P));
        gemm(true, false, K, P, c_in, w.data().data(), x.data().data(), cols.data(), false);
        col2im(g, cols.data(), out.data());
    }
    if (bias.defined()) add_bias(out.data(), bias.data().data(), c_out, V);
    std::vector<Tensor<T>> inputs{x, w};
    if (bias.defined()) inputs.push_back(bias);
    auto xd = x.impl()->data, wd = w.impl()->data;
    return make_result<T>(target, std::move(out), "conv_transpose3d", std::move(inputs),
                          [g, xd, wd, c_in, c_out](std::span<const T> go, Node<T>& self) {
                              const int64_t K = g.rows(), P = g.cols(), V = g.in_volume();
                              if (self.inputs.size() > 2 && self.inputs[2]->requires_grad)
                                  bias_grad(*self.inputs[2], go, c_out, V);
                              auto& gx = *self.inputs[0];
                              auto& gw = *self.inputs[1];
                              Buffer<T> cols(static_cast<std::size_t>(K * P));
                              im2col(g, go.data(), cols.data());
                              if (gx.requires_grad) {
                                  gx.ensure_grad();
                                  gemm(false, false, c_in, P, K, wd->data(), cols.data(), gx.grad.data(), true);
                              }
                              if (gw.requires_grad) {
                                  gw.ensure_grad();
                                  gemm(false, true, c_in, K, P, xd->data(), cols.data(), gw.grad.data(), true);
                              }
                          });
}

// ---------------------------------------------------------------------------
// resampling

namespace {
struct AxisTaps {
    std::vector<int64_t> lo, hi;
    std::vector<double> frac;
};

AxisTaps corner_aligned_taps(int64_t src, int64_t dst) {
    AxisTaps taps;
    const double scale = dst > 1 ? static_cast<double>(src - 1) / static_cast<double>(dst - 1) : 0.0;
    for (int64_t i = 0; i < dst; ++i) {
        const double pos = static_cast<double>(i) * scale;
        auto lo = std::min(static_cast<int64_t>(std::floor(pos)), src - 1);
        const auto hi = std::min(lo + 1, src - 1);
        taps.lo.push_back(lo);
        taps.hi.push_back(hi);
        taps.frac.push_back(pos - static_cast<double>(lo));
    }
    return taps;
}
}  // namespace

template <class T>
Tensor<T> upsample_trilinear(const Tensor<T>& x, const Triple& target) {
    if (x.rank() != 4) throw DimensionError("upsample_trilinear expects [C,T,H,W], got " + shape_str(x.shape()));
    for (auto t : target)
        if (t < 1) throw DimensionError("upsample_trilinear: target extents must be >= 1");
    const int64_t C = x.dim(0), Ti = x.dim(1), Hi = x.dim(2), Wi = x.dim(3);
    const auto tt = corner_aligned_taps(Ti, target[0]);
    const auto th = corner_aligned_taps(Hi, target[1]);
    const auto tw = corner_aligned_taps(Wi, target[2]);
    const int64_t To = target[0], Ho = target[1], Wo = target[2];
    // Visits the 8 (source offset, weight) pairs feeding each output element.
    auto visit = [=](auto&& fn) {
        for (int64_t c = 0; c < C; ++c)
            for (int64_t t = 0; t < To; ++t)
                for (int64_t h = 0; h < Ho; ++h)
                    for (int64_t w = 0; w < Wo; ++w) {
                        const int64_t o = ((c * To + t) * Ho + h) * Wo + w;
                        const int64_t ts[2] = {tt.lo[t], tt.hi[t]};
                        const int64_t hs[2] = {th.lo[h], th.hi[h]};
                        const int64_t ws[2] = {tw.lo[w], tw.hi[w]};
                        const double ft[2] = {1.0 - tt.frac[t], tt.frac[t]};
                        const double fh[2] = {1.0 - th.frac[h], th.frac[h]};
                        const double fw[2] = {1.0 - tw.frac[w], tw.frac[w]};
                        for (int a = 0; a < 2; ++a)
                            for (int b = 0; b < 2; ++b)
                                for (int e = 0; e < 2; ++e) {
                                    const double wt = ft[a] * fh[b] * fw[e];
                                    if (wt == 0.0) continue;
                                    fn(o, ((c * Ti + ts[a]) * Hi + hs[b]) * Wi + ws[e], static_cast<T>(wt));
                                }
                    }
    };
    auto out = Buffer<T>(static_cast<std::size_t>(C * To * Ho * Wo), T(0));
    const auto xs = x.data();
    visit([&](int64_t o, int64_t i, T wt) { out[o] += wt * xs[i]; });
    return make_result<T>({C, To, Ho, Wo}, std::move(out), "upsample_trilinear", {x},
                          [visit](std::span<const T> g, Node<T>& self) {
                              auto& in = *self.inputs[0];
                              in.ensure_grad();
                              visit([&](int64_t o, int64_t i, T wt) { in.grad[i] += wt * g[o]; });
                          });
}

#define CASP_OPS(T)                                                                                     \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                         \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                         \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                         \
    template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                                         \
    template Tensor<T> minimum(const Tensor<T>&, const Tensor<T>&);                                     \
    template Tensor<T> add_scalar(const Tensor<T>&, T);                                                 \
    template Tensor<T> mul_scalar(const Tensor<T>&, T);                                                 \
    template Tensor<T> neg(const Tensor<T>&);                                                           \
    template Tensor<T> exp(const Tensor<T>&);                                                           \
    template Tensor<T> log(const Tensor<T>&);                                                           \
    template Tensor<T> sqrt(const Tensor<T>&);                                                          \
    template Tensor<T> square(const Tensor<T>&);                                                        \
    template Tensor<T> relu(const Tensor<T>&);                                                          \
    template Tensor<T> sigmoid(const Tensor<T>&);                                                       \
    template Tensor<T> clamp_min(const Tensor<T>&, T);                                                  \
    template Tensor<T> gelu(const Tensor<T>&);                                                          \
    template Tensor<T> reshape(const Tensor<T>&, Shape);                                                \
    template Tensor<T> permute(const Tensor<T>&, const std::vector<int64_t>&);                          \
    template Tensor<T> transpose2d(const Tensor<T>&);                                                   \
    template Tensor<T> expand(const Tensor<T>&, const Shape&);                                          \
    template Tensor<T> concat(const std::vector<Tensor<T>>&, int64_t);                                  \
    template Tensor<T> slice(const Tensor<T>&, int64_t, int64_t, int64_t);                              \
    template Tensor<T> reduce(const Tensor<T>&, Reduce, const std::vector<int64_t>&, bool);             \
    template Tensor<T> sum_all(const Tensor<T>&);                                                       \
    template Tensor<T> mean_all(const Tensor<T>&);                                                      \
    template Tensor<T> softmax(const Tensor<T>&, int64_t);                                              \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                      \
    template Tensor<T> conv3d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Conv3dOptions&); \
    template Tensor<T> conv_transpose3d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,           \
                                        const Conv3dOptions&, const Triple&);                           \
    template Tensor<T> upsample_trilinear(const Tensor<T>&, const Triple&);

CASP_OPS(float)
CASP_OPS(double)
CASP_OPS(long double)

}  // namespace casp
