#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace casp {

using Shape = std::vector<int64_t>;

int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Error taxonomy shared by every module.
class DimensionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Per-thread storage accounting. Every tensor buffer is allocated through
// CountingAllocator, so `peak_words` bounds the transient memory of any
// region bracketed by reset_peak().
struct MemoryStats {
    int64_t live_words = 0;
    int64_t peak_words = 0;
    int64_t largest_alloc = 0;
};
MemoryStats& memory_stats();
void reset_memory_peak();

// Per-thread multiply-add counter fed by matmul and convolution kernels.
struct OpStats {
    int64_t multiply_adds = 0;
};
OpStats& op_stats();

template <class T>
struct CountingAllocator {
    using value_type = T;
    CountingAllocator() = default;
    template <class U>
    CountingAllocator(const CountingAllocator<U>&) noexcept {}
    T* allocate(std::size_t n) {
        auto& s = memory_stats();
        s.live_words += static_cast<int64_t>(n);
        if (s.live_words > s.peak_words) s.peak_words = s.live_words;
        if (static_cast<int64_t>(n) > s.largest_alloc) s.largest_alloc = static_cast<int64_t>(n);
        return std::allocator<T>{}.allocate(n);
    }
    void deallocate(T* p, std::size_t n) noexcept {
        memory_stats().live_words -= static_cast<int64_t>(n);
        std::allocator<T>{}.deallocate(p, n);
    }
    template <class U>
    bool operator==(const CountingAllocator<U>&) const noexcept { return true; }
};

template <class T>
using Buffer = std::vector<T, CountingAllocator<T>>;

// Accumulation type for reductions over T: at least double, wider when T is.
template <class T>
using Wide = std::conditional_t<(sizeof(T) > sizeof(double)), T, double>;

template <class T>
struct TensorImpl;

// One recorded operation: the inputs it read and the closure that maps the
// output gradient onto input gradients.
template <class T>
struct Node {
    const char* name = "";
    std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
    std::function<void(std::span<const T> grad_out, Node<T>& self)> backward;
};

template <class T>
struct TensorImpl {
    Shape shape;
    std::shared_ptr<Buffer<T>> data;
    Buffer<T> grad;
    bool requires_grad = false;
    std::shared_ptr<Node<T>> grad_fn;

    // Adds `g` into the gradient, allocating it on first use.
    void accumulate(std::span<const T> g);
    void accumulate_at(std::size_t i, T g) {
        ensure_grad();
        grad[i] += g;
    }
    void ensure_grad() {
        if (grad.empty()) grad.assign(data->size(), T(0));
    }
};

bool grad_enabled();

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// Immutable rank-N array handle. Copies share storage; only gradients and
// explicitly mutable parameters change after construction.
template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    Tensor(Shape shape, Buffer<T> values);
    Tensor(Shape shape, std::initializer_list<T> values);

    static Tensor zeros(const Shape& shape);
    static Tensor full(const Shape& shape, T value);
    static Tensor scalar(T value) { return full({1}, value); }
    static Tensor from(const Shape& shape, std::span<const T> values);
    static Tensor from(const Shape& shape, std::initializer_list<T> values) {
        return from(shape, std::span<const T>(values.begin(), values.size()));
    }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int64_t dim(int64_t axis) const;
    int64_t rank() const { return static_cast<int64_t>(impl_->shape.size()); }
    int64_t size() const { return static_cast<int64_t>(impl_->data->size()); }

    std::span<const T> data() const { return {impl_->data->data(), impl_->data->size()}; }
    // Parameter updates only; never used on recorded intermediates.
    std::span<T> mutable_data() { return {impl_->data->data(), impl_->data->size()}; }
    T item() const;
    T operator[](int64_t i) const { return (*impl_->data)[static_cast<std::size_t>(i)]; }

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool on = true);
    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<const T> grad() const { return {impl_->grad.data(), impl_->grad.size()}; }
    Tensor grad_tensor() const;
    void zero_grad() { impl_->grad.clear(); }

    // Same storage, fresh leaf with no history.
    Tensor detach() const;
    Tensor clone() const;

    const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }
    static Tensor wrap(std::shared_ptr<TensorImpl<T>> impl) {
        Tensor t;
        t.impl_ = std::move(impl);
        return t;
    }

private:
    std::shared_ptr<TensorImpl<T>> impl_;
};

// Topologically ordered record of the operations reachable from a root.
template <class T>
class Tape {
public:
    explicit Tape(const Tensor<T>& root);
    // Nodes in forward (topological) order.
    const std::vector<std::shared_ptr<TensorImpl<T>>>& order() const { return order_; }
    // Replays the record in reverse, seeding the root with `seed`.
    void backward(std::span<const T> seed) const;

private:
    std::vector<std::shared_ptr<TensorImpl<T>>> order_;
};

// Populates grad on every tracked tensor reachable from `loss`.
template <class T>
void backward(const Tensor<T>& loss);

// Builds an output tensor, recording a node when any input is tracked.
template <class T>
Tensor<T> make_result(Shape shape, Buffer<T> data, const char* name,
                      std::vector<Tensor<T>> inputs,
                      std::function<void(std::span<const T>, Node<T>&)> backward_fn);

// Creates a result that shares `src` storage under a different shape.
template <class T>
Tensor<T> make_view(const Tensor<T>& src, Shape shape, const char* name,
                    std::function<void(std::span<const T>, Node<T>&)> backward_fn);

}  // namespace casp
