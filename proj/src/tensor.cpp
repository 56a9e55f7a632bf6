#include "casp/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace casp {

int64_t numel(const Shape& shape) {
    int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

MemoryStats& memory_stats() {
    thread_local MemoryStats stats;
    return stats;
}

void reset_memory_peak() {
    auto& s = memory_stats();
    s.peak_words = s.live_words;
    s.largest_alloc = 0;
}

OpStats& op_stats() {
    thread_local OpStats stats;
    return stats;
}

namespace {
thread_local bool g_grad_enabled = true;

void check_shape(const Shape& shape) {
    for (auto d : shape) {
        if (d <= 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    }
}
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

template <class T>
void TensorImpl<T>::accumulate(std::span<const T> g) {
    ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

template <class T>
Tensor<T>::Tensor(Shape shape, Buffer<T> values) {
    check_shape(shape);
    if (numel(shape) != static_cast<int64_t>(values.size())) {
        throw DimensionError("shape " + shape_str(shape) + " does not match " +
                             std::to_string(values.size()) + " values");
    }
    impl_ = std::make_shared<TensorImpl<T>>();
    impl_->shape = std::move(shape);
    impl_->data = std::make_shared<Buffer<T>>(std::move(values));
}

template <class T>
Tensor<T>::Tensor(Shape shape, std::initializer_list<T> values)
    : Tensor(std::move(shape), Buffer<T>(values.begin(), values.end())) {}

template <class T>
Tensor<T> Tensor<T>::zeros(const Shape& shape) {
    return full(shape, T(0));
}

template <class T>
Tensor<T> Tensor<T>::full(const Shape& shape, T value) {
    check_shape(shape);
    return Tensor(shape, Buffer<T>(static_cast<std::size_t>(numel(shape)), value));
}

template <class T>
Tensor<T> Tensor<T>::from(const Shape& shape, std::span<const T> values) {
    return Tensor(shape, Buffer<T>(values.begin(), values.end()));
}

template <class T>
int64_t Tensor<T>::dim(int64_t axis) const {
    const auto r = rank();
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
    }
    return impl_->shape[static_cast<std::size_t>(axis)];
}

template <class T>
T Tensor<T>::item() const {
    if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return (*impl_->data)[0];
}

template <class T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
    if (impl_->grad_fn) throw ContractError("set_requires_grad on a non-leaf tensor");
    impl_->requires_grad = on;
    return *this;
}

template <class T>
Tensor<T> Tensor<T>::grad_tensor() const {
    if (!has_grad()) return zeros(shape());
    return Tensor(shape(), Buffer<T>(impl_->grad.begin(), impl_->grad.end()));
}

template <class T>
Tensor<T> Tensor<T>::detach() const {
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl<T>>();
    t.impl_->shape = impl_->shape;
    t.impl_->data = impl_->data;
    return t;
}

template <class T>
Tensor<T> Tensor<T>::clone() const {
    return Tensor(shape(), Buffer<T>(impl_->data->begin(), impl_->data->end()));
}

template <class T>
Tape<T>::Tape(const Tensor<T>& root) {
    // Iterative post-order DFS yields a topological order.
    std::unordered_set<const TensorImpl<T>*> seen;
    std::vector<std::pair<std::shared_ptr<TensorImpl<T>>, std::size_t>> stack;
    stack.emplace_back(root.impl(), 0);
    seen.insert(root.impl().get());
    while (!stack.empty()) {
        auto& [impl, next] = stack.back();
        const auto& fn = impl->grad_fn;
        if (fn && next < fn->inputs.size()) {
            auto child = fn->inputs[next++];
            if (child->requires_grad && seen.insert(child.get()).second) stack.emplace_back(child, 0);
            continue;
        }
        order_.push_back(impl);
        stack.pop_back();
    }
}

template <class T>
void Tape<T>::backward(std::span<const T> seed) const {
    if (order_.empty()) return;
    order_.back()->accumulate(seed);
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        auto& impl = *it;
        if (!impl->grad_fn || impl->grad.empty()) continue;
        // Copy: a node may feed itself through aliasing views.
        Buffer<T> g = impl->grad;
        impl->grad_fn->backward(std::span<const T>(g.data(), g.size()), *impl->grad_fn);
    }
}

template <class T>
void backward(const Tensor<T>& loss) {
    if (loss.size() != 1) {
        throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
    }
    if (!loss.requires_grad()) throw ContractError("loss is not connected to any tracked tensor");
    const T one = T(1);
    Tape<T>(loss).backward(std::span<const T>(&one, 1));
}

template <class T>
Tensor<T> make_result(Shape shape, Buffer<T> data, const char* name, std::vector<Tensor<T>> inputs,
                      std::function<void(std::span<const T>, Node<T>&)> backward_fn) {
    Tensor<T> out(std::move(shape), std::move(data));
    if (!grad_enabled()) return out;
    bool tracked = false;
    for (const auto& in : inputs) tracked = tracked || in.requires_grad();
    if (!tracked) return out;
    auto node = std::make_shared<Node<T>>();
    node->name = name;
    for (auto& in : inputs) node->inputs.push_back(in.impl());
    node->backward = std::move(backward_fn);
    out.impl()->requires_grad = true;
    out.impl()->grad_fn = std::move(node);
    return out;
}

template <class T>
Tensor<T> make_view(const Tensor<T>& src, Shape shape, const char* name,
                    std::function<void(std::span<const T>, Node<T>&)> backward_fn) {
    check_shape(shape);
    if (numel(shape) != src.size()) {
        throw DimensionError("cannot view " + shape_str(src.shape()) + " as " + shape_str(shape));
    }
    auto impl = std::make_shared<TensorImpl<T>>();
    impl->shape = std::move(shape);
    impl->data = src.impl()->data;
    auto out = Tensor<T>::wrap(std::move(impl));
    if (!grad_enabled() || !src.requires_grad()) return out;
    auto node = std::make_shared<Node<T>>();
    node->name = name;
    node->inputs.push_back(src.impl());
    node->backward = std::move(backward_fn);
    out.impl()->requires_grad = true;
    out.impl()->grad_fn = std::move(node);
    return out;
}

#define CASP_INSTANTIATE(T)                                                                         \
    template struct TensorImpl<T>;                                                                  \
    template class Tensor<T>;                                                                       \
    template class Tape<T>;                                                                         \
    template void backward<T>(const Tensor<T>&);                                                    \
    template Tensor<T> make_result<T>(Shape, Buffer<T>, const char*, std::vector<Tensor<T>>,        \
                                      std::function<void(std::span<const T>, Node<T>&)>);           \
    template Tensor<T> make_view<T>(const Tensor<T>&, Shape, const char*,                           \
                                    std::function<void(std::span<const T>, Node<T>&)>);

CASP_INSTANTIATE(float)
CASP_INSTANTIATE(double)
CASP_INSTANTIATE(long double)

}  // namespace casp
