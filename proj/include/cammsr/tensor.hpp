#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "cammsr/error.hpp"
#include "cammsr/rng.hpp"

namespace cammsr {

// Dense row-major tensor. The scalar type is a template parameter: float for
// training, double for finite-difference gradient checks. grad is allocated
// only for tensors that participate in a recorded graph.
template <class T>
struct TensorImpl {
    std::vector<int> shape;
    std::vector<T> v;
    std::vector<T> g;
    bool requires_grad = false;

    size_t numel() const { return v.size(); }
    int rows() const { return shape.empty() ? 1 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
    bool tracked() const { return !g.empty(); }
    void alloc_grad() { g.assign(v.size(), T(0)); }
    void zero_grad() { g.assign(g.size(), T(0)); }
};

template <class T>
using Tensor = std::shared_ptr<TensorImpl<T>>;

inline size_t shape_numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw DimError("tensor dimension must be positive");
        n *= static_cast<size_t>(d);
    }
    return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

template <class T>
Tensor<T> make_tensor(std::vector<int> shape, std::vector<T> values) {
    if (shape_numel(shape) != values.size())
        throw DimError("tensor values do not match shape " + shape_str(shape));
    auto t = std::make_shared<TensorImpl<T>>();
    t->shape = std::move(shape);
    t->v = std::move(values);
    return t;
}

template <class T>
Tensor<T> zeros(std::vector<int> shape) {
    auto t = std::make_shared<TensorImpl<T>>();
    size_t n = shape_numel(shape);
    t->shape = std::move(shape);
    t->v.assign(n, T(0));
    return t;
}

template <class T>
Tensor<T> full(std::vector<int> shape, T value) {
    auto t = zeros<T>(std::move(shape));
    t->v.assign(t->v.size(), value);
    return t;
}

template <class T>
Tensor<T> scalar(T value) {
    return make_tensor<T>({1}, {value});
}

// Marks a tensor as a trainable leaf: grad buffer allocated and accumulated.
template <class T>
Tensor<T> leaf(Tensor<T> t) {
    t->requires_grad = true;
    t->alloc_grad();
    return t;
}

// Xavier/Glorot uniform init for rank-2 tensors: values in ±sqrt(6/(fan_in+fan_out)).
template <class T>
Tensor<T> xavier_init(const std::vector<int>& shape, Rng& rng) {
    if (shape.size() != 2)
        throw DimError("xavier_init: expected rank-2 shape, got " + shape_str(shape));
    const double bound = std::sqrt(6.0 / (static_cast<double>(shape[0]) + static_cast<double>(shape[1])));
    auto t = zeros<T>(shape);
    for (auto& x : t->v) x = static_cast<T>(rng.uniform(-bound, bound));
    return t;
}

template <class T>
bool all_finite(const std::vector<T>& xs) {
    for (T x : xs)
        if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
}

// Reverse-mode tape: ops append their output and a backward closure in
// execution order; backward() replays the list in reverse. Intermediate
// grads are zeroed before each replay so leaf grads accumulate across
// repeated backward() calls, matching optimizer semantics.
template <class T>
class Tape {
public:
    bool recording = true;
    bool debug_finite = false;

    void record(const Tensor<T>& out, std::function<void()> bwd) {
        if (debug_finite && !all_finite(out->v))
            throw DivergenceError("non-finite value in forward pass at op " + std::to_string(entries_.size()));
        entries_.push_back({out, std::move(bwd)});
    }

    void backward(const Tensor<T>& loss) {
        if (loss->numel() != 1)
            throw ContractError("backward: loss must be a scalar, got shape " + shape_str(loss->shape));
        if (!loss->tracked())
            throw ContractError("backward: loss was not produced by recorded operations");
        for (auto& e : entries_) e.out->zero_grad();
        loss->g[0] = T(1);
        for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->bwd();
        if (debug_finite) {
            for (auto& e : entries_)
                if (!all_finite(e.out->g))
                    throw DivergenceError("non-finite gradient in backward pass");
        }
    }

    size_t size() const { return entries_.size(); }
    void clear() { entries_.clear(); }

private:
    struct Entry {
        Tensor<T> out;
        std::function<void()> bwd;
    };
    std::vector<Entry> entries_;
};

template <class T>
bool want_grad(const Tape<T>& tp, std::initializer_list<Tensor<T>> inputs) {
    if (!tp.recording) return false;
    for (const auto& t : inputs)
        if (t->tracked()) return true;
    return false;
}

}  // namespace cammsr
