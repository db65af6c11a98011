#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cammsr/tensor.hpp"

namespace cammsr {

// Ordered registry of named trainable tensors. Registration order is fixed by
// model construction, which keeps optimizer state, checkpoints and gradient
// reports aligned across runs.
template <class T>
class ParamSet {
public:
    Tensor<T> add(const std::string& name, Tensor<T> t) {
        items_.emplace_back(name, t);
        return t;
    }

    const std::vector<std::pair<std::string, Tensor<T>>>& items() const { return items_; }

    Tensor<T> find(const std::string& name) const {
        for (const auto& [n, t] : items_)
            if (n == name) return t;
        throw ContractError("parameter not found: " + name);
    }

    void zero_grad() {
        for (auto& [n, t] : items_) t->zero_grad();
    }

    size_t scalar_count() const {
        size_t n = 0;
        for (const auto& [name, t] : items_) n += t->numel();
        return n;
    }

    std::vector<std::vector<T>> snapshot_values() const {
        std::vector<std::vector<T>> vs;
        vs.reserve(items_.size());
        for (const auto& [n, t] : items_) vs.push_back(t->v);
        return vs;
    }

    void restore_values(const std::vector<std::vector<T>>& vs) {
        if (vs.size() != items_.size()) throw ContractError("parameter snapshot size mismatch");
        for (size_t i = 0; i < items_.size(); ++i) {
            if (vs[i].size() != items_[i].second->v.size())
                throw ContractError("parameter snapshot shape mismatch at " + items_[i].first);
            items_[i].second->v = vs[i];
        }
    }

    bool all_values_finite() const {
        for (const auto& [n, t] : items_)
            if (!all_finite(t->v)) return false;
        return true;
    }

private:
    std::vector<std::pair<std::string, Tensor<T>>> items_;
};

}  // namespace cammsr
