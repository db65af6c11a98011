#pragma once

#include <cmath>
#include <vector>

#include "cammsr/params.hpp"
#include "cammsr/tensor.hpp"

namespace cammsr {

// Bias-corrected Adam over a ParamSet, applied in place between passes.
template <class T>
class Adam {
public:
    T lr = T(1e-3);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);

    explicit Adam(const ParamSet<T>& params, T learning_rate = T(1e-3)) : lr(learning_rate) {
        for (const auto& [name, t] : params.items()) {
            m_.emplace_back(t->numel(), T(0));
            v_.emplace_back(t->numel(), T(0));
        }
    }

    int step_count() const { return t_; }

    void step(ParamSet<T>& params) {
        if (params.items().size() != m_.size()) throw ContractError("adam: parameter set changed size");
        ++t_;
        const T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta1), t_));
        const T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta2), t_));
        for (size_t p = 0; p < m_.size(); ++p) {
            auto& tensor = params.items()[p].second;
            if (tensor->g.size() != tensor->v.size())
                throw ContractError("adam: gradient shape mismatch for " + params.items()[p].first);
            if (m_[p].size() != tensor->numel())
                throw ContractError("adam: moment shape mismatch for " + params.items()[p].first);
            T* w = tensor->v.data();
            const T* g = tensor->g.data();
            T* m = m_[p].data();
            T* v = v_[p].data();
            for (size_t i = 0; i < tensor->numel(); ++i) {
                m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
                v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
                const T mhat = m[i] / bc1;
                const T vhat = v[i] / bc2;
                w[i] -= lr * mhat / (static_cast<T>(std::sqrt(static_cast<double>(vhat))) + eps);
            }
        }
    }

private:
    int t_ = 0;
    std::vector<std::vector<T>> m_;
    std::vector<std::vector<T>> v_;
};

}  // namespace cammsr
