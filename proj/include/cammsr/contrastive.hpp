#pragma once

#include <utility>
#include <vector>

#include "cammsr/ops.hpp"
#include "cammsr/rng.hpp"
#include "cammsr/tensor.hpp"

namespace cammsr {

// Which positions exchange their two modality representations.
struct SwapPlan {
    std::vector<uint8_t> positions;  // 1 = swapped
};

// Bernoulli(rho) per position; padded positions never swap. One uniform is
// drawn per position regardless of the mask so consumption is fixed.
inline SwapPlan draw_swap_plan(Rng& rng, const std::vector<uint8_t>& mask, double rho) {
    SwapPlan plan;
    plan.positions.resize(mask.size());
    for (size_t i = 0; i < mask.size(); ++i) {
        const bool hit = rng.uniform() < rho;
        plan.positions[i] = mask[i] && hit;
    }
    return plan;
}

// Exchanges rows of the two sequences at planned positions. Applying the
// same plan twice restores the originals.
template <class T>
std::pair<Tensor<T>, Tensor<T>> swap_sequences(Tape<T>& tp, const Tensor<T>& s1, const Tensor<T>& s2,
                                               const SwapPlan& plan) {
    if (s1->shape != s2->shape) throw DimError("swap_sequences: shape mismatch");
    return {row_merge(tp, s1, s2, plan.positions), row_merge(tp, s2, s1, plan.positions)};
}

// Batched InfoNCE over cosine similarities, anchors are rows of z1 and
// candidates rows of z2; positives sit on the diagonal. Summed over the
// batch, no symmetrized term.
template <class T>
Tensor<T> infonce(Tape<T>& tp, const Tensor<T>& z1, const Tensor<T>& z2, T temperature = T(1)) {
    if (z1->shape != z2->shape) throw DimError("infonce: view shapes differ");
    detail::check_2d(z1, "infonce");
    const int b = z1->shape[0];
    auto n1 = l2_normalize_rows(tp, z1, static_cast<T>(1e-12));
    auto n2 = l2_normalize_rows(tp, z2, static_cast<T>(1e-12));
    auto sim = matmul_nt(tp, n1, n2);
    if (temperature != T(1)) sim = scale_const(tp, sim, T(1) / temperature);
    std::vector<int> diag(static_cast<size_t>(b));
    for (int i = 0; i < b; ++i) diag[static_cast<size_t>(i)] = i;
    return cross_entropy_rows(tp, sim, diag, Reduction::sum);
}

}  // namespace cammsr
