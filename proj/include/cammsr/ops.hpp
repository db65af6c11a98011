#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "cammsr/tensor.hpp"

// Differentiable operations over the tape. Every op follows the same shape:
// compute forward into a fresh tensor, and if any input is tracked while the
// tape is recording, allocate the output grad and push a closure that
// accumulates into tracked inputs.

namespace cammsr {

enum class Reduction { sum, mean };

namespace detail {

template <class T>
void check_2d(const Tensor<T>& a, const char* op) {
    if (a->shape.size() != 2) throw DimError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(a->shape));
}

}  // namespace detail

template <class T>
Tensor<T> matmul(Tape<T>& tp, const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_2d(a, "matmul");
    detail::check_2d(b, "matmul");
    if (a->shape[1] != b->shape[0])
        throw DimError("matmul: inner dimensions differ, " + shape_str(a->shape) + " x " + shape_str(b->shape));
    const int m = a->shape[0], k = a->shape[1], n = b->shape[1];
    auto out = zeros<T>({m, n});
    const T* A = a->v.data();
    const T* B = b->v.data();
    T* O = out->v.data();
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            const T aip = A[i * k + p];
            if (aip == T(0)) continue;
            const T* Bp = B + p * n;
            T* Oi = O + i * n;
            for (int j = 0; j < n; ++j) Oi[j] += aip * Bp[j];
        }
    if (want_grad(tp, {a, b})) {
        out->alloc_grad();
        tp.record(out, [a, b, out, m, k, n] {
            const T* G = out->g.data();
            if (a->tracked()) {
                // dA = dOut * B^T, via a transposed copy of B for contiguous access
                std::vector<T> Bt(static_cast<size_t>(k) * n);
                for (int p = 0; p < k; ++p)
                    for (int j = 0; j < n; ++j) Bt[static_cast<size_t>(j) * k + p] = b->v[p * n + j];
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) {
                        const T gij = G[i * n + j];
                        if (gij == T(0)) continue;
                        const T* Btj = Bt.data() + static_cast<size_t>(j) * k;
                        T* dAi = a->g.data() + i * k;
                        for (int p = 0; p < k; ++p) dAi[p] += gij * Btj[p];
                    }
            }
            if (b->tracked()) {
                // dB = A^T * dOut
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) {
                        const T aip = a->v[i * k + p];
                        if (aip == T(0)) continue;
                        const T* Gi = G + i * n;
                        T* dBp = b->g.data() + p * n;
                        for (int j = 0; j < n; ++j) dBp[j] += aip * Gi[j];
                    }
            }
        });
    }
    return out;
}

// out = a * b^T  (m x k) . (n x k) -> (m x n)
template <class T>
Tensor<T> matmul_nt(Tape<T>& tp, const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_2d(a, "matmul_nt");
    detail::check_2d(b, "matmul_nt");
    if (a->shape[1] != b->shape[1])
        throw DimError("matmul_nt: inner dimensions differ, " + shape_str(a->shape) + " x " + shape_str(b->shape) + "^T");
    const int m = a->shape[0], k = a->shape[1], n = b->shape[0];
    auto out = zeros<T>({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            const T* Ai = a->v.data() + i * k;
            const T* Bj = b->v.data() + j * k;
            T s = T(0);
            for (int p = 0; p < k; ++p) s += Ai[p] * Bj[p];
            out->v[i * n + j] = s;
        }
    if (want_grad(tp, {a, b})) {
        out->alloc_grad();
        tp.record(out, [a, b, out, m, k, n] {
            const T* G = out->g.data();
            if (a->tracked()) {
                // dA = dOut * B
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) {
                        const T gij = G[i * n + j];
                        if (gij == T(0)) continue;
                        const T* Bj = b->v.data() + j * k;
                        T* dAi = a->g.data() + i * k;
                        for (int p = 0; p < k; ++p) dAi[p] += gij * Bj[p];
                    }
            }
            if (b->tracked()) {
                // dB = dOut^T * A
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) {
                        const T gij = G[i * n + j];
                        if (gij == T(0)) continue;
                        const T* Ai = a->v.data() + i * k;
                        T* dBj = b->g.data() + j * k;
                        for (int p = 0; p < k; ++p) dBj[p] += gij * Ai[p];
                    }
            }
        });
    }
    return out;
}

template <class T>
Tensor<T> add(Tape<T>& tp, const Tensor<T>& a, const Tensor<T>& b) {
    if (a->shape != b->shape)
        throw DimError("add: shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    auto out = zeros<T>(a->shape);
    for (size_t i = 0; i < out->numel(); ++i) out->v[i] = a->v[i] + b->v[i];
    if (want_grad(tp, {a, b})) {
        out->alloc_grad();
        tp.record(out, [a, b, out] {
            if (a->tracked())
                for (size_t i = 0; i < out->numel(); ++i) a->g[i] += out->g[i];
            if (b->tracked())
                for (size_t i = 0; i < out->numel(); ++i) b->g[i] += out->g[i];
        });
    }
    return out;
}

// Broadcast-add a length-n vector to every row of an m x n matrix.
template <class T>
Tensor<T> add_rowvec(Tape<T>& tp, const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_2d(a, "add_rowvec");
    const int m = a->shape[0], n = a->shape[1];
    if (static_cast<int>(b->numel()) != n)
        throw DimError("add_rowvec: vector length " + shape_str(b->shape) + " does not match columns of " + shape_str(a->shape));
    auto out = zeros<T>(a->shape);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out->v[i * n + j] = a->v[i * n + j] + b->v[j];
    if (want_grad(tp, {a, b})) {
        out->alloc_grad();
        tp.record(out, [a, b, out, m, n] {
            if (a->tracked())
                for (size_t i = 0; i < out->numel(); ++i) a->g[i] += out->g[i];
            if (b->tracked())
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) b->g[j] += out->g[i * n + j];
        });
    }
    return out;
}

template <class T>
Tensor<T> mul(Tape<T>& tp, const Tensor<T>& a, const Tensor<T>& b) {
    if (a->shape != b->shape)
        throw DimError("mul: shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    auto out = zeros<T>(a->shape);
    for (size_t i = 0; i < out->numel(); ++i) out->v[i] = a->v[i] * b->v[i];
    if (want_grad(tp, {a, b})) {
        out->alloc_grad();
        tp.record(out, [a, b, out] {
            if (a->tracked())
                for (size_t i = 0; i < out->numel(); ++i) a->g[i] += out->g[i] * b->v[i];
            if (b->tracked())
                for (size_t i = 0; i < out->numel(); ++i) b->g[i] += out->g[i] * a->v[i];
        });
    }
    return out;
}

template <class T>
Tensor<T> scale_const(Tape<T>& tp, const Tensor<T>& a, T c) {
    auto out = zeros<T>(a->shape);
    for (size_t i = 0; i < out->numel(); ++i) out->v[i] = a->v[i] * c;
    if (want_grad(tp, {a})) {
        out->alloc_grad();
        tp.record(out, [a, out, c] {
            if (a->tracked())
                for (size_t i = 0; i < out->numel(); ++i) a->g[i] += out->g[i] * c;
        });
    }
    return out;
}

// out = s * a where s is a learnable scalar tensor (shape {1}).
template <class T>
Tensor<T> mul_scalar_tensor(Tape<T>& tp, const Tensor<T>& a, const Tensor<T>& s) {
    if (s->numel() != 1) throw DimError("mul_scalar_tensor: scale must be a scalar tensor");
    auto out = zeros<T>(a->shape);
    const T sv = s->v[0];
    for (size_t i = 0; i < out->numel(); ++i) out->v[i] = a->v[i] * sv;
    if (want_grad(tp, {a, s})) {
        out->alloc_grad();
        tp.record(out, [a, s, out, sv] {
            if (a->tracked())
                for (size_t i = 0; i < out->numel(); ++i) a->g[i] += out->g[i] * sv;
            if (s->tracked()) {
                T acc = T(0);
                for (size_t i = 0; i < out->numel(); ++i) acc += out->g[i] * a->v[i];
                s->g[0] += acc;
            }
        });
    }
    return out;
}

namespace detail {

template <class T, class Fwd, class Bwd>
Tensor<T> unary_op(Tape<T>& tp, const Tensor<T>& a, Fwd fwd, Bwd dydx) {
    auto out = zeros<T>(a->shape);
    for (size_t i = 0; i < out->numel(); ++i) out->v[i] = fwd(a->v[i]);
    if (want_grad(tp, {a})) {
        out->alloc_grad();
        tp.record(out, [a, out, dydx] {
            if (!a->tracked()) return;
            for (size_t i = 0; i < out->numel(); ++i) a->g[i] += out->g[i] * dydx(a->v[i], out->v[i]);
        });
    }
    return out;
}

}  // namespace detail

template <class T>
Tensor<T> tanh(Tape<T>& tp, const Tensor<T>& a) {
    return detail::unary_op(
        tp, a, [](T x) { return static_cast<T>(std::tanh(static_cast<double>(x))); },
        [](T, T y) { return T(1) - y * y; });
}

template <class T>
Tensor<T> sigmoid(Tape<T>& tp, const Tensor<T>& a) {
    return detail::unary_op(
        tp, a, [](T x) { return static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(x)))); },
        [](T, T y) { return y * (T(1) - y); });
}

// Exact Gaussian-CDF GeLU: x * Phi(x).
template <class T>
Tensor<T> gelu(Tape<T>& tp, const Tensor<T>& a) {
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    constexpr double inv_sqrt2pi = 0.3989422804014326779;
    return detail::unary_op(
        tp, a,
        [](T x) {
            const double xd = static_cast<double>(x);
            return static_cast<T>(xd * 0.5 * (1.0 + std::erf(xd * inv_sqrt2)));
        },
        [](T x, T) {
            const double xd = static_cast<double>(x);
            const double phi = 0.5 * (1.0 + std::erf(xd * inv_sqrt2));
            const double pdf = inv_sqrt2pi * std::exp(-0.5 * xd * xd);
            return static_cast<T>(phi + xd * pdf);
        });
}

// Pass-through gradient strictly inside (lo, hi), zero outside.
template <class T>
Tensor<T> clamp(Tape<T>& tp, const Tensor<T>& a, T lo, T hi) {
    auto out = zeros<T>(a->shape);
    for (size_t i = 0; i < out->numel(); ++i) out->v[i] = std::min(hi, std::max(lo, a->v[i]));
    if (want_grad(tp, {a})) {
        out->alloc_grad();
        tp.record(out, [a, out, lo, hi] {
            if (!a->tracked()) return;
            for (size_t i = 0; i < out->numel(); ++i)
                if (a->v[i] > lo && a->v[i] < hi) a->g[i] += out->g[i];
        });
    }
    return out;
}

// Numerically-stabilized softmax along an arbitrary axis.
template <class T>
Tensor<T> softmax(Tape<T>& tp, const Tensor<T>& a, int axis) {
    const int rank = static_cast<int>(a->shape.size());
    if (axis < 0 || axis >= rank)
        throw DimError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(a->shape));
    size_t inner = 1, outer = 1;
    for (int i = axis + 1; i < rank; ++i) inner *= static_cast<size_t>(a->shape[i]);
    for (int i = 0; i < axis; ++i) outer *= static_cast<size_t>(a->shape[i]);
    const size_t n = static_cast<size_t>(a->shape[axis]);
    auto out = zeros<T>(a->shape);
    for (size_t o = 0; o < outer; ++o)
        for (size_t in = 0; in < inner; ++in) {
            const size_t base = o * n * inner + in;
            T mx = a->v[base];
            for (size_t j = 1; j < n; ++j) mx = std::max(mx, a->v[base + j * inner]);
            double sum = 0.0;
            for (size_t j = 0; j < n; ++j) {
                const double e = std::exp(static_cast<double>(a->v[base + j * inner] - mx));
                out->v[base + j * inner] = static_cast<T>(e);
                sum += e;
            }
            for (size_t j = 0; j < n; ++j)
                out->v[base + j * inner] = static_cast<T>(static_cast<double>(out->v[base + j * inner]) / sum);
        }
    if (want_grad(tp, {a})) {
        out->alloc_grad();
        tp.record(out, [a, out, outer, inner, n] {
            if (!a->tracked()) return;
            for (size_t o = 0; o < outer; ++o)
                for (size_t in = 0; in < inner; ++in) {
                    const size_t base = o * n * inner + in;
                    T dot = T(0);
                    for (size_t j = 0; j < n; ++j) dot += out->g[base + j * inner] * out->v[base + j * inner];
                    for (size_t j = 0; j < n; ++j)
                        a->g[base + j * inner] += out->v[base + j * inner] * (out->g[base + j * inner] - dot);
                }
        });
    }
    return out;
}

// Row softmax restricted to allowed entries; disallowed entries output 0.
// A fully-masked row yields an all-zero row rather than NaN.
template <class T>
Tensor<T> masked_softmax_rows(Tape<T>& tp, const Tensor<T>& a, const std::vector<uint8_t>& allow) {
    detail::check_2d(a, "masked_softmax_rows");
    const int m = a->shape[0], n = a->shape[1];
    if (allow.size() != a->numel()) throw DimError("masked_softmax_rows: mask size mismatch");
    auto out = zeros<T>(a->shape);
    for (int i = 0; i < m; ++i) {
        T mx = T(0);
        bool any = false;
        for (int j = 0; j < n; ++j)
            if (allow[i * n + j]) {
                mx = any ? std::max(mx, a->v[i * n + j]) : a->v[i * n + j];
                any = true;
            }
        if (!any) continue;
        double sum = 0.0;
        for (int j = 0; j < n; ++j)
            if (allow[i * n + j]) {
                const double e = std::exp(static_cast<double>(a->v[i * n + j] - mx));
                out->v[i * n + j] = static_cast<T>(e);
                sum += e;
            }
        for (int j = 0; j < n; ++j)
            if (allow[i * n + j])
                out->v[i * n + j] = static_cast<T>(static_cast<double>(out->v[i * n + j]) / sum);
    }
    if (want_grad(tp, {a})) {
        out->alloc_grad();
        tp.record(out, [a, out, allow, m, n] {
            if (!a->tracked()) return;
            for (int i = 0; i < m; ++i) {
                T dot = T(0);
                for (int j = 0; j < n; ++j)
                    if (allow[i * n + j]) dot += out->g[i * n + j] * out->v[i * n + j];
                for (int j = 0; j < n; ++j)
                    if (allow[i * n + j])
                        a->g[i * n + j] += out->v[i * n + j] * (out->g[i * n + j] - dot);
            }
        });
    }
    return out;
}

template <class T>
Tensor<T> sum_all(Tape<T>& tp, const Tensor<T>& a) {
    auto out = zeros<T>({1});
    T s = T(0);
    for (T x : a->v) s += x;
    out->v[0] = s;
    if (want_grad(tp, {a})) {
        out->alloc_grad();
        tp.record(out, [a, out] {
            if (!a->tracked()) return;
            for (size_t i = 0; i < a->numel(); ++i) a->g[i] += out->g[0];
        });
    }
    return out;
}

template <class T>
Tensor<T> mean_all(Tape<T>& tp, const Tensor<T>& a) {
    return scale_const(tp, sum_all(tp, a), T(1) / static_cast<T>(a->numel()));
}

// Softmax cross-entropy over rows: loss_i = logsumexp(row_i) - row_i[target_i].
template <class T>
Tensor<T> cross_entropy_rows(Tape<T>& tp, const Tensor<T>& logits, const std::vector<int>& targets,
                             Reduction reduction) {
    detail::check_2d(logits, "cross_entropy_rows");
    const int m = logits->shape[0], n = logits->shape[1];
    if (static_cast<int>(targets.size()) != m)
        throw DimError("cross_entropy_rows: expected " + std::to_string(m) + " targets, got " + std::to_string(targets.size()));
    for (int t : targets)
        if (t < 0 || t >= n) throw ContractError("cross_entropy_rows: target column " + std::to_string(t) + " out of range");
    auto out = zeros<T>({1});
    std::vector<T> lse(static_cast<size_t>(m));
    double total = 0.0;
    for (int i = 0; i < m; ++i) {
        const T* row = logits->v.data() + i * n;
        T mx = row[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += std::exp(static_cast<double>(row[j] - mx));
        lse[i] = mx + static_cast<T>(std::log(s));
        total += static_cast<double>(lse[i] - row[targets[i]]);
    }
    const T w = reduction == Reduction::mean ? T(1) / static_cast<T>(m) : T(1);
    out->v[0] = static_cast<T>(total) * w;
    if (want_grad(tp, {logits})) {
        out->alloc_grad();
        tp.record(out, [logits, out, targets, lse, m, n, w] {
            if (!logits->tracked()) return;
            const T go = out->g[0] * w;
            for (int i = 0; i < m; ++i) {
                const T* row = logits->v.data() + i * n;
                T* grow = logits->g.data() + i * n;
                for (int j = 0; j < n; ++j) {
                    T p = static_cast<T>(std::exp(static_cast<double>(row[j] - lse[i])));
                    grow[j] += go * (p - (j == targets[i] ? T(1) : T(0)));
                }
            }
        });
    }
    return out;
}

// Per-row layer normalization with learnable gain and bias.
template <class T>
Tensor<T> layer_norm(Tape<T>& tp, const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
    detail::check_2d(x, "layer_norm");
    const int m = x->shape[0], d = x->shape[1];
    if (static_cast<int>(gain->numel()) != d || static_cast<int>(bias->numel()) != d)
        throw DimError("layer_norm: gain/bias length must equal feature dim " + std::to_string(d));
    auto out = zeros<T>(x->shape);
    std::vector<T> mu(static_cast<size_t>(m)), ivar(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) {
        const T* row = x->v.data() + i * d;
        T s = T(0);
        for (int j = 0; j < d; ++j) s += row[j];
        mu[i] = s / static_cast<T>(d);
        T v = T(0);
        for (int j = 0; j < d; ++j) {
            const T c = row[j] - mu[i];
            v += c * c;
        }
        ivar[i] = T(1) / static_cast<T>(std::sqrt(static_cast<double>(v / static_cast<T>(d) + eps)));
        for (int j = 0; j < d; ++j) out->v[i * d + j] = (row[j] - mu[i]) * ivar[i] * gain->v[j] + bias->v[j];
    }
    if (want_grad(tp, {x, gain, bias})) {
        out->alloc_grad();
        tp.record(out, [x, gain, bias, out, mu, ivar, m, d] {
            for (int i = 0; i < m; ++i) {
                const T* row = x->v.data() + i * d;
                const T* go = out->g.data() + i * d;
                if (gain->tracked() || bias->tracked()) {
                    for (int j = 0; j < d; ++j) {
                        const T xhat = (row[j] - mu[i]) * ivar[i];
                        if (gain->tracked()) gain->g[j] += go[j] * xhat;
                        if (bias->tracked()) bias->g[j] += go[j];
                    }
                }
                if (x->tracked()) {
                    T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
                    for (int j = 0; j < d; ++j) {
                        const T xhat = (row[j] - mu[i]) * ivar[i];
                        const T dxhat = go[j] * gain->v[j];
                        sum_dxhat += dxhat;
                        sum_dxhat_xhat += dxhat * xhat;
                    }
                    const T inv_d = T(1) / static_cast<T>(d);
                    for (int j = 0; j < d; ++j) {
                        const T xhat = (row[j] - mu[i]) * ivar[i];
                        const T dxhat = go[j] * gain->v[j];
                        x->g[i * d + j] += ivar[i] * (dxhat - inv_d * sum_dxhat - xhat * inv_d * sum_dxhat_xhat);
                    }
                }
            }
        });
    }
    return out;
}

// Rows scaled to unit L2 norm (with an epsilon guard against zero rows).
template <class T>
Tensor<T> l2_normalize_rows(Tape<T>& tp, const Tensor<T>& x, T eps) {
    detail::check_2d(x, "l2_normalize_rows");
    const int m = x->shape[0], d = x->shape[1];
    auto out = zeros<T>(x->shape);
    std::vector<T> norm(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) {
        const T* row = x->v.data() + i * d;
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += static_cast<double>(row[j]) * static_cast<double>(row[j]);
        norm[i] = static_cast<T>(std::sqrt(s));
        const T scale = T(1) / (norm[i] + eps);
        for (int j = 0; j < d; ++j) out->v[i * d + j] = row[j] * scale;
    }
    if (want_grad(tp, {x})) {
        out->alloc_grad();
        tp.record(out, [x, out, norm, eps, m, d] {
            if (!x->tracked()) return;
            for (int i = 0; i < m; ++i) {
                const T* row = x->v.data() + i * d;
                const T* go = out->g.data() + i * d;
                const T s = norm[i] + eps;
                T dot = T(0);
                for (int j = 0; j < d; ++j) dot += go[j] * row[j];
                const T coef = norm[i] > T(0) ? dot / (s * s * norm[i]) : T(0);
                for (int j = 0; j < d; ++j) x->g[i * d + j] += go[j] / s - row[j] * coef;
            }
        });
    }
    return out;
}

// Row lookup: out[t] = table[idx[t]]; idx < 0 selects a zero row and routes
// no gradient (used for the padding id).
template <class T>
Tensor<T> gather_rows(Tape<T>& tp, const Tensor<T>& table, const std::vector<int>& idx) {
    detail::check_2d(table, "gather_rows");
    const int rows = table->shape[0], d = table->shape[1];
    const int m = static_cast<int>(idx.size());
    auto out = zeros<T>({m, d});
    for (int t = 0; t < m; ++t) {
        if (idx[t] < 0) continue;
        if (idx[t] >= rows) throw ContractError("gather_rows: index " + std::to_string(idx[t]) + " out of range");
        const T* src = table->v.data() + idx[t] * d;
        std::copy(src, src + d, out->v.data() + t * d);
    }
    if (want_grad(tp, {table})) {
        out->alloc_grad();
        tp.record(out, [table, out, idx, d] {
            if (!table->tracked()) return;
            for (size_t t = 0; t < idx.size(); ++t) {
                if (idx[t] < 0) continue;
                T* dst = table->g.data() + static_cast<size_t>(idx[t]) * d;
                const T* src = out->g.data() + t * d;
                for (int j = 0; j < d; ++j) dst[j] += src[j];
            }
        });
    }
    return out;
}

template <class T>
Tensor<T> slice_rows(Tape<T>& tp, const Tensor<T>& x, int r0, int r1) {
    detail::check_2d(x, "slice_rows");
    const int m = x->shape[0], d = x->shape[1];
    if (r0 < 0 || r1 > m || r0 >= r1) throw DimError("slice_rows: bad row range");
    auto out = zeros<T>({r1 - r0, d});
    std::copy(x->v.begin() + static_cast<size_t>(r0) * d, x->v.begin() + static_cast<size_t>(r1) * d, out->v.begin());
    if (want_grad(tp, {x})) {
        out->alloc_grad();
        tp.record(out, [x, out, r0, d] {
            if (!x->tracked()) return;
            for (size_t i = 0; i < out->numel(); ++i) x->g[static_cast<size_t>(r0) * d + i] += out->g[i];
        });
    }
    return out;
}

template <class T>
Tensor<T> slice_cols(Tape<T>& tp, const Tensor<T>& x, int c0, int c1) {
    detail::check_2d(x, "slice_cols");
    const int m = x->shape[0], n = x->shape[1];
    if (c0 < 0 || c1 > n || c0 >= c1) throw DimError("slice_cols: bad column range");
    const int w = c1 - c0;
    auto out = zeros<T>({m, w});
    for (int i = 0; i < m; ++i)
        std::copy(x->v.begin() + i * n + c0, x->v.begin() + i * n + c1, out->v.begin() + static_cast<size_t>(i) * w);
    if (want_grad(tp, {x})) {
        out->alloc_grad();
        tp.record(out, [x, out, c0, m, n, w] {
            if (!x->tracked()) return;
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < w; ++j) x->g[i * n + c0 + j] += out->g[i * w + j];
        });
    }
    return out;
}

template <class T>
Tensor<T> concat_cols(Tape<T>& tp, const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw DimError("concat_cols: no inputs");
    const int m = parts[0]->shape[0];
    int n = 0;
    for (const auto& p : parts) {
        detail::check_2d(p, "concat_cols");
        if (p->shape[0] != m) throw DimError("concat_cols: row counts differ");
        n += p->shape[1];
    }
    auto out = zeros<T>({m, n});
    int off = 0;
    for (const auto& p : parts) {
        const int w = p->shape[1];
        for (int i = 0; i < m; ++i)
            std::copy(p->v.begin() + static_cast<size_t>(i) * w, p->v.begin() + static_cast<size_t>(i + 1) * w,
                      out->v.begin() + static_cast<size_t>(i) * n + off);
        off += w;
    }
    bool track = tp.recording;
    if (track) {
        track = false;
        for (const auto& p : parts) track = track || p->tracked();
    }
    if (track) {
        out->alloc_grad();
        tp.record(out, [parts, out, m, n] {
            int off2 = 0;
            for (const auto& p : parts) {
                const int w = p->shape[1];
                if (p->tracked())
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < w; ++j) p->g[i * w + j] += out->g[i * n + off2 + j];
                off2 += w;
            }
        });
    }
    return out;
}

template <class T>
Tensor<T> concat_rows(Tape<T>& tp, const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw DimError("concat_rows: no inputs");
    const int d = parts[0]->cols();
    int m = 0;
    for (const auto& p : parts) {
        detail::check_2d(p, "concat_rows");
        if (p->shape[1] != d) throw DimError("concat_rows: column counts differ");
        m += p->shape[0];
    }
    auto out = zeros<T>({m, d});
    size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p->v.begin(), p->v.end(), out->v.begin() + off);
        off += p->numel();
    }
    bool track = tp.recording;
    if (track) {
        track = false;
        for (const auto& p : parts) track = track || p->tracked();
    }
    if (track) {
        out->alloc_grad();
        tp.record(out, [parts, out] {
            size_t off2 = 0;
            for (const auto& p : parts) {
                if (p->tracked())
                    for (size_t i = 0; i < p->numel(); ++i) p->g[i] += out->g[off2 + i];
                off2 += p->numel();
            }
        });
    }
    return out;
}

// Stacks n length-m vectors as the columns of an m x n matrix.
template <class T>
Tensor<T> stack_cols(Tape<T>& tp, const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw DimError("stack_cols: no inputs");
    const int m = static_cast<int>(parts[0]->numel());
    const int n = static_cast<int>(parts.size());
    for (const auto& p : parts)
        if (static_cast<int>(p->numel()) != m) throw DimError("stack_cols: lengths differ");
    auto out = zeros<T>({m, n});
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < m; ++i) out->v[i * n + j] = parts[j]->v[i];
    bool track = tp.recording;
    if (track) {
        track = false;
        for (const auto& p : parts) track = track || p->tracked();
    }
    if (track) {
        out->alloc_grad();
        tp.record(out, [parts, out, m, n] {
            for (int j = 0; j < n; ++j)
                if (parts[j]->tracked())
                    for (int i = 0; i < m; ++i) parts[j]->g[i] += out->g[i * n + j];
        });
    }
    return out;
}

template <class T>
Tensor<T> column(Tape<T>& tp, const Tensor<T>& x, int j) {
    detail::check_2d(x, "column");
    const int m = x->shape[0], n = x->shape[1];
    if (j < 0 || j >= n) throw DimError("column: index out of range");
    auto out = zeros<T>({m});
    for (int i = 0; i < m; ++i) out->v[i] = x->v[i * n + j];
    if (want_grad(tp, {x})) {
        out->alloc_grad();
        tp.record(out, [x, out, j, m, n] {
            if (!x->tracked()) return;
            for (int i = 0; i < m; ++i) x->g[i * n + j] += out->g[i];
        });
    }
    return out;
}

// out[i, :] = w[i] * x[i, :]
template <class T>
Tensor<T> scale_rows(Tape<T>& tp, const Tensor<T>& x, const Tensor<T>& w) {
    detail::check_2d(x, "scale_rows");
    const int m = x->shape[0], d = x->shape[1];
    if (static_cast<int>(w->numel()) != m) throw DimError("scale_rows: weight length must equal row count");
    auto out = zeros<T>(x->shape);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < d; ++j) out->v[i * d + j] = x->v[i * d + j] * w->v[i];
    if (want_grad(tp, {x, w})) {
        out->alloc_grad();
        tp.record(out, [x, w, out, m, d] {
            for (int i = 0; i < m; ++i) {
                if (x->tracked())
                    for (int j = 0; j < d; ++j) x->g[i * d + j] += out->g[i * d + j] * w->v[i];
                if (w->tracked()) {
                    T acc = T(0);
                    for (int j = 0; j < d; ++j) acc += out->g[i * d + j] * x->v[i * d + j];
                    w->g[i] += acc;
                }
            }
        });
    }
    return out;
}

// Row-wise select: out[i] = take_b[i] ? b[i] : a[i].
template <class T>
Tensor<T> row_merge(Tape<T>& tp, const Tensor<T>& a, const Tensor<T>& b, const std::vector<uint8_t>& take_b) {
    if (a->shape != b->shape) throw DimError("row_merge: shape mismatch");
    detail::check_2d(a, "row_merge");
    const int m = a->shape[0], d = a->shape[1];
    if (static_cast<int>(take_b.size()) != m) throw DimError("row_merge: flag length must equal row count");
    auto out = zeros<T>(a->shape);
    for (int i = 0; i < m; ++i) {
        const T* src = (take_b[i] ? b->v.data() : a->v.data()) + i * d;
        std::copy(src, src + d, out->v.data() + static_cast<size_t>(i) * d);
    }
    if (want_grad(tp, {a, b})) {
        out->alloc_grad();
        tp.record(out, [a, b, out, take_b, m, d] {
            for (int i = 0; i < m; ++i) {
                const auto& dst = take_b[i] ? b : a;
                if (!dst->tracked()) continue;
                for (int j = 0; j < d; ++j) dst->g[i * d + j] += out->g[i * d + j];
            }
        });
    }
    return out;
}

// Inverted dropout with a precomputed keep mask: kept entries scaled by 1/(1-p).
template <class T>
Tensor<T> apply_dropout(Tape<T>& tp, const Tensor<T>& x, const std::vector<uint8_t>& keep, T scale) {
    if (keep.size() != x->numel()) throw DimError("apply_dropout: mask size mismatch");
    auto out = zeros<T>(x->shape);
    for (size_t i = 0; i < out->numel(); ++i) out->v[i] = keep[i] ? x->v[i] * scale : T(0);
    if (want_grad(tp, {x})) {
        out->alloc_grad();
        tp.record(out, [x, out, keep, scale] {
            if (!x->tracked()) return;
            for (size_t i = 0; i < out->numel(); ++i)
                if (keep[i]) x->g[i] += out->g[i] * scale;
        });
    }
    return out;
}

}  // namespace cammsr
