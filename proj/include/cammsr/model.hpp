#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "cammsr/config.hpp"
#include "cammsr/data.hpp"
#include "cammsr/ops.hpp"
#include "cammsr/params.hpp"
#include "cammsr/rng.hpp"
#include "cammsr/tensor.hpp"

namespace cammsr {

// Multi-label BCE difference per position (the category prediction signal).
// For each valid position: negative classes contribute -log(1-p) summed;
// positive-class terms -log(p) are pooled (mean/max/min). Probabilities are
// clamped to [1e-7, 1-1e-7] before the logs. Invalid positions yield 0.
template <class T>
Tensor<T> category_bce(Tape<T>& tp, const Tensor<T>& logits, const int* label_offsets, const int* labels,
                       const std::vector<uint8_t>& valid, Pooling pooling) {
    detail::check_2d(logits, "category_bce");
    const int len = logits->shape[0], C = logits->shape[1];
    if (static_cast<int>(valid.size()) != len) throw DimError("category_bce: valid mask length mismatch");
    const T lo = static_cast<T>(1e-7), hi = static_cast<T>(1.0 - 1e-7);
    auto out = zeros<T>({len});

    // Self-contained copies so the backward closure never touches caller arrays.
    std::vector<int> offs(static_cast<size_t>(len) + 1);
    for (int i = 0; i <= len; ++i) offs[static_cast<size_t>(i)] = label_offsets[i] - label_offsets[0];
    std::vector<int> labs(labels + label_offsets[0], labels + label_offsets[len]);

    auto prob = [logits, C](int i, int c) {
        const double z = static_cast<double>(logits->v[i * C + c]);
        return static_cast<T>(1.0 / (1.0 + std::exp(-z)));
    };
    // Pooled positive term; for max/min also reports the selected label slot.
    // Captures by value: the backward closure outlives this scope.
    auto pooled_positive = [prob, labs, pooling, lo, hi](int i, int begin, int end, int& chosen) {
        chosen = -1;
        if (begin == end) return T(0);
        T pooled = T(0);
        bool first = true;
        for (int s = begin; s < end; ++s) {
            const T pc = std::min(hi, std::max(lo, prob(i, labs[static_cast<size_t>(s)])));
            const T term = static_cast<T>(-std::log(static_cast<double>(pc)));
            if (pooling == Pooling::mean) {
                pooled += term / static_cast<T>(end - begin);
            } else if (first || (pooling == Pooling::max && term > pooled) ||
                       (pooling == Pooling::min && term < pooled)) {
                pooled = term;
                chosen = s;
            }
            first = false;
        }
        return pooled;
    };

    std::vector<uint8_t> is_pos(static_cast<size_t>(C));
    for (int i = 0; i < len; ++i) {
        if (!valid[static_cast<size_t>(i)]) continue;
        const int begin = offs[static_cast<size_t>(i)], end = offs[static_cast<size_t>(i) + 1];
        std::fill(is_pos.begin(), is_pos.end(), 0);
        for (int s = begin; s < end; ++s) is_pos[static_cast<size_t>(labs[static_cast<size_t>(s)])] = 1;
        int chosen;
        T d = pooled_positive(i, begin, end, chosen);
        for (int c = 0; c < C; ++c) {
            if (is_pos[static_cast<size_t>(c)]) continue;
            const T pc = std::min(hi, std::max(lo, prob(i, c)));
            d += static_cast<T>(-std::log(static_cast<double>(T(1) - pc)));
        }
        out->v[static_cast<size_t>(i)] = d;
    }

    if (want_grad(tp, {logits})) {
        out->alloc_grad();
        tp.record(out, [logits, out, offs, labs, valid, pooling, len, C, lo, hi, prob, pooled_positive] {
            if (!logits->tracked()) return;
            std::vector<uint8_t> pos(static_cast<size_t>(C));
            for (int i = 0; i < len; ++i) {
                if (!valid[static_cast<size_t>(i)]) continue;
                const T gi = out->g[static_cast<size_t>(i)];
                if (gi == T(0)) continue;
                const int begin = offs[static_cast<size_t>(i)], end = offs[static_cast<size_t>(i) + 1];
                std::fill(pos.begin(), pos.end(), 0);
                for (int s = begin; s < end; ++s) pos[static_cast<size_t>(labs[static_cast<size_t>(s)])] = 1;
                int chosen;
                pooled_positive(i, begin, end, chosen);
                for (int c = 0; c < C; ++c) {
                    if (pos[static_cast<size_t>(c)]) continue;
                    const T p = prob(i, c);
                    if (p <= lo || p >= hi) continue;  // clamped: zero local slope
                    logits->g[i * C + c] += gi * p;  // d/dz of -log(1 - sigmoid(z))
                }
                for (int s = begin; s < end; ++s) {
                    const int c = labs[static_cast<size_t>(s)];
                    const T p = prob(i, c);
                    if (p <= lo || p >= hi) continue;
                    T w = T(0);
                    if (pooling == Pooling::mean)
                        w = T(1) / static_cast<T>(end - begin);
                    else if (s == chosen)
                        w = T(1);
                    if (w == T(0)) continue;
                    logits->g[i * C + c] += gi * w * (p - T(1));  // d/dz of -log(sigmoid(z))
                }
            }
        });
    }
    return out;
}

// DyT normalization: tanh(alpha * x) with a learnable scalar alpha.
template <class T>
Tensor<T> dyt(Tape<T>& tp, const Tensor<T>& x, const Tensor<T>& alpha) {
    return tanh(tp, mul_scalar_tensor(tp, x, alpha));
}

template <class T>
struct StepContext {
    Tape<T>* tape = nullptr;
    bool training = false;
    Rng rng{0};
    std::array<Tensor<T>, 3> catalog;  // position-free base reps, |I| x d per active modality
    int contrastive_calls = 0;         // instrumentation for the lambda=0 reduction check
};

template <class T>
struct CamoeResult {
    std::array<Tensor<T>, 3> gates;     // len x K per active modality
    std::array<Tensor<T>, 3> experts;   // len x d mixed expert outputs
    std::array<Tensor<T>, 3> diffs;     // len BCE differences (null when guidance off)
    Tensor<T> weights;                  // len x |active| fusion weights
    std::array<Tensor<T>, 3> enriched;  // len x d final representations
};

template <class T>
class Model {
public:
    ModelConfig cfg;
    ParamSet<T> params;

    // Representation tables.
    Tensor<T> id_table;  // (|I|+1) x d, row 0 is the padding row and stays zero
    Tensor<T> proj_w[3], proj_b[3];
    Tensor<T> pos_table;
    Tensor<T> features[3];  // frozen modality features, |I| x dim (untracked)

    struct ExpertParams {
        Tensor<T> w1, b1, w2, b2;
    };
    struct CamoeParams {
        std::vector<ExpertParams> experts;
        Tensor<T> router_q, router_k, router_v;  // attentive gate
        Tensor<T> gate_w;                        // linear gate (wo_att)
        Tensor<T> category_w, category_b;
    };
    struct NormParams {
        Tensor<T> alpha;  // dyt
        Tensor<T> gain, bias;  // layernorm
    };
    struct BlockParams {
        Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
        Tensor<T> ffn_w1, ffn_b1, ffn_w2, ffn_b2;
        NormParams norm1, norm2;
    };
    struct EncoderParams {
        NormParams pre;
        std::vector<BlockParams> blocks;
    };
    CamoeParams camoe[3];
    EncoderParams encoder[3];

    Model(ModelConfig config, const FeatureMatrix* text, const FeatureMatrix* visual, uint64_t seed)
        : cfg(std::move(config)) {
        cfg.validate();
        const int d = cfg.hidden;
        auto named_rng = [&](const std::string& name) { return Rng(Rng::mix(seed, Rng::hash_name(name))); };
        auto xp = [&](const std::string& name, std::vector<int> shape) {
            Rng r = named_rng(name);
            return params.add(name, leaf(xavier_init<T>(shape, r)));
        };
        auto zp = [&](const std::string& name, std::vector<int> shape) {
            return params.add(name, leaf(zeros<T>(std::move(shape))));
        };
        auto fp = [&](const std::string& name, std::vector<int> shape, T value) {
            return params.add(name, leaf(full<T>(std::move(shape), value)));
        };

        id_table = xp("repr.id_table", {cfg.num_items + 1, d});
        for (int j = 0; j < d; ++j) id_table->v[static_cast<size_t>(j)] = T(0);  // padding row

        if (cfg.modality_active(kModalityText)) {
            if (!text) throw ContractError("model: text modality active but no text features given");
            if (text->dim != cfg.dim_t || text->num_items != cfg.num_items)
                throw DimError("model: text feature matrix does not match config");
            proj_w[kModalityText] = xp("repr.text.proj_w", {cfg.dim_t, d});
            proj_b[kModalityText] = zp("repr.text.proj_b", {d});
            features[kModalityText] = from_features(*text);
        }
        if (cfg.modality_active(kModalityVisual)) {
            if (!visual) throw ContractError("model: visual modality active but no visual features given");
            if (visual->dim != cfg.dim_v || visual->num_items != cfg.num_items)
                throw DimError("model: visual feature matrix does not match config");
            proj_w[kModalityVisual] = xp("repr.visual.proj_w", {cfg.dim_v, d});
            proj_b[kModalityVisual] = zp("repr.visual.proj_b", {d});
            features[kModalityVisual] = from_features(*visual);
        }
        pos_table = xp("repr.pos_table", {cfg.max_len, d});

        const bool guided = use_category_guidance();
        for (int m : cfg.active_modalities()) {
            const std::string base = std::string("camoe.") + kModalityNames[static_cast<size_t>(m)];
            auto& cp = camoe[m];
            const int expert_in = cfg.variant.r_moe ? d : 3 * d;
            for (int k = 0; k < cfg.num_experts; ++k) {
                const std::string e = base + ".expert" + std::to_string(k);
                cp.experts.push_back({xp(e + ".w1", {expert_in, 4 * d}), zp(e + ".b1", {4 * d}),
                                      xp(e + ".w2", {4 * d, d}), zp(e + ".b2", {d})});
            }
            if (cfg.variant.wo_att) {
                cp.gate_w = xp(base + ".gate.w", {d, cfg.num_experts});
            } else {
                cp.router_q = xp(base + ".router.wq", {d, cfg.num_experts});
                cp.router_k = xp(base + ".router.wk", {d, cfg.num_experts});
                cp.router_v = xp(base + ".router.wv", {d, cfg.num_experts});
            }
            if (guided) {
                cp.category_w = xp(base + ".category.w", {d, cfg.num_categories});
                cp.category_b = zp(base + ".category.b", {cfg.num_categories});
            }
        }

        for (int m : cfg.active_modalities()) {
            const std::string base = std::string("enc.") + kModalityNames[static_cast<size_t>(m)];
            auto& ep = encoder[m];
            init_norm(ep.pre, base + ".pre", fp, zp);
            for (int l = 0; l < cfg.layers; ++l) {
                const std::string b = base + ".block" + std::to_string(l);
                BlockParams bp;
                bp.wq = xp(b + ".attn_wq", {d, d});
                bp.bq = zp(b + ".attn_bq", {d});
                bp.wk = xp(b + ".attn_wk", {d, d});
                bp.bk = zp(b + ".attn_bk", {d});
                bp.wv = xp(b + ".attn_wv", {d, d});
                bp.bv = zp(b + ".attn_bv", {d});
                bp.wo = xp(b + ".attn_wo", {d, d});
                bp.bo = zp(b + ".attn_bo", {d});
                bp.ffn_w1 = xp(b + ".ffn_w1", {d, 4 * d});
                bp.ffn_b1 = zp(b + ".ffn_b1", {4 * d});
                bp.ffn_w2 = xp(b + ".ffn_w2", {4 * d, d});
                bp.ffn_b2 = zp(b + ".ffn_b2", {d});
                init_norm(bp.norm1, b + ".norm1", fp, zp);
                init_norm(bp.norm2, b + ".norm2", fp, zp);
                ep.blocks.push_back(std::move(bp));
            }
        }
    }

    bool use_category_guidance() const { return !cfg.variant.wo_cg && cfg.num_categories > 0; }

    // Catalog projections for the step: X_id from the embedding table,
    // X_t / X_v from frozen features through the trainable projections.
    StepContext<T> begin_step(Tape<T>& tape, bool training, uint64_t step_seed) const {
        StepContext<T> ctx;
        ctx.tape = &tape;
        ctx.training = training;
        ctx.rng = Rng(step_seed);
        ctx.catalog[kModalityId] = slice_rows(tape, id_table, 1, cfg.num_items + 1);
        for (int m : {kModalityText, kModalityVisual})
            if (cfg.modality_active(m))
                ctx.catalog[m] = add_rowvec(tape, matmul(tape, features[m], proj_w[m]), proj_b[m]);
        return ctx;
    }

    // e_m for one padded sequence row: base representation + positional row.
    // Padding id 0 maps to a zero base representation in every modality.
    Tensor<T> embed_sequence(StepContext<T>& ctx, const int* ids, int len, int modality) const {
        if (len > cfg.max_len) throw ContractError("embed_sequence: sequence longer than max_len");
        std::vector<int> idx(static_cast<size_t>(len));
        for (int j = 0; j < len; ++j) {
            if (ids[j] < 0 || ids[j] > cfg.num_items)
                throw ContractError("embed_sequence: item id " + std::to_string(ids[j]) + " out of range");
            idx[static_cast<size_t>(j)] = ids[j] - 1;
        }
        auto base = gather_rows(*ctx.tape, ctx.catalog[modality], idx);
        auto pos = slice_rows(*ctx.tape, pos_table, 0, len);
        return add(*ctx.tape, base, pos);
    }

    // Attentive gating: per-position expert distributions, padded positions
    // carry no attention mass in or out.
    Tensor<T> route(StepContext<T>& ctx, int modality, const Tensor<T>& e, const std::vector<uint8_t>& mask) const {
        auto& tp = *ctx.tape;
        const int len = e->shape[0];
        const auto& cp = camoe[modality];
        if (cfg.variant.wo_att) return softmax(tp, matmul(tp, e, cp.gate_w), 1);
        auto q = matmul(tp, e, cp.router_q);
        auto k = matmul(tp, e, cp.router_k);
        auto v = matmul(tp, e, cp.router_v);
        auto scores = scale_const(tp, matmul_nt(tp, q, k),
                                  static_cast<T>(1.0 / std::sqrt(static_cast<double>(cfg.num_experts))));
        std::vector<uint8_t> allow(static_cast<size_t>(len) * len);
        for (int i = 0; i < len; ++i)
            for (int j = 0; j < len; ++j) allow[static_cast<size_t>(i) * len + j] = mask[static_cast<size_t>(i)] && mask[static_cast<size_t>(j)];
        auto attn = masked_softmax_rows(tp, scores, allow);
        return softmax(tp, matmul(tp, attn, v), 1);
    }

    // Weighted expert mixture; all experts of one modality read the same input.
    Tensor<T> mix_experts(StepContext<T>& ctx, int modality, const Tensor<T>& input, const Tensor<T>& gates) const {
        auto& tp = *ctx.tape;
        const auto& cp = camoe[modality];
        Tensor<T> acc;
        for (int k = 0; k < cfg.num_experts; ++k) {
            const auto& ex = cp.experts[static_cast<size_t>(k)];
            auto h = gelu(tp, add_rowvec(tp, matmul(tp, input, ex.w1), ex.b1));
            auto o = add_rowvec(tp, matmul(tp, h, ex.w2), ex.b2);
            auto weighted = scale_rows(tp, o, column(tp, gates, k));
            acc = acc ? add(tp, acc, weighted) : weighted;
        }
        return acc;
    }

    Tensor<T> category_difference(StepContext<T>& ctx, int modality, const Tensor<T>& e, const int* label_offsets,
                                  const int* labels, const std::vector<uint8_t>& valid) const {
        auto& tp = *ctx.tape;
        const auto& cp = camoe[modality];
        auto logits = add_rowvec(tp, matmul(tp, e, cp.category_w), cp.category_b);
        return category_bce(tp, logits, label_offsets, labels, valid, cfg.pooling);
    }

    // Softmax over per-modality BCE differences (clamped to [0,30]);
    // removal-flagged positions get exact equal weights.
    Tensor<T> fusion_weights(StepContext<T>& ctx, const std::vector<Tensor<T>>& diffs,
                             const std::vector<uint8_t>& removed, int len) const {
        auto& tp = *ctx.tape;
        const int act = static_cast<int>(cfg.active_modalities().size());
        auto equal = full<T>({len, act}, T(1) / static_cast<T>(act));
        if (!use_category_guidance()) return equal;
        auto stacked = clamp(tp, stack_cols(tp, diffs), T(0), T(30));
        if (cfg.invert_guidance) stacked = scale_const(tp, stacked, T(-1));
        auto w = softmax(tp, stacked, 1);
        return row_merge(tp, w, equal, removed);
    }

    // Full CAMoE pass over one sequence: route, mix, guide, enrich.
    CamoeResult<T> camoe_forward(StepContext<T>& ctx, const std::array<Tensor<T>, 3>& e,
                                 const std::vector<uint8_t>& mask, const int* label_offsets, const int* labels,
                                 const std::vector<uint8_t>& removed) const {
        auto& tp = *ctx.tape;
        const auto active = cfg.active_modalities();
        const int len = e[static_cast<size_t>(active[0])]->shape[0];
        CamoeResult<T> out;

        Tensor<T> concat_input;
        if (!cfg.variant.r_moe) {
            std::vector<Tensor<T>> parts;
            for (int m = 0; m < 3; ++m)
                parts.push_back(cfg.modality_active(m) ? e[static_cast<size_t>(m)] : zeros<T>({len, cfg.hidden}));
            concat_input = concat_cols(tp, parts);
        }

        std::vector<uint8_t> valid(static_cast<size_t>(len));
        for (int i = 0; i < len; ++i) valid[static_cast<size_t>(i)] = mask[static_cast<size_t>(i)] && !removed[static_cast<size_t>(i)];

        std::vector<Tensor<T>> diffs;
        for (int m : active) {
            out.gates[static_cast<size_t>(m)] = route(ctx, m, e[static_cast<size_t>(m)], mask);
            const auto& input = cfg.variant.r_moe ? e[static_cast<size_t>(m)] : concat_input;
            out.experts[static_cast<size_t>(m)] = mix_experts(ctx, m, input, out.gates[static_cast<size_t>(m)]);
            if (use_category_guidance()) {
                out.diffs[static_cast<size_t>(m)] =
                    category_difference(ctx, m, e[static_cast<size_t>(m)], label_offsets, labels, valid);
                diffs.push_back(out.diffs[static_cast<size_t>(m)]);
            }
        }
        out.weights = fusion_weights(ctx, diffs, removed, len);
        for (size_t a = 0; a < active.size(); ++a) {
            const int m = active[a];
            auto w_col = column(tp, out.weights, static_cast<int>(a));
            out.enriched[static_cast<size_t>(m)] =
                add(tp, e[static_cast<size_t>(m)], scale_rows(tp, out.experts[static_cast<size_t>(m)], w_col));
        }
        return out;
    }

    // Transformer encoding; returns all positions' final hidden states.
    Tensor<T> encode_hidden(StepContext<T>& ctx, int modality, const Tensor<T>& seq,
                            const std::vector<uint8_t>& mask) const {
        auto& tp = *ctx.tape;
        const int len = seq->shape[0], d = cfg.hidden;
        if (static_cast<int>(mask.size()) != len) throw DimError("encode: mask length mismatch");
        bool any = false;
        for (uint8_t m : mask) any = any || m;
        if (!any) throw ContractError("encode: all positions masked");
        const auto& ep = encoder[modality];

        std::vector<uint8_t> allow(static_cast<size_t>(len) * len);
        for (int i = 0; i < len; ++i)
            for (int j = 0; j < len; ++j)
                allow[static_cast<size_t>(i) * len + j] =
                    mask[static_cast<size_t>(i)] && mask[static_cast<size_t>(j)] && j <= i;

        auto h = maybe_dropout(ctx, apply_norm(ctx, ep.pre, seq));
        const int dh = d / cfg.heads;
        const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
        for (const auto& bp : ep.blocks) {
            auto a = apply_norm(ctx, bp.norm1, h);
            auto q = add_rowvec(tp, matmul(tp, a, bp.wq), bp.bq);
            auto k = add_rowvec(tp, matmul(tp, a, bp.wk), bp.bk);
            auto v = add_rowvec(tp, matmul(tp, a, bp.wv), bp.bv);
            std::vector<Tensor<T>> heads;
            for (int hd = 0; hd < cfg.heads; ++hd) {
                auto qh = slice_cols(tp, q, hd * dh, (hd + 1) * dh);
                auto kh = slice_cols(tp, k, hd * dh, (hd + 1) * dh);
                auto vh = slice_cols(tp, v, hd * dh, (hd + 1) * dh);
                auto attn = masked_softmax_rows(tp, scale_const(tp, matmul_nt(tp, qh, kh), scale), allow);
                heads.push_back(matmul(tp, attn, vh));
            }
            auto att_out = add_rowvec(tp, matmul(tp, concat_cols(tp, heads), bp.wo), bp.bo);
            h = add(tp, h, maybe_dropout(ctx, att_out));
            auto f = apply_norm(ctx, bp.norm2, h);
            auto ff = add_rowvec(tp, matmul(tp, gelu(tp, add_rowvec(tp, matmul(tp, f, bp.ffn_w1), bp.ffn_b1)), bp.ffn_w2),
                                 bp.ffn_b2);
            h = add(tp, h, maybe_dropout(ctx, ff));
        }
        return h;
    }

    // User-interest vector: hidden state of the last unmasked position.
    Tensor<T> encode(StepContext<T>& ctx, int modality, const Tensor<T>& seq, const std::vector<uint8_t>& mask) const {
        auto h = encode_hidden(ctx, modality, seq, mask);
        int last = -1;
        for (int i = 0; i < static_cast<int>(mask.size()); ++i)
            if (mask[static_cast<size_t>(i)]) last = i;
        return slice_rows(*ctx.tape, h, last, last + 1);
    }

    // Batched full-catalog scores: rows of z are user vectors, columns are
    // items; per-modality scores summed.
    Tensor<T> score_catalog(StepContext<T>& ctx, const std::array<Tensor<T>, 3>& z) const {
        auto& tp = *ctx.tape;
        Tensor<T> total;
        for (int m : cfg.active_modalities()) {
            auto s = matmul_nt(tp, z[static_cast<size_t>(m)], candidate_table(ctx, m));
            total = total ? add(tp, total, s) : s;
        }
        return total;
    }

    // Scores for an explicit candidate list (internal ids).
    Tensor<T> score_items(StepContext<T>& ctx, const std::array<Tensor<T>, 3>& z,
                          const std::vector<int>& candidate_ids) const {
        auto& tp = *ctx.tape;
        std::vector<int> idx;
        idx.reserve(candidate_ids.size());
        for (int id : candidate_ids) {
            if (id < 1 || id > cfg.num_items) throw ContractError("score_items: candidate id out of range");
            idx.push_back(id - 1);
        }
        Tensor<T> total;
        for (int m : cfg.active_modalities()) {
            auto table = gather_rows(tp, candidate_table(ctx, m), idx);
            auto s = matmul_nt(tp, z[static_cast<size_t>(m)], table);
            total = total ? add(tp, total, s) : s;
        }
        return total;
    }

    Tensor<T> apply_norm(StepContext<T>& ctx, const NormParams& np, const Tensor<T>& x) const {
        if (cfg.effective_norm() == NormMode::dyt) return dyt(*ctx.tape, x, np.alpha);
        return layer_norm(*ctx.tape, x, np.gain, np.bias, static_cast<T>(1e-5));
    }

    Tensor<T> maybe_dropout(StepContext<T>& ctx, const Tensor<T>& x) const {
        if (!ctx.training || cfg.dropout <= 0.0) return x;
        std::vector<uint8_t> keep(x->numel());
        for (auto& k : keep) k = ctx.rng.uniform() >= cfg.dropout;
        return apply_dropout(*ctx.tape, x, keep, static_cast<T>(1.0 / (1.0 - cfg.dropout)));
    }

private:
    Tensor<T> candidate_table(StepContext<T>& ctx, int modality) const {
        if (cfg.score_position == ScorePosition::none) return ctx.catalog[static_cast<size_t>(modality)];
        auto pos_last = slice_rows(*ctx.tape, pos_table, cfg.max_len - 1, cfg.max_len);
        return add_rowvec(*ctx.tape, ctx.catalog[static_cast<size_t>(modality)], pos_last);
    }

    Tensor<T> from_features(const FeatureMatrix& fm) {
        auto t = zeros<T>({fm.num_items, fm.dim});
        for (size_t i = 0; i < fm.rows.size(); ++i) t->v[i] = static_cast<T>(fm.rows[i]);
        return t;  // untracked: frozen
    }

    template <class FP, class ZP>
    void init_norm(NormParams& np, const std::string& base, FP& fp, ZP& zp) {
        if (cfg.effective_norm() == NormMode::dyt) {
            np.alpha = fp(base + ".alpha", {1}, static_cast<T>(0.5));
        } else {
            np.gain = fp(base + ".gain", {cfg.hidden}, T(1));
            np.bias = zp(base + ".bias", {cfg.hidden});
        }
    }
};

}  // namespace cammsr
