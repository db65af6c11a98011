#pragma once

#include <array>
#include <cstdio>
#include <string>
#include <vector>

#include "cammsr/adam.hpp"
#include "cammsr/contrastive.hpp"
#include "cammsr/data.hpp"
#include "cammsr/eval.hpp"
#include "cammsr/model.hpp"

namespace cammsr {

// Main objective: softmax cross-entropy over the full catalog (padding id 0
// excluded by construction), averaged over the batch. Targets are internal
// item ids >= 1; scores column j holds item id j+1.
template <class T>
Tensor<T> sr_loss(Tape<T>& tp, const Tensor<T>& scores, const std::vector<int>& targets) {
    std::vector<int> cols;
    cols.reserve(targets.size());
    for (int t : targets) {
        if (t < 1) throw ContractError("sr_loss: target id must be >= 1 (0 is padding)");
        cols.push_back(t - 1);
    }
    return cross_entropy_rows(tp, scores, cols, Reduction::mean);
}

template <class T>
Tensor<T> total_loss(Tape<T>& tp, const Tensor<T>& l_sr, const Tensor<T>& l_mscl, T lambda) {
    if (lambda < T(0)) throw ContractError("total_loss: lambda must be >= 0");
    if (!l_mscl || lambda == T(0)) return l_sr;
    return add(tp, l_sr, scale_const(tp, l_mscl, lambda));
}

template <class T>
struct BatchLoss {
    Tensor<T> total;
    Tensor<T> mscl_tensor;  // null when the contrastive branch did not run
    double sr = 0.0;
    double mscl = 0.0;
    double aux = 0.0;
};

// One full forward over a padded batch: embed -> CAMoE -> encode -> score,
// plus the swap-contrastive branch when enabled.
template <class T>
BatchLoss<T> batch_loss(const Model<T>& model, StepContext<T>& ctx, const SequenceBatch& batch,
                        const TrainConfig& tc) {
    auto& tp = *ctx.tape;
    const auto active = model.cfg.active_modalities();
    std::array<std::vector<Tensor<T>>, 3> zrows;
    std::vector<std::array<Tensor<T>, 3>> enriched(static_cast<size_t>(batch.batch_size));
    std::vector<std::vector<uint8_t>> masks(static_cast<size_t>(batch.batch_size));
    Tensor<T> aux_sum;
    int aux_terms = 0;

    for (int r = 0; r < batch.batch_size; ++r) {
        const int* ids = batch.item_ids.data() + static_cast<size_t>(r) * batch.max_len;
        masks[static_cast<size_t>(r)].assign(batch.mask.begin() + static_cast<std::ptrdiff_t>(r) * batch.max_len,
                                             batch.mask.begin() + static_cast<std::ptrdiff_t>(r + 1) * batch.max_len);
        std::vector<uint8_t> removed(batch.removed.begin() + static_cast<std::ptrdiff_t>(r) * batch.max_len,
                                     batch.removed.begin() + static_cast<std::ptrdiff_t>(r + 1) * batch.max_len);
        std::array<Tensor<T>, 3> e;
        for (int m : active) e[static_cast<size_t>(m)] = model.embed_sequence(ctx, ids, batch.max_len, m);
        auto cam = model.camoe_forward(ctx, e, masks[static_cast<size_t>(r)],
                                       batch.label_offsets.data() + static_cast<size_t>(r) * batch.max_len,
                                       batch.labels.data(), removed);
        enriched[static_cast<size_t>(r)] = cam.enriched;
        for (int m : active)
            zrows[static_cast<size_t>(m)].push_back(
                model.encode(ctx, m, cam.enriched[static_cast<size_t>(m)], masks[static_cast<size_t>(r)]));
        if (tc.aux_category_weight > 0.0 && model.use_category_guidance()) {
            for (int m : active) {
                auto s = sum_all(tp, cam.diffs[static_cast<size_t>(m)]);
                aux_sum = aux_sum ? add(tp, aux_sum, s) : s;
            }
            for (uint8_t mk : masks[static_cast<size_t>(r)]) aux_terms += mk ? static_cast<int>(active.size()) : 0;
        }
    }

    std::array<Tensor<T>, 3> z;
    for (int m : active) z[static_cast<size_t>(m)] = concat_rows(tp, zrows[static_cast<size_t>(m)]);
    auto scores = model.score_catalog(ctx, z);

    BatchLoss<T> out;
    auto l_sr = sr_loss(tp, scores, batch.targets);
    out.sr = static_cast<double>(l_sr->v[0]);

    Tensor<T> l_mscl;
    if (tc.contrastive_weight > 0.0) {
        for (const auto& [m1, m2] : tc.pairs) {
            if (!model.cfg.modality_active(m1) || !model.cfg.modality_active(m2)) continue;
            ++ctx.contrastive_calls;
            std::array<std::vector<Tensor<T>>, 2> views;
            for (int r = 0; r < batch.batch_size; ++r) {
                const auto plan = draw_swap_plan(ctx.rng, masks[static_cast<size_t>(r)], tc.swap_prob);
                auto [s1, s2] = swap_sequences(tp, enriched[static_cast<size_t>(r)][static_cast<size_t>(m1)],
                                               enriched[static_cast<size_t>(r)][static_cast<size_t>(m2)], plan);
                views[0].push_back(model.encode(ctx, m1, s1, masks[static_cast<size_t>(r)]));
                views[1].push_back(model.encode(ctx, m2, s2, masks[static_cast<size_t>(r)]));
            }
            auto pair_loss = infonce(tp, concat_rows(tp, views[0]), concat_rows(tp, views[1]),
                                     static_cast<T>(tc.temperature));
            l_mscl = l_mscl ? add(tp, l_mscl, pair_loss) : pair_loss;
        }
    }
    out.mscl = l_mscl ? static_cast<double>(l_mscl->v[0]) : 0.0;
    out.mscl_tensor = l_mscl;

    out.total = total_loss(tp, l_sr, l_mscl, static_cast<T>(tc.contrastive_weight));
    if (aux_sum && aux_terms > 0) {
        auto aux = scale_const(tp, aux_sum, static_cast<T>(1.0 / aux_terms));
        out.aux = static_cast<double>(aux->v[0]);
        out.total = add(tp, out.total, scale_const(tp, aux, static_cast<T>(tc.aux_category_weight)));
    }
    return out;
}

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double sr_loss = 0.0;
    double mscl_loss = 0.0;
    double valid_ndcg10 = 0.0;
    double valid_mrr10 = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> history;
    int best_epoch = -1;
    double best_valid_ndcg10 = 0.0;
    long contrastive_calls = 0;
    int epochs_run = 0;
};

// Training loop: shuffled batches, Adam steps, per-epoch validation NDCG@10
// with early stopping; the best-validation parameters are restored at the
// end. Fully deterministic under (seed, config).
template <class T>
TrainResult train(Model<T>& model, const InteractionLog& log, const Splits& splits, const TrainConfig& tc,
                  const EvalOptions& eval_opts = {}) {
    tc.validate();
    if (tc.contrastive_weight > 0.0 && tc.pairs.empty())
        std::fprintf(stderr, "warning: contrastive weight %.3g with no modality pairs, contrastive loss is 0\n",
                     tc.contrastive_weight);
    Adam<T> opt(model.params, static_cast<T>(tc.lr));
    TrainResult result;
    auto best = model.params.snapshot_values();
    int since_best = 0;

    // Domain-separated seed streams: shuffling and per-step dropout/swap
    // draws never share a seed.
    const uint64_t shuffle_domain = Rng::mix(tc.seed, Rng::hash_name("shuffle"));
    const uint64_t step_domain = Rng::mix(tc.seed, Rng::hash_name("step"));
    for (int epoch = 0; epoch < tc.max_epochs; ++epoch) {
        Rng shuffle_rng(Rng::mix(shuffle_domain, static_cast<uint64_t>(epoch)));
        auto batches = make_batches(splits.train, tc.batch_size, model.cfg.max_len, log, &shuffle_rng);
        double loss_sum = 0.0, sr_sum = 0.0, mscl_sum = 0.0;
        long steps = 0;
        for (size_t b = 0; b < batches.size(); ++b) {
            Tape<T> tape;
            tape.debug_finite = tc.debug_finite;
            auto ctx = model.begin_step(
                tape, /*training=*/true,
                Rng::mix(step_domain, static_cast<uint64_t>(epoch) * 0x100000 + b));
            auto loss = batch_loss(model, ctx, batches[b], tc);
            if (!std::isfinite(static_cast<double>(loss.total->v[0])))
                throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + " step " +
                                      std::to_string(b));
            tape.backward(loss.total);
            opt.step(model.params);
            model.params.zero_grad();
            if (!model.params.all_values_finite())
                throw DivergenceError("non-finite parameter after update at epoch " + std::to_string(epoch) +
                                      " step " + std::to_string(b));
            loss_sum += static_cast<double>(loss.total->v[0]);
            sr_sum += loss.sr;
            mscl_sum += loss.mscl;
            result.contrastive_calls += ctx.contrastive_calls;
            ++steps;
        }
        EpochStats es;
        es.epoch = epoch;
        es.train_loss = steps ? loss_sum / static_cast<double>(steps) : 0.0;
        es.sr_loss = steps ? sr_sum / static_cast<double>(steps) : 0.0;
        es.mscl_loss = steps ? mscl_sum / static_cast<double>(steps) : 0.0;
        if (!splits.valid.empty()) {
            auto report = evaluate(model, splits.valid, log, "", eval_opts);
            es.valid_ndcg10 = report.ndcg10;
            es.valid_mrr10 = report.mrr10;
        }
        result.history.push_back(es);
        ++result.epochs_run;

        if (result.best_epoch < 0 || es.valid_ndcg10 > result.best_valid_ndcg10) {
            result.best_epoch = epoch;
            result.best_valid_ndcg10 = es.valid_ndcg10;
            if (tc.restore_best) best = model.params.snapshot_values();
            since_best = 0;
        } else if (++since_best >= tc.patience) {
            break;
        }
    }
    if (tc.restore_best) model.params.restore_values(best);
    return result;
}

}  // namespace cammsr
