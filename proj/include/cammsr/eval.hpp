#pragma once

#include <array>
#include <thread>
#include <vector>

#include "cammsr/data.hpp"
#include "cammsr/metrics.hpp"
#include "cammsr/model.hpp"

namespace cammsr {

struct EvalOptions {
    int batch_size = 512;
    int threads = 1;
    bool mask_history = false;
};

// Full-catalog leave-one-out ranks for a list of (prefix -> target) examples.
// Deterministic: per-example work is independent and written to its own slot,
// so the thread count never changes the result.
template <class T>
std::vector<int> compute_ranks(const Model<T>& model, const std::vector<SeqExample>& examples,
                               const InteractionLog& log, const EvalOptions& opts = {}) {
    if (examples.empty()) throw ContractError("evaluate: empty split");
    Tape<T> tape;
    tape.recording = false;
    StepContext<T> ctx = model.begin_step(tape, /*training=*/false, 0);
    std::vector<int> ranks(examples.size(), 0);

    auto worker = [&](size_t begin, size_t end) {
        Tape<T> local;
        local.recording = false;
        StepContext<T> lctx;
        lctx.tape = &local;
        lctx.training = false;
        lctx.catalog = ctx.catalog;
        std::vector<SeqExample> chunk(examples.begin() + static_cast<std::ptrdiff_t>(begin),
                                      examples.begin() + static_cast<std::ptrdiff_t>(end));
        auto batches = make_batches(chunk, opts.batch_size, model.cfg.max_len, log, nullptr);
        size_t at = begin;
        for (const auto& batch : batches) {
            std::array<std::vector<Tensor<T>>, 3> zrows;
            for (int r = 0; r < batch.batch_size; ++r) {
                const int* ids = batch.item_ids.data() + static_cast<size_t>(r) * batch.max_len;
                std::vector<uint8_t> mask(batch.mask.begin() + static_cast<std::ptrdiff_t>(r) * batch.max_len,
                                          batch.mask.begin() + static_cast<std::ptrdiff_t>(r + 1) * batch.max_len);
                std::vector<uint8_t> removed(batch.removed.begin() + static_cast<std::ptrdiff_t>(r) * batch.max_len,
                                             batch.removed.begin() + static_cast<std::ptrdiff_t>(r + 1) * batch.max_len);
                std::array<Tensor<T>, 3> e;
                for (int m : model.cfg.active_modalities())
                    e[static_cast<size_t>(m)] = model.embed_sequence(lctx, ids, batch.max_len, m);
                auto cam = model.camoe_forward(lctx, e, mask,
                                               batch.label_offsets.data() + static_cast<size_t>(r) * batch.max_len,
                                               batch.labels.data(), removed);
                for (int m : model.cfg.active_modalities())
                    zrows[static_cast<size_t>(m)].push_back(
                        model.encode(lctx, m, cam.enriched[static_cast<size_t>(m)], mask));
            }
            std::array<Tensor<T>, 3> z;
            for (int m : model.cfg.active_modalities()) z[static_cast<size_t>(m)] = concat_rows(local, zrows[static_cast<size_t>(m)]);
            auto scores = model.score_catalog(lctx, z);
            for (int r = 0; r < batch.batch_size; ++r) {
                std::vector<double> row(static_cast<size_t>(model.cfg.num_items));
                for (int j = 0; j < model.cfg.num_items; ++j)
                    row[static_cast<size_t>(j)] = static_cast<double>(scores->v[static_cast<size_t>(r) * model.cfg.num_items + j]);
                if (opts.mask_history)
                    for (int h : examples[at].prefix)
                        if (h != examples[at].target) row[static_cast<size_t>(h - 1)] = -1e30;
                ranks[at] = rank_full(row, examples[at].target);
                ++at;
            }
        }
    };

    const int threads = std::max(1, opts.threads);
    if (threads == 1 || examples.size() < 2) {
        worker(0, examples.size());
    } else {
        std::vector<std::thread> pool;
        const size_t per = (examples.size() + static_cast<size_t>(threads) - 1) / static_cast<size_t>(threads);
        for (size_t begin = 0; begin < examples.size(); begin += per)
            pool.emplace_back(worker, begin, std::min(examples.size(), begin + per));
        for (auto& th : pool) th.join();
    }
    return ranks;
}

template <class T>
MetricsReport evaluate(const Model<T>& model, const std::vector<SeqExample>& examples, const InteractionLog& log,
                       const std::string& fingerprint = "", const EvalOptions& opts = {}) {
    return MetricsReport::from_ranks(compute_ranks(model, examples, log, opts), fingerprint);
}

}  // namespace cammsr
