#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "cammsr/adam.hpp"
#include "cammsr/model.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cammsr;
using testutil::TinyModel;

namespace {

template <class T>
StepContext<T> fresh_ctx(const Model<T>& model, Tape<T>& tape, bool training = false) {
    return model.begin_step(tape, training, 99);
}

}  // namespace

TEST_CASE("projection maps features through W and b") {
    TinyModel<double> tm;
    Tape<double> tape;
    auto ctx = fresh_ctx(*tm, tape);

    // x = f W + b against a hand loop.
    const auto& W = tm->proj_w[kModalityText];
    const auto& b = tm->proj_b[kModalityText];
    for (int item = 0; item < 3; ++item)
        for (int j = 0; j < tm->cfg.hidden; ++j) {
            double want = b->v[static_cast<size_t>(j)];
            for (int p = 0; p < tm->cfg.dim_t; ++p)
                want += static_cast<double>(tm.text.rows[static_cast<size_t>(item) * tm->cfg.dim_t + p]) *
                        W->v[static_cast<size_t>(p) * tm->cfg.hidden + j];
            CHECK(ctx.catalog[kModalityText]->v[static_cast<size_t>(item) * tm->cfg.hidden + j] ==
                  doctest::Approx(want).epsilon(1e-12));
        }

    // W = 0, b = c -> every row equals c.
    std::fill(W->v.begin(), W->v.end(), 0.0);
    std::fill(b->v.begin(), b->v.end(), 0.75);
    Tape<double> t2;
    auto ctx2 = fresh_ctx(*tm, t2);
    for (size_t i = 0; i < ctx2.catalog[kModalityText]->numel(); ++i)
        CHECK(ctx2.catalog[kModalityText]->v[i] == 0.75);
}

TEST_CASE("identity projection passes features through") {
    auto cfg = testutil::tiny_config();
    cfg.dim_t = cfg.hidden;  // square: can be the identity
    TinyModel<double> tm(cfg);
    auto& W = tm->proj_w[kModalityText];
    std::fill(W->v.begin(), W->v.end(), 0.0);
    for (int i = 0; i < cfg.hidden; ++i) W->v[static_cast<size_t>(i) * cfg.hidden + i] = 1.0;
    std::fill(tm->proj_b[kModalityText]->v.begin(), tm->proj_b[kModalityText]->v.end(), 0.0);
    Tape<double> tape;
    auto ctx = fresh_ctx(*tm, tape);
    for (int item = 0; item < cfg.num_items; ++item)
        for (int j = 0; j < cfg.hidden; ++j)
            CHECK(ctx.catalog[kModalityText]->v[static_cast<size_t>(item) * cfg.hidden + j] ==
                  doctest::Approx(static_cast<double>(tm.text.rows[static_cast<size_t>(item) * cfg.hidden + j])));
}

TEST_CASE("frozen features never change under training steps") {
    TinyModel<float> tm;
    const auto before_t = tm->features[kModalityText]->v;
    const auto before_v = tm->features[kModalityVisual]->v;

    Adam<float> opt(tm->params, 0.01f);
    Tape<float> tape;
    auto ctx = fresh_ctx(*tm, tape, true);
    const int ids[6] = {0, 0, 1, 2, 3, 4};
    std::vector<uint8_t> mask{0, 0, 1, 1, 1, 1};
    std::array<Tensor<float>, 3> e;
    for (int m : tm->cfg.active_modalities()) e[static_cast<size_t>(m)] = tm->embed_sequence(ctx, ids, 6, m);
    auto loss = sum_all(tape, e[kModalityText]);
    loss = add(tape, loss, sum_all(tape, e[kModalityVisual]));
    loss = add(tape, loss, sum_all(tape, e[kModalityId]));
    tape.backward(loss);
    opt.step(tm->params);

    CHECK(tm->features[kModalityText]->v == before_t);
    CHECK(tm->features[kModalityVisual]->v == before_v);
    CHECK(tm->features[kModalityText]->g.empty());
}

TEST_CASE("embed_sequence contracts") {
    TinyModel<double> tm;
    const int L = tm->cfg.max_len, d = tm->cfg.hidden;

    SUBCASE("all-padding row equals the positional table") {
        Tape<double> tape;
        auto ctx = fresh_ctx(*tm, tape);
        const std::vector<int> ids(static_cast<size_t>(L), 0);
        for (int m : tm->cfg.active_modalities()) {
            auto e = tm->embed_sequence(ctx, ids.data(), L, m);
            for (int j = 0; j < L; ++j)
                for (int c = 0; c < d; ++c)
                    CHECK(e->v[static_cast<size_t>(j) * d + c] ==
                          doctest::Approx(tm->pos_table->v[static_cast<size_t>(j) * d + c]));
        }
    }

    SUBCASE("single item at last position with zero positions equals its base embedding") {
        std::fill(tm->pos_table->v.begin(), tm->pos_table->v.end(), 0.0);
        Tape<double> tape;
        auto ctx = fresh_ctx(*tm, tape);
        std::vector<int> ids(static_cast<size_t>(L), 0);
        ids.back() = 3;
        auto e = tm->embed_sequence(ctx, ids.data(), L, kModalityId);
        for (int c = 0; c < d; ++c) {
            CHECK(e->v[static_cast<size_t>(L - 1) * d + c] ==
                  doctest::Approx(tm->id_table->v[static_cast<size_t>(3) * d + c]));
        }
    }

    SUBCASE("same item at two positions differs by the positional delta") {
        Tape<double> tape;
        auto ctx = fresh_ctx(*tm, tape);
        std::vector<int> ids{5, 2, 5, 1, 2, 5};
        for (int m : tm->cfg.active_modalities()) {
            auto e = tm->embed_sequence(ctx, ids.data(), 6, m);
            for (int c = 0; c < d; ++c) {
                const double diff = e->v[static_cast<size_t>(0) * d + c] - e->v[static_cast<size_t>(2) * d + c];
                const double want =
                    tm->pos_table->v[static_cast<size_t>(0) * d + c] - tm->pos_table->v[static_cast<size_t>(2) * d + c];
                CHECK(diff == doctest::Approx(want).epsilon(1e-9));
            }
        }
    }

    SUBCASE("out-of-range id is rejected") {
        Tape<double> tape;
        auto ctx = fresh_ctx(*tm, tape);
        std::vector<int> ids(static_cast<size_t>(L), 0);
        ids[0] = tm->cfg.num_items + 1;
        CHECK_THROWS_AS(tm->embed_sequence(ctx, ids.data(), L, kModalityId), ContractError);
    }
}

TEST_CASE("all modality streams share the output shape") {
    TinyModel<double> tm;
    Tape<double> tape;
    auto ctx = fresh_ctx(*tm, tape);
    std::vector<int> ids{0, 0, 1, 7, 3, 9};
    for (int m : tm->cfg.active_modalities()) {
        auto e = tm->embed_sequence(ctx, ids.data(), 6, m);
        CHECK(e->shape == std::vector<int>{6, tm->cfg.hidden});
    }
}

TEST_CASE("padding row of the id table is zero and stays zero") {
    TinyModel<float> tm;
    for (int c = 0; c < tm->cfg.hidden; ++c) CHECK(tm->id_table->v[static_cast<size_t>(c)] == 0.0f);

    // A step driven by a padded sequence never touches row 0.
    Adam<float> opt(tm->params, 0.05f);
    for (int it = 0; it < 3; ++it) {
        Tape<float> tape;
        auto ctx = fresh_ctx(*tm, tape, true);
        const int ids[6] = {0, 0, 0, 2, 8, 5};
        auto e = tm->embed_sequence(ctx, ids, 6, kModalityId);
        auto loss = sum_all(tape, mul(tape, e, e));
        tape.backward(loss);
        opt.step(tm->params);
        tm->params.zero_grad();
    }
    for (int c = 0; c < tm->cfg.hidden; ++c) CHECK(tm->id_table->v[static_cast<size_t>(c)] == 0.0f);
}

TEST_CASE("identical seeds give identical parameters, different seeds differ") {
    TinyModel<double> a(testutil::tiny_config(), 7);
    TinyModel<double> b(testutil::tiny_config(), 7);
    TinyModel<double> c(testutil::tiny_config(), 8);
    REQUIRE(a->params.items().size() == b->params.items().size());
    bool any_diff = false;
    for (size_t i = 0; i < a->params.items().size(); ++i) {
        CHECK(a->params.items()[i].second->v == b->params.items()[i].second->v);
        any_diff = any_diff || (a->params.items()[i].second->v != c->params.items()[i].second->v);
    }
    CHECK(any_diff);
}
