#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "cammsr/adam.hpp"
#include "cammsr/grad_check.hpp"
#include "cammsr/ops.hpp"
#include "cammsr/tensor.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cammsr;
using testutil::fd_check;
using testutil::random_tensor;

TEST_CASE("tensor construction and shape checks") {
    auto t = make_tensor<float>({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t->numel() == 6);
    CHECK(t->rows() == 2);
    CHECK(t->cols() == 3);
    CHECK_THROWS_AS(make_tensor<float>({2, 2}, {1, 2, 3}), DimError);
    CHECK_THROWS_AS(zeros<float>({0, 3}), DimError);
}

TEST_CASE("xavier_init bound, determinism and variance") {
    Rng rng(7);
    auto t = xavier_init<double>({1, 5}, rng);
    for (double v : t->v) CHECK(std::abs(v) <= 1.0);  // sqrt(6/6)

    Rng a(99), b(99);
    auto ta = xavier_init<double>({8, 4}, a);
    auto tb = xavier_init<double>({8, 4}, b);
    CHECK(ta->v == tb->v);

    CHECK_THROWS_AS(xavier_init<double>({4}, rng), DimError);

    // 64x64 draws pooled over three tensors: variance should sit near
    // 2/(64+64) = bound^2/3.
    Rng vr(123);
    double sum = 0.0, sq = 0.0;
    size_t n = 0;
    for (int rep = 0; rep < 3; ++rep) {
        auto big = xavier_init<double>({64, 64}, vr);
        for (double v : big->v) {
            sum += v;
            sq += v * v;
            ++n;
        }
    }
    const double mean = sum / static_cast<double>(n);
    const double var = sq / static_cast<double>(n) - mean * mean;
    const double expected = 2.0 / 128.0;
    CHECK(var > expected * 0.8);
    CHECK(var < expected * 1.2);
}

TEST_CASE("matmul identity and hand-checked product") {
    Tape<float> tp;
    auto i2 = make_tensor<float>({2, 2}, {1, 0, 0, 1});
    auto prod = matmul(tp, i2, i2);
    CHECK(prod->v == std::vector<float>{1, 0, 0, 1});

    auto a = make_tensor<float>({2, 2}, {1, 2, 3, 4});
    auto b = make_tensor<float>({2, 1}, {1, 1});
    auto c = matmul(tp, a, b);
    CHECK(c->v == std::vector<float>{3, 7});

    try {
        auto bad = matmul(tp, a, make_tensor<float>({3, 1}, {1, 1, 1}));
        FAIL("expected DimError");
    } catch (const DimError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x2]") != std::string::npos);
        CHECK(msg.find("[3x1]") != std::string::npos);
    }
}

TEST_CASE("matmul gradients match finite differences") {
    Rng rng(11);
    auto a = leaf(random_tensor({5, 4}, rng));
    auto b = leaf(random_tensor({4, 3}, rng));
    const double err = fd_check([&](Tape<double>& tp) { return matmul(tp, a, b); }, {a, b}, 1e-5);
    CHECK(err < 1e-6);
}

TEST_CASE("matmul_nt gradients and equivalence") {
    Rng rng(12);
    auto a = leaf(random_tensor({3, 4}, rng));
    auto b = leaf(random_tensor({5, 4}, rng));
    Tape<double> tp;
    auto nt = matmul_nt(tp, a, b);
    CHECK(nt->shape == std::vector<int>{3, 5});
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 5; ++j) {
            double s = 0;
            for (int p = 0; p < 4; ++p) s += a->v[i * 4 + p] * b->v[j * 4 + p];
            CHECK(nt->v[i * 5 + j] == doctest::Approx(s).epsilon(1e-12));
        }
    const double err = fd_check([&](Tape<double>& t2) { return matmul_nt(t2, a, b); }, {a, b});
    CHECK(err < 1e-6);
}

TEST_CASE("softmax analytic cases") {
    Tape<double> tp;
    auto s1 = softmax(tp, make_tensor<double>({3}, {0, 0, 0}), 0);
    for (double v : s1->v) CHECK(v == doctest::Approx(1.0 / 3));

    auto s2 = softmax(tp, make_tensor<double>({3}, {std::log(1.0), std::log(2.0), std::log(3.0)}), 0);
    CHECK(s2->v[0] == doctest::Approx(1.0 / 6).epsilon(1e-12));
    CHECK(s2->v[1] == doctest::Approx(2.0 / 6).epsilon(1e-12));
    CHECK(s2->v[2] == doctest::Approx(3.0 / 6).epsilon(1e-12));

    // Large magnitudes: stabilized result matches a log-sum-exp oracle.
    auto s3 = softmax(tp, make_tensor<double>({2}, {1000.0, 0.0}), 0);
    for (double v : s3->v) CHECK(std::isfinite(v));
    const double lse = 1000.0 + std::log(1.0 + std::exp(-1000.0));
    CHECK(s3->v[0] == doctest::Approx(std::exp(1000.0 - lse)).epsilon(1e-12));
    CHECK(s3->v[1] == doctest::Approx(std::exp(0.0 - lse)).epsilon(1e-12));

    CHECK_THROWS_AS(softmax(tp, s1, 1), DimError);
}

TEST_CASE("softmax rows sum to one and are shift invariant") {
    Rng rng(5);
    Tape<double> tp;
    auto x = random_tensor({6, 7}, rng, 3.0);
    auto y = softmax(tp, x, 1);
    for (int i = 0; i < 6; ++i) {
        double s = 0;
        for (int j = 0; j < 7; ++j) {
            CHECK(y->v[i * 7 + j] >= 0.0);
            s += y->v[i * 7 + j];
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
    auto shifted = zeros<double>(x->shape);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 7; ++j) shifted->v[i * 7 + j] = x->v[i * 7 + j] + 17.5;
    auto y2 = softmax(tp, shifted, 1);
    for (size_t i = 0; i < y->numel(); ++i) CHECK(y2->v[i] == doctest::Approx(y->v[i]).epsilon(1e-9));
}

TEST_CASE("softmax gradient over both axes") {
    Rng rng(6);
    auto x = leaf(random_tensor({4, 5}, rng, 2.0));
    CHECK(fd_check([&](Tape<double>& tp) { return softmax(tp, x, 1); }, {x}) < 1e-6);
    CHECK(fd_check([&](Tape<double>& tp) { return softmax(tp, x, 0); }, {x}) < 1e-6);
}

TEST_CASE("elementwise activations") {
    Tape<double> tp;
    auto z = make_tensor<double>({1}, {0.0});
    CHECK(tanh(tp, z)->v[0] == 0.0);
    CHECK(sigmoid(tp, z)->v[0] == 0.5);

    // GeLU against the Gaussian-CDF definition.
    for (double xd : {-2.0, 0.0, 2.0}) {
        auto g = gelu(tp, make_tensor<double>({1}, {xd}));
        const double want = xd * 0.5 * (1.0 + std::erf(xd / std::sqrt(2.0)));
        CHECK(g->v[0] == doctest::Approx(want).epsilon(1e-6));
    }

    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        const double x = rng.uniform(-4.0, 4.0);
        auto pos = tanh(tp, make_tensor<double>({1}, {x}));
        auto neg = tanh(tp, make_tensor<double>({1}, {-x}));
        CHECK(pos->v[0] == doctest::Approx(-neg->v[0]).epsilon(1e-12));
    }
}

TEST_CASE("elementwise gradients") {
    Rng rng(8);
    auto x = leaf(random_tensor({3, 4}, rng, 2.0));
    CHECK(fd_check([&](Tape<double>& tp) { return tanh(tp, x); }, {x}) < 1e-6);
    CHECK(fd_check([&](Tape<double>& tp) { return sigmoid(tp, x); }, {x}) < 1e-6);
    CHECK(fd_check([&](Tape<double>& tp) { return gelu(tp, x); }, {x}) < 1e-6);
}

TEST_CASE("backward populates leaf grads and validates the loss") {
    Tape<double> tp;
    auto w = leaf(make_tensor<double>({2}, {1, 2}));
    auto p = leaf(make_tensor<double>({2}, {5, 5}));
    auto loss = sum_all(tp, mul(tp, w, w));
    tp.backward(loss);
    CHECK(w->g == std::vector<double>{2, 4});
    CHECK(p->g == std::vector<double>{0, 0});  // unused parameter gets zero

    // Repeated backward without zeroing accumulates leaf grads.
    tp.backward(loss);
    CHECK(w->g == std::vector<double>{4, 8});

    auto vec = mul(tp, w, w);
    CHECK_THROWS_AS(tp.backward(vec), ContractError);
    auto untracked = make_tensor<double>({1}, {3.0});
    CHECK_THROWS_AS(tp.backward(untracked), ContractError);
}

TEST_CASE("frozen tensors receive no gradient") {
    Tape<double> tp;
    auto frozen = make_tensor<double>({2, 2}, {1, 2, 3, 4});  // no leaf()
    auto w = leaf(make_tensor<double>({2, 2}, {1, 1, 1, 1}));
    auto loss = sum_all(tp, matmul(tp, frozen, w));
    tp.backward(loss);
    CHECK(frozen->g.empty());
    CHECK(!w->g.empty());
}

TEST_CASE("structural op gradients") {
    Rng rng(21);
    auto x = leaf(random_tensor({4, 6}, rng));
    auto y = leaf(random_tensor({4, 6}, rng));
    auto v = leaf(random_tensor({6}, rng));
    auto w = leaf(random_tensor({4}, rng));
    auto s = leaf(random_tensor({1}, rng));

    CHECK(fd_check([&](Tape<double>& tp) { return add(tp, x, y); }, {x, y}) < 1e-6);
    CHECK(fd_check([&](Tape<double>& tp) { return mul(tp, x, y); }, {x, y}) < 1e-6);
    CHECK(fd_check([&](Tape<double>& tp) { return add_rowvec(tp, x, v); }, {x, v}) < 1e-6);
    CHECK(fd_check([&](Tape<double>& tp) { return scale_const(tp, x, 2.5); }, {x}) < 1e-6);
    CHECK(fd_check([&](Tape<double>& tp) { return mul_scalar_tensor(tp, x, s); }, {x, s}) < 1e-6);
    CHECK(fd_check([&](Tape<double>& tp) { return scale_rows(tp, x, w); }, {x, w}) < 1e-6);
    CHECK(fd_check([&](Tape<double>& tp) { return slice_rows(tp, x, 1, 3); }, {x}) < 1e-6);
    CHECK(fd_check([&](Tape<double>& tp) { return slice_cols(tp, x, 2, 5); }, {x}) < 1e-6);
    CHECK(fd_check([&](Tape<double>& tp) { return column(tp, x, 3); }, {x}) < 1e-6);
    CHECK(fd_check([&](Tape<double>& tp) { return concat_cols<double>(tp, {x, y}); }, {x, y}) < 1e-6);
    CHECK(fd_check([&](Tape<double>& tp) { return concat_rows<double>(tp, {x, y}); }, {x, y}) < 1e-6);
    CHECK(fd_check([&](Tape<double>& tp) { return stack_cols<double>(tp, {w, w}); }, {w}) < 1e-6);

    std::vector<uint8_t> take{1, 0, 0, 1};
    CHECK(fd_check([&](Tape<double>& tp) { return row_merge(tp, x, y, take); }, {x, y}) < 1e-6);

    std::vector<int> idx{2, 0, -1, 3, 0};
    CHECK(fd_check([&](Tape<double>& tp) { return gather_rows(tp, x, idx); }, {x}) < 1e-6);
}

TEST_CASE("gather_rows pads with zero rows and skips their gradient") {
    Tape<double> tp;
    auto table = leaf(make_tensor<double>({2, 2}, {1, 2, 3, 4}));
    auto out = gather_rows(tp, table, {-1, 1});
    CHECK(out->v == std::vector<double>{0, 0, 3, 4});
    auto loss = sum_all(tp, out);
    tp.backward(loss);
    CHECK(table->g == std::vector<double>{0, 0, 1, 1});
    CHECK_THROWS_AS(gather_rows(tp, table, {5}), ContractError);
}

TEST_CASE("masked softmax rows") {
    Rng rng(31);
    auto x = leaf(random_tensor({3, 4}, rng, 2.0));
    std::vector<uint8_t> allow{1, 1, 0, 1, 0, 0, 0, 0, 1, 1, 1, 1};
    Tape<double> tp;
    auto y = masked_softmax_rows(tp, x, allow);
    double row0 = y->v[0] + y->v[1] + y->v[3];
    CHECK(row0 == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(y->v[2] == 0.0);
    for (int j = 0; j < 4; ++j) CHECK(y->v[4 + j] == 0.0);  // fully masked row
    CHECK(fd_check([&](Tape<double>& t2) { return masked_softmax_rows(t2, x, allow); }, {x}) < 1e-6);
}

TEST_CASE("layer_norm and l2_normalize gradients") {
    Rng rng(41);
    auto x = leaf(random_tensor({4, 8}, rng, 2.0));
    auto gain = leaf(random_tensor({8}, rng));
    auto bias = leaf(random_tensor({8}, rng));
    CHECK(fd_check([&](Tape<double>& tp) { return layer_norm(tp, x, gain, bias, 1e-5); }, {x, gain, bias}) < 1e-5);
    CHECK(fd_check([&](Tape<double>& tp) { return l2_normalize_rows(tp, x, 1e-12); }, {x}) < 1e-6);
}

TEST_CASE("clamp and dropout mask") {
    Rng rng(51);
    auto x = leaf(random_tensor({3, 5}, rng, 2.0));
    CHECK(fd_check([&](Tape<double>& tp) { return clamp(tp, x, -1.0, 1.0); }, {x}) < 1e-5);

    std::vector<uint8_t> keep(15, 1);
    keep[3] = keep[7] = 0;
    Tape<double> tp;
    auto y = apply_dropout(tp, x, keep, 2.0);
    CHECK(y->v[3] == 0.0);
    CHECK(y->v[0] == doctest::Approx(2.0 * x->v[0]));
    CHECK(fd_check([&](Tape<double>& t2) { return apply_dropout(t2, x, keep, 2.0); }, {x}) < 1e-6);
}

TEST_CASE("cross_entropy_rows analytic and gradient identity") {
    // Uniform scores over N items -> loss = ln N.
    const int n = 23;
    Tape<double> tp;
    auto logits = leaf(zeros<double>({2, n}));
    auto loss = cross_entropy_rows(tp, logits, {0, 7}, Reduction::mean);
    CHECK(loss->v[0] == doctest::Approx(std::log(static_cast<double>(n))).epsilon(1e-12));

    // Gradient equals softmax(scores) - onehot(target), scaled by 1/batch.
    Rng rng(61);
    auto l2 = leaf(random_tensor({3, 6}, rng, 2.0));
    std::vector<int> targets{1, 5, 0};
    Tape<double> tp2;
    auto loss2 = cross_entropy_rows(tp2, l2, targets, Reduction::mean);
    tp2.backward(loss2);
    for (int i = 0; i < 3; ++i) {
        double mx = l2->v[i * 6];
        for (int j = 1; j < 6; ++j) mx = std::max(mx, l2->v[i * 6 + j]);
        double denom = 0;
        for (int j = 0; j < 6; ++j) denom += std::exp(l2->v[i * 6 + j] - mx);
        for (int j = 0; j < 6; ++j) {
            const double p = std::exp(l2->v[i * 6 + j] - mx) / denom;
            const double want = (p - (j == targets[i] ? 1.0 : 0.0)) / 3.0;
            CHECK(l2->g[i * 6 + j] == doctest::Approx(want).epsilon(1e-9));
        }
    }
    CHECK(fd_check([&](Tape<double>& t3) { return cross_entropy_rows(t3, l2, targets, Reduction::sum); }, {l2}) < 1e-6);
    CHECK_THROWS_AS(cross_entropy_rows(tp2, l2, {0, 1}, Reduction::sum), DimError);
    CHECK_THROWS_AS(cross_entropy_rows(tp2, l2, {0, 1, 9}, Reduction::sum), ContractError);
}

TEST_CASE("target score dominating drives loss to zero") {
    Tape<double> tp;
    auto logits = leaf(make_tensor<double>({1, 4}, {60.0, 0.0, 0.0, 0.0}));
    auto loss = cross_entropy_rows(tp, logits, {0}, Reduction::mean);
    CHECK(loss->v[0] < 1e-12);
}

TEST_CASE("adam updates") {
    // Zero grads leave parameters unchanged.
    ParamSet<double> ps;
    auto w = ps.add("w", leaf(make_tensor<double>({3}, {1, 2, 3})));
    Adam<double> opt(ps, 0.1);
    ps.zero_grad();
    opt.step(ps);
    CHECK(w->v == std::vector<double>{1, 2, 3});

    // First step with unit gradient moves by about lr (bias-corrected).
    ParamSet<double> ps2;
    auto th = ps2.add("th", leaf(make_tensor<double>({1}, {0.5})));
    Adam<double> opt2(ps2, 0.01);
    th->g[0] = 1.0;
    opt2.step(ps2);
    CHECK(th->v[0] == doctest::Approx(0.5 - 0.01).epsilon(1e-6));

    // 100 steps on f(th) = (th-3)^2 with lr=0.1 converge near 3.
    ParamSet<double> ps3;
    auto p = ps3.add("p", leaf(make_tensor<double>({1}, {-1.0})));
    Adam<double> opt3(ps3, 0.1);
    for (int i = 0; i < 100; ++i) {
        ps3.zero_grad();
        p->g[0] = 2.0 * (p->v[0] - 3.0);
        opt3.step(ps3);
    }
    CHECK(std::abs(p->v[0] - 3.0) < 0.1);
}

TEST_CASE("grad_check on a quadratic") {
    ParamSet<double> ps;
    Rng rng(71);
    auto w = ps.add("w", leaf(random_tensor({4}, rng)));
    auto run = [&](bool with_grad) {
        Tape<double> tp;
        tp.recording = with_grad;
        auto loss = sum_all(tp, mul(tp, w, w));
        if (with_grad) tp.backward(loss);
        return loss->v[0];
    };
    auto report = grad_check_populated([&] { return run(true); }, [&] { return run(false); }, ps, 1e-5);
    CHECK(report.max_rel_err < 1e-9);
    CHECK(report.checked == 4);
}

TEST_CASE("debug finite sweep catches non-finite values") {
    Tape<double> tp;
    tp.debug_finite = true;
    auto x = leaf(make_tensor<double>({2}, {1.0, std::numeric_limits<double>::infinity()}));
    CHECK_THROWS_AS(sum_all(tp, x), DivergenceError);
}

TEST_CASE("rng determinism and ranges") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c(1);
    for (int i = 0; i < 1000; ++i) {
        const double u = c.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(c.uniform_int(7) < 7);
    }
    // Irwin-Hall normal: mean 0, var 1 within sampling error.
    Rng n(5);
    double s = 0, sq = 0;
    const int N = 20000;
    for (int i = 0; i < N; ++i) {
        const double x = n.normal();
        s += x;
        sq += x * x;
    }
    CHECK(std::abs(s / N) < 0.05);
    CHECK(std::abs(sq / N - 1.0) < 0.05);
}
