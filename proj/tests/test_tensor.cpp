#include <doctest.h>

#include <cmath>

#include "glyphlm/gradcheck.hpp"
#include "glyphlm/ops.hpp"
#include "glyphlm/rng.hpp"
#include "glyphlm/tensor.hpp"

using namespace glyphlm;

namespace {

TensorPtr<double>rand_d(std::vector<int> shape, Rng& rng, bool grad = true, double scale = 1.0) {
    auto t = make_tensor<double>(std::move(shape));
    for (auto& v : t->value) v = (rng.next_double() * 2.0 - 1.0) * scale;
    t->requires_grad = grad;
    return t;
}

}  // namespace

TEST_CASE("softmax matches spec examples") {
    auto zeros = make_tensor<double>({1, 4});
    auto y = softmax(zeros);
    for (int i = 0; i < 4; ++i) CHECK(y->value[size_t(i)] == doctest::Approx(0.25).epsilon(1e-12));

    auto big = make_tensor<double>({1, 2}, {1000.0, 0.0});
    auto yb = softmax(big);
    CHECK(yb->value[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(yb->value[1] == doctest::Approx(0.0).epsilon(1e-12));

    // random 5-vector vs direct FP64 exp/sum
    Rng rng(5);
    auto x = rand_d({1, 5}, rng, false, 3.0);
    auto ys = softmax(x);
    double denom = 0.0;
    for (int i = 0; i < 5; ++i) denom += std::exp(x->value[size_t(i)]);
    for (int i = 0; i < 5; ++i) CHECK(ys->value[size_t(i)] == doctest::Approx(std::exp(x->value[size_t(i)]) / denom).epsilon(1e-6));

    auto bad = make_tensor<double>({1, 2}, {std::nan(""), 0.0});
    CHECK_THROWS_AS(softmax(bad), NonFiniteError);
}

TEST_CASE("softmax rows sum to one and shift invariance") {
    Rng rng(11);
    auto x = rand_d({4, 9}, rng, false, 5.0);
    auto y = softmax(x);
    for (int r = 0; r < 4; ++r) {
        double s = 0.0;
        for (int i = 0; i < 9; ++i) s += y->value[size_t(r * 9 + i)];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
    auto shifted = make_tensor<double>(x->shape, x->value);
    for (auto& v : shifted->value) v += 13.75;
    auto y2 = softmax(shifted);
    for (size_t i = 0; i < y->value.size(); ++i) CHECK(y2->value[i] == doctest::Approx(y->value[i]).epsilon(1e-6));
}

TEST_CASE("cross entropy spec examples") {
    // uniform logits over V=5000 -> ln 5000
    auto logits = make_tensor<double>({1, 2, 5000});
    std::vector<int> targets = {7, 4999};
    auto loss = cross_entropy(logits, targets, 0);
    CHECK(loss->value[0] == doctest::Approx(std::log(5000.0)).epsilon(1e-12));

    // one-hot-correct logits: loss -> 0 as margin grows
    auto sharp = make_tensor<double>({1, 1, 4});
    sharp->value = {50.0, 0.0, 0.0, 0.0};
    auto l2 = cross_entropy(sharp, std::vector<int>{0}, -1);
    CHECK(l2->value[0] < 1e-12);

    // random case vs direct FP64 per-position oracle
    Rng rng(3);
    auto x = rand_d({2, 3, 7}, rng, false, 2.0);
    std::vector<int> t = {1, 2, 0, 6, 3, 5};
    auto l3 = cross_entropy(x, t, -1);
    double acc = 0.0;
    for (int row = 0; row < 6; ++row) {
        double mx = -1e300, denom = 0.0;
        for (int i = 0; i < 7; ++i) mx = std::max(mx, x->value[size_t(row * 7 + i)]);
        for (int i = 0; i < 7; ++i) denom += std::exp(x->value[size_t(row * 7 + i)] - mx);
        acc += -(x->value[size_t(row * 7 + t[size_t(row)])] - mx - std::log(denom));
    }
    CHECK(l3->value[0] == doctest::Approx(acc / 6.0).epsilon(1e-6));

    // pad positions are excluded from the mean
    std::vector<int> padded = {1, 2, 0, 0, 0, 0};
    auto l4 = cross_entropy(x, padded, 0);
    double acc2 = 0.0;
    for (int row = 0; row < 2; ++row) {
        double mx = -1e300, denom = 0.0;
        for (int i = 0; i < 7; ++i) mx = std::max(mx, x->value[size_t(row * 7 + i)]);
        for (int i = 0; i < 7; ++i) denom += std::exp(x->value[size_t(row * 7 + i)] - mx);
        acc2 += -(x->value[size_t(row * 7 + padded[size_t(row)])] - mx - std::log(denom));
    }
    CHECK(l4->value[0] == doctest::Approx(acc2 / 2.0).epsilon(1e-9));

    CHECK_THROWS_AS(cross_entropy(x, std::vector<int>{1, 2, 0, 6, 3, 99}, -1), DataError);
}

TEST_CASE("cross entropy equals -log softmax at the target") {
    Rng rng(17);
    auto x = rand_d({1, 1, 11}, rng, false, 4.0);
    auto p = softmax(x);
    for (int t = 0; t < 11; ++t) {
        auto l = cross_entropy(x, std::vector<int>{t}, -1);
        CHECK(l->value[0] == doctest::Approx(-std::log(p->value[size_t(t)])).epsilon(1e-6));
    }
}

TEST_CASE("backward basics: sum and product rule") {
    auto x = make_tensor<double>({2, 3}, {1, 2, 3, 4, 5, 6}, true);
    backward(sum(x));
    for (double g : x->grad) CHECK(g == doctest::Approx(1.0));

    auto a = make_tensor<double>({3}, {1.5, -2.0, 0.5}, true);
    auto b = make_tensor<double>({3}, {4.0, 3.0, -1.0}, true);
    backward(sum(mul(a, b)));
    for (int i = 0; i < 3; ++i) {
        CHECK(a->grad[size_t(i)] == doctest::Approx(b->value[size_t(i)]));
        CHECK(b->grad[size_t(i)] == doctest::Approx(a->value[size_t(i)]));
    }

    auto scalarless = make_tensor<double>({2}, {1.0, 2.0}, true);
    CHECK_THROWS_AS(backward(scale(scalarless, 2.0)), ShapeError);
}

TEST_CASE("gradient accumulation is additive and zeroable") {
    auto x = make_tensor<double>({3}, {1, 2, 3}, true);
    backward(sum(x));
    backward(sum(scale(x, 2.0)));
    for (double g : x->grad) CHECK(g == doctest::Approx(3.0));
    x->zero_grad();
    for (double g : x->grad) CHECK(g == 0.0);
}

TEST_CASE("gradient linearity: grad of a*loss is a*grad") {
    Rng rng(23);
    auto x = rand_d({4, 4}, rng);
    auto w = rand_d({4, 6}, rng);
    auto loss = [&] { return cross_entropy(linear(x, w), std::vector<int>{0, 3, 5, 1}, -1); };
    backward(loss());
    auto g1 = x->grad;
    x->zero_grad();
    w->zero_grad();
    backward(scale(loss(), 3.5));
    for (size_t i = 0; i < g1.size(); ++i) CHECK(x->grad[i] == doctest::Approx(3.5 * g1[i]).epsilon(1e-9));
}

TEST_CASE("finite differences validate every operator") {
    Rng rng(41);

    SUBCASE("linear 3x2") {
        auto x = rand_d({5, 3}, rng);
        auto w = rand_d({3, 2}, rng);
        auto b = rand_d({2}, rng);
        auto report = finite_diff_check<double>(
            {{"x", x}, {"w", w}, {"b", b}},
            [&] { return cross_entropy(linear(x, w, b), std::vector<int>{0, 1, 0, 1, 1}, -1); }, 1e-5, 1e-6);
        CHECK(report.all_passed());
    }

    SUBCASE("layer_norm 1x8") {
        auto x = rand_d({1, 8}, rng);
        auto g = rand_d({8}, rng);
        auto b = rand_d({8}, rng);
        auto report = finite_diff_check<double>(
            {{"x", x}, {"g", g}, {"b", b}}, [&] { return sum(mul(layer_norm(x, g, b), layer_norm(x, g, b))); }, 1e-5,
            1e-5);
        CHECK(report.all_passed());
    }

    SUBCASE("softmax + matmul + gelu chain") {
        auto q = rand_d({2, 3, 4}, rng);
        auto k = rand_d({2, 3, 4}, rng);
        auto report = finite_diff_check<double>(
            {{"q", q}, {"k", k}},
            [&] { return sum(softmax(gelu(matmul(q, k, true)))); }, 1e-5, 1e-5);
        CHECK(report.all_passed());
    }

    SUBCASE("conv2d + pools") {
        auto x = rand_d({2, 2, 6, 6}, rng);
        auto w = rand_d({3, 2, 3, 3}, rng);
        auto b = rand_d({3}, rng);
        auto report = finite_diff_check<double>(
            {{"x", x}, {"w", w}, {"b", b}},
            [&] {
                auto c = conv2d(x, w, b, 1, 1);
                auto p = avg_pool2d(gelu(c), 2, 2);
                return sum(mul(p, p));
            },
            1e-5, 1e-5);
        CHECK(report.all_passed());
    }

    SUBCASE("max_pool, adaptive pool, upsample") {
        auto x = rand_d({1, 2, 5, 5}, rng);
        auto report = finite_diff_check<double>(
            {{"x", x}},
            [&] {
                auto a = max_pool2d(x, 2, 1);
                auto c = adaptive_avg_pool2d(upsample_bilinear(a, 8, 8), 3, 3);
                return sum(mul(c, c));
            },
            1e-6, 1e-5);
        CHECK(report.all_passed());
    }

    SUBCASE("embedding, concat, permute, heads") {
        auto table = rand_d({7, 6}, rng);
        auto other = rand_d({2, 3, 6}, rng);
        auto report = finite_diff_check<double>(
            {{"table", table}, {"other", other}},
            [&] {
                auto e = embedding_lookup(table, {1, 4, 6, 0, 2, 5}, {2, 3});
                auto cat = concat(e, other, 2);                    // [2,3,12]
                auto sh = split_heads(cat, 3);                     // [2,3,3,4]
                auto pm = permute(merge_heads(sh), {1, 0, 2});     // [3,2,12]
                return sum(mul(pm, pm));
            },
            1e-5, 1e-5);
        CHECK(report.all_passed());
    }

    SUBCASE("broadcast add") {
        auto x = rand_d({2, 3, 4}, rng);
        auto bias = rand_d({4}, rng);
        auto row = rand_d({1, 3, 4}, rng);
        auto report = finite_diff_check<double>(
            {{"x", x}, {"bias", bias}, {"row", row}},
            [&] { return sum(mul(add(add(x, bias), row), x)); }, 1e-5, 1e-5);
        CHECK(report.all_passed());
    }
}

TEST_CASE("finite_diff_check flags a corrupted backward rule") {
    // an op whose backward is deliberately wrong: y = 2x but grad says 3x
    auto x = make_tensor<double>({4}, {0.3, -0.7, 1.1, 0.2}, true);
    auto bad_double = [&]() {
        auto out = make_tensor<double>(x->shape);
        for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = 2.0 * x->value[i];
        out->parents = {x};
        out->backward_fn = [&](Tensor<double>& self) {
            x->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) x->grad[i] += 3.0 * self.grad[i];
        };
        return out;
    };
    auto report = finite_diff_check<double>({{"x", x}}, [&] { return sum(bad_double()); }, 1e-5, 1e-4);
    CHECK_FALSE(report.all_passed());
    CHECK(report.failed == 4);
}

TEST_CASE("conv2d with a delta kernel reproduces its input") {
    Rng rng(77);
    auto x = rand_d({1, 1, 5, 5}, rng, false);
    auto w = make_tensor<double>({1, 1, 3, 3});
    w->value[4] = 1.0;  // center tap
    auto y = conv2d(x, w, TensorPtr<double>{}, 1, 1);
    REQUIRE(y->shape == x->shape);
    for (size_t i = 0; i < x->value.size(); ++i) CHECK(y->value[i] == doctest::Approx(x->value[i]).epsilon(1e-15));
}

TEST_CASE("matmul against a hand-rolled oracle including batch and transpose") {
    Rng rng(101);
    auto a = rand_d({2, 3, 4}, rng, false);
    auto b = rand_d({2, 4, 5}, rng, false);
    auto y = matmul(a, b);
    for (int g = 0; g < 2; ++g)
        for (int m = 0; m < 3; ++m)
            for (int n = 0; n < 5; ++n) {
                double acc = 0.0;
                for (int k = 0; k < 4; ++k)
                    acc += a->value[size_t((g * 3 + m) * 4 + k)] * b->value[size_t((g * 4 + k) * 5 + n)];
                CHECK(y->value[size_t((g * 3 + m) * 5 + n)] == doctest::Approx(acc).epsilon(1e-12));
            }

    auto bt = rand_d({2, 5, 4}, rng, false);
    auto y2 = matmul(a, bt, true);
    for (int g = 0; g < 2; ++g)
        for (int m = 0; m < 3; ++m)
            for (int n = 0; n < 5; ++n) {
                double acc = 0.0;
                for (int k = 0; k < 4; ++k)
                    acc += a->value[size_t((g * 3 + m) * 4 + k)] * bt->value[size_t((g * 5 + n) * 4 + k)];
                CHECK(y2->value[size_t((g * 3 + m) * 5 + n)] == doctest::Approx(acc).epsilon(1e-12));
            }
}

TEST_CASE("reshape and NoGradGuard") {
    auto x = make_tensor<double>({2, 6}, std::vector<double>(12, 1.0), true);
    auto r = reshape(x, {3, -1});
    CHECK(r->shape == std::vector<int>{3, 4});
    CHECK_THROWS_AS(reshape(x, {5, 5}), ShapeError);
    {
        NoGradGuard ng;
        auto y = sum(mul(x, x));
        CHECK_FALSE(y->needs_grad());
        CHECK(y->parents.empty());
    }
}
