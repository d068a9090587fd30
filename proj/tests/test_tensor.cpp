#include <doctest.h>

#include <cmath>

#include "support/grad_check.hpp"
#include "tempo/rng.hpp"
#include "tempo/tensor.hpp"

using namespace tempo;
using namespace tempo::ad;
using testsupport::check_against_fd;

namespace {

Tensor random_tensor(rng::Stream& s, int m, int n, double lo = -2.0, double hi = 2.0,
                     bool requires_grad = true) {
    std::vector<double> d(static_cast<size_t>(m) * n);
    for (auto& v : d) v = s.uniform(lo, hi);
    return tensor({m, n}, std::move(d), requires_grad);
}

// Weighted sum to a scalar so softmax-style Jacobians are fully exercised
// (a plain sum of softmax rows has an identically zero gradient).
Tensor weighted_sum(Tape& t, const Tensor& x, const Tensor& w) { return t.sum(t.mul(x, w)); }

} // namespace

TEST_CASE("matmul identity and orthogonal rows") {
    Tape t;
    auto eye = tensor({2, 2}, {1, 0, 0, 1});
    auto a = tensor({2, 2}, {1, 2, 3, 4});
    auto out = t.matmul(eye, a);
    CHECK(out->data == std::vector<double>{1, 2, 3, 4});

    auto r = t.matmul(tensor({1, 2}, {1, 0}), tensor({2, 1}, {0, 1}));
    CHECK(r->data[0] == 0.0);
}

TEST_CASE("matmul rejects mismatched inner dimensions naming both shapes") {
    Tape t;
    auto a = tensor({2, 3}, std::vector<double>(6, 1.0));
    auto b = tensor({2, 2}, std::vector<double>(4, 1.0));
    CHECK_THROWS_WITH_AS(t.matmul(a, b), doctest::Contains("[2x3]"), DimensionError);
    try {
        t.matmul(a, b);
    } catch (const DimensionError& e) {
        CHECK(std::string(e.what()).find("[2x2]") != std::string::npos);
    }
}

TEST_CASE("gradient of sum(matmul) matches the frozen hand value and fd") {
    auto a = tensor({1, 2}, {1, 2}, true);
    auto b = tensor({2, 1}, {3, 5}, true);
    auto rep = check_against_fd({a, b}, [&](Tape& t) { return t.sum(t.matmul(a, b)); });
    CHECK_MESSAGE(rep.ok, rep.detail);

    zero_grad({a, b});
    Tape t;
    auto loss = t.sum(t.matmul(a, b));
    t.backward(loss);
    CHECK(a->grad == std::vector<double>{3, 5});
}

TEST_CASE("softmax_rows values") {
    Tape t;
    auto s1 = t.softmax_rows(tensor({1, 2}, {0, 0}));
    CHECK(s1->data[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s1->data[1] == doctest::Approx(0.5).epsilon(1e-12));

    // max subtraction keeps huge equal logits finite
    auto s2 = t.softmax_rows(tensor({1, 2}, {1000, 1000}));
    CHECK(s2->data[0] == doctest::Approx(0.5).epsilon(1e-12));

    auto s3 = t.softmax_rows(tensor({1, 2}, {0.0, std::log(3.0)}));
    CHECK(s3->data[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(s3->data[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax_rows rows sum to one and entries lie in (0,1]") {
    auto s = rng::stream(7, "softmax-prop");
    for (int trial = 0; trial < 50; ++trial) {
        const int m = 1 + static_cast<int>(s.below(8));
        const int n = 1 + static_cast<int>(s.below(8));
        auto x = random_tensor(s, m, n, -10.0, 10.0, false);
        Tape t;
        auto sm = t.softmax_rows(x);
        for (int i = 0; i < m; ++i) {
            double row = 0.0;
            for (int j = 0; j < n; ++j) {
                const double v = sm->data[i * n + j];
                CHECK(v > 0.0);
                CHECK(v <= 1.0);
                row += v;
            }
            CHECK(std::fabs(row - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("softmax_rows rejects non-finite input") {
    Tape t;
    auto x = tensor({1, 2}, {std::numeric_limits<double>::infinity(), 0.0});
    CHECK_THROWS_AS(t.softmax_rows(x), InputError);
}

TEST_CASE("backward on simple graphs") {
    auto x = tensor({1, 3}, {1, 2, 3}, true);
    Tape t;
    auto loss = t.sum(x);
    t.backward(loss);
    CHECK(x->grad == std::vector<double>{1, 1, 1});

    auto y = tensor({1, 1}, {0.0}, true);
    Tape t2;
    auto loss2 = t2.sum(t2.sin(y));
    t2.backward(loss2);
    CHECK(y->grad[0] == doctest::Approx(1.0).epsilon(1e-15)); // cos(0)
}

TEST_CASE("backward rejects non-scalar loss and double replay") {
    auto x = tensor({1, 2}, {1, 2}, true);
    Tape t;
    auto y = t.scale(x, 2.0);
    CHECK_THROWS_AS(t.backward(y), ContractError);

    auto loss = t.sum(y);
    t.backward(loss);
    CHECK_THROWS_AS(t.backward(loss), StateError);
    t.reset();
    t.backward(loss); // allowed again after reset
    CHECK(x->grad == std::vector<double>{2, 2});
}

TEST_CASE("tape replay after reset is bitwise deterministic") {
    auto s = rng::stream(11, "replay");
    auto a = random_tensor(s, 4, 3);
    auto b = random_tensor(s, 3, 5);
    auto w = random_tensor(s, 4, 5, -1.0, 1.0, false);
    Tape t;
    auto loss = weighted_sum(t, t.softmax_rows(t.matmul(a, b)), w);
    t.backward(loss);
    auto ga = a->grad;
    auto gb = b->grad;
    t.reset();
    for (double v : a->grad) CHECK(v == 0.0);
    t.backward(loss);
    CHECK(a->grad == ga);
    CHECK(b->grad == gb);
}

TEST_CASE("composite graph matches central differences") {
    auto s = rng::stream(3, "composite");
    auto a = random_tensor(s, 3, 4);
    auto b = random_tensor(s, 4, 2);
    auto c = random_tensor(s, 3, 2);
    auto rep = check_against_fd({a, b, c}, [&](Tape& t) {
        auto h = t.relu(t.add(t.matmul(a, b), c));
        auto sm = t.softmax_rows(t.matmul(h, t.transpose(c)));
        return t.mean(t.mul(sm, sm));
    });
    CHECK_MESSAGE(rep.ok, rep.detail);
}

TEST_CASE("every primitive matches the finite-difference oracle on random shapes") {
    auto s = rng::stream(99, "prims");
    for (int trial = 0; trial < 8; ++trial) {
        const int m = 1 + static_cast<int>(s.below(8));
        const int k = 1 + static_cast<int>(s.below(8));
        const int n = 1 + static_cast<int>(s.below(8));

        {
            auto a = random_tensor(s, m, k);
            auto b = random_tensor(s, k, n);
            auto w = random_tensor(s, m, n, -1, 1, false);
            auto rep = check_against_fd({a, b}, [&](Tape& t) { return weighted_sum(t, t.matmul(a, b), w); });
            CHECK_MESSAGE(rep.ok, "matmul: " << rep.detail);
        }
        {
            auto a = random_tensor(s, m, n);
            auto w = random_tensor(s, n, m, -1, 1, false);
            auto rep = check_against_fd({a}, [&](Tape& t) { return weighted_sum(t, t.transpose(a), w); });
            CHECK_MESSAGE(rep.ok, "transpose: " << rep.detail);
        }
        {
            auto a = random_tensor(s, m, n);
            auto b = random_tensor(s, m, n);
            auto w = random_tensor(s, m, n, -1, 1, false);
            auto rep = check_against_fd(
                {a, b}, [&](Tape& t) { return weighted_sum(t, t.mul(t.add(a, b), b), w); });
            CHECK_MESSAGE(rep.ok, "add/mul: " << rep.detail);
        }
        {
            auto a = random_tensor(s, m, n);
            auto bias = random_tensor(s, 1, n);
            auto w = random_tensor(s, m, n, -1, 1, false);
            auto rep = check_against_fd(
                {a, bias}, [&](Tape& t) { return weighted_sum(t, t.add_bias_row(a, bias), w); });
            CHECK_MESSAGE(rep.ok, "add_bias_row: " << rep.detail);
        }
        {
            auto a = random_tensor(s, m, n);
            auto rep = check_against_fd(
                {a}, [&](Tape& t) { return t.sum(t.scale(a, 1.0 / std::sqrt(5.0))); });
            CHECK_MESSAGE(rep.ok, "scale: " << rep.detail);
        }
        {
            auto a = random_tensor(s, m, k);
            auto b = random_tensor(s, m, n);
            auto w = random_tensor(s, m, k + n, -1, 1, false);
            auto rep = check_against_fd(
                {a, b}, [&](Tape& t) { return weighted_sum(t, t.concat_cols({a, b}), w); });
            CHECK_MESSAGE(rep.ok, "concat_cols: " << rep.detail);
        }
        if (m >= 2 && n >= 2) {
            auto a = random_tensor(s, m, n);
            auto w = random_tensor(s, m - 1, n - 1, -1, 1, false);
            auto rep = check_against_fd(
                {a}, [&](Tape& t) { return weighted_sum(t, t.slice(a, 1, m, 1, n), w); });
            CHECK_MESSAGE(rep.ok, "slice: " << rep.detail);
        }
        {
            auto a = random_tensor(s, m, n);
            auto b = random_tensor(s, m, n);
            auto w = random_tensor(s, m, 2 * n, -1, 1, false);
            auto rep = check_against_fd(
                {a, b}, [&](Tape& t) { return weighted_sum(t, t.interleave_cols(a, b), w); });
            CHECK_MESSAGE(rep.ok, "interleave_cols: " << rep.detail);
        }
        {
            auto a = random_tensor(s, m, n, -3.0, 3.0);
            auto w = random_tensor(s, m, n, -1, 1, false);
            auto rep = check_against_fd(
                {a}, [&](Tape& t) { return weighted_sum(t, t.mul(t.sin(a), t.cos(a)), w); });
            CHECK_MESSAGE(rep.ok, "sin/cos: " << rep.detail);
        }
        {
            auto a = random_tensor(s, m, n, -1.5, 1.5);
            auto w = random_tensor(s, m, n, -1, 1, false);
            auto rep = check_against_fd({a}, [&](Tape& t) { return weighted_sum(t, t.exp(a), w); });
            CHECK_MESSAGE(rep.ok, "exp: " << rep.detail);
        }
        {
            auto a = random_tensor(s, m, n, 0.5, 3.0);
            auto w = random_tensor(s, m, n, -1, 1, false);
            auto rep = check_against_fd({a}, [&](Tape& t) { return weighted_sum(t, t.log(a), w); });
            CHECK_MESSAGE(rep.ok, "log: " << rep.detail);
        }
        {
            // keep values away from the relu kink so central differences are valid
            auto a = random_tensor(s, m, n);
            for (auto& v : a->data) {
                if (std::fabs(v) < 0.05) v = v < 0 ? v - 0.1 : v + 0.1;
            }
            auto w = random_tensor(s, m, n, -1, 1, false);
            auto rep = check_against_fd({a}, [&](Tape& t) { return weighted_sum(t, t.relu(a), w); });
            CHECK_MESSAGE(rep.ok, "relu: " << rep.detail);
        }
        {
            auto a = random_tensor(s, m, n, -4.0, 4.0);
            auto w = random_tensor(s, m, n, -1, 1, false);
            auto rep = check_against_fd(
                {a}, [&](Tape& t) { return weighted_sum(t, t.softmax_rows(a), w); });
            CHECK_MESSAGE(rep.ok, "softmax_rows: " << rep.detail);
        }
        {
            auto a = random_tensor(s, n, n, -3.0, 3.0);
            auto w = random_tensor(s, n, n, -1, 1, false);
            auto rep = check_against_fd(
                {a}, [&](Tape& t) { return weighted_sum(t, t.causal_softmax_rows(a), w); });
            CHECK_MESSAGE(rep.ok, "causal_softmax_rows: " << rep.detail);
        }
        {
            auto table = random_tensor(s, m + 2, n);
            std::vector<int> ids;
            for (int i = 0; i < m; ++i) ids.push_back(static_cast<int>(s.below(m + 2)));
            auto w = random_tensor(s, m, n, -1, 1, false);
            auto rep = check_against_fd(
                {table}, [&](Tape& t) { return weighted_sum(t, t.gather_rows(table, ids), w); });
            CHECK_MESSAGE(rep.ok, "gather_rows: " << rep.detail);
        }
        {
            auto a = random_tensor(s, m, n);
            auto rep = check_against_fd({a}, [&](Tape& t) { return t.mean(t.mul(a, a)); });
            CHECK_MESSAGE(rep.ok, "mean: " << rep.detail);
        }
    }
}

TEST_CASE("causal softmax never lets a row depend on later columns") {
    auto s = rng::stream(5, "causal");
    auto a = random_tensor(s, 5, 5, -2, 2, false);
    Tape t;
    auto out = t.causal_softmax_rows(a);
    auto base = out->data;
    // perturb strictly-upper entries; visible outputs must not move at all
    a->data[0 * 5 + 3] += 100.0;
    a->data[2 * 5 + 4] -= 50.0;
    Tape t2;
    auto out2 = t2.causal_softmax_rows(a);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j <= i; ++j) CHECK(out2->data[i * 5 + j] == base[i * 5 + j]);
}

TEST_CASE("gather_rows rejects out-of-range ids") {
    Tape t;
    auto table = tensor({3, 2}, {1, 2, 3, 4, 5, 6});
    CHECK_THROWS_AS(t.gather_rows(table, {0, 3}), InputError);
}
