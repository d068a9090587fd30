#include <doctest.h>

#include <cmath>

#include "support/grad_check.hpp"
#include "tempo/kernel_lab.hpp"
#include "tempo/time_embedding.hpp"

using namespace tempo;
using namespace tempo::emb;

namespace {

std::unique_ptr<TimeEmbedder> random_family(int which, rng::Stream& s) {
    switch (which % 3) {
        case 0: {
            auto e = std::make_unique<BochnerNormal>(4 + static_cast<int>(s.below(12)),
                                                     rng::Stream(s.next_u64()));
            e->mu_param()->data[0] = s.uniform(-2.0, 2.0);
            e->sigma_raw_param()->data[0] = s.uniform(-1.0, 1.5);
            return e;
        }
        case 1:
            return std::make_unique<BochnerInvCdf>(3 + static_cast<int>(s.below(6)),
                                                   rng::Stream(s.next_u64()));
        default: {
            std::vector<double> omegas(2 + s.below(16));
            for (auto& w : omegas) w = s.uniform(-5.0, 5.0);
            return std::make_unique<BochnerNonParam>(std::move(omegas));
        }
    }
}

} // namespace

TEST_CASE("non-parametric embedding at t=0 is the scaled cos/sin pattern") {
    BochnerNonParam e({0.7, -3.0, 12.0});
    const auto v = e.embed(0.0);
    const double scale = std::sqrt(1.0 / 3.0);
    REQUIRE(v.size() == 6);
    for (int i = 0; i < 3; ++i) {
        CHECK(v[2 * i] == scale);
        CHECK(v[2 * i + 1] == 0.0);
    }
}

TEST_CASE("non-parametric d=1 omega=pi at t=0.5") {
    BochnerNonParam e({3.14159265358979323846});
    const auto v = e.embed(0.5);
    CHECK(std::fabs(v[0]) <= 1e-12);       // cos(pi/2)
    CHECK(std::fabs(v[1] - 1.0) <= 1e-12); // sin(pi/2)
}

TEST_CASE("mercer k=1 jmax=1 period=1 with unit coefficients at t=0") {
    Mercer e({1.0}, 1, true, false, false);
    e.intercept_param()->data = {1.0};
    e.cos_coeff_param()->data = {1.0};
    e.sin_coeff_param()->data = {1.0};
    const auto v = e.embed(0.0);
    REQUIRE(v.size() == 3);
    CHECK(v[0] == 1.0);
    CHECK(v[1] == 1.0);
    CHECK(v[2] == 0.0);
}

TEST_CASE("embed rejects non-finite times") {
    BochnerNonParam e({1.0});
    CHECK_THROWS_AS(e.embed(std::nan("")), InputError);
    CHECK_THROWS_AS(e.embed(std::numeric_limits<double>::infinity()), InputError);
}

TEST_CASE("bochner self-kernel identity and translation invariance") {
    auto s = rng::stream(21, "bochner-props");
    for (int trial = 0; trial < 60; ++trial) {
        auto e = random_family(trial, s);
        const double t = s.uniform(0.0, 50.0);
        CHECK(std::fabs(kernel_estimate(*e, t, t) - 1.0) <= 1e-12);

        const double t1 = s.uniform(0.0, 100.0);
        const double t2 = s.uniform(0.0, 100.0);
        const double c = s.uniform(0.0, 100.0);
        CHECK(std::fabs(kernel_estimate(*e, t1, t2) - kernel_estimate(*e, t1 + c, t2 + c)) <= 1e-10);
    }
}

TEST_CASE("mercer with tied pairs is translation invariant; free coefficients stay PSD") {
    auto s = rng::stream(33, "mercer-props");

    Mercer tied({0.7, 3.0, 11.0}, 3, true, true, false);
    for (auto& v : tied.intercept_param()->data) v = s.uniform(-1.0, 1.0);
    for (auto& v : tied.cos_coeff_param()->data) v = s.uniform(-1.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        const double t1 = s.uniform(0.0, 100.0);
        const double t2 = s.uniform(0.0, 100.0);
        const double c = s.uniform(0.0, 100.0);
        CHECK(std::fabs(kernel_estimate(tied, t1, t2) - kernel_estimate(tied, t1 + c, t2 + c)) <= 1e-10);
    }

    Mercer free({0.9, 4.0}, 2, true, false, false);
    for (auto& v : free.intercept_param()->data) v = s.uniform(-1.0, 1.0);
    for (auto& v : free.cos_coeff_param()->data) v = s.uniform(-1.0, 1.0);
    for (auto& v : free.sin_coeff_param()->data) v = s.uniform(-1.0, 1.0);
    std::vector<double> grid;
    for (int i = 0; i < 32; ++i) grid.push_back(0.4 * i);
    const auto gram = gram_matrix(free, grid);
    CHECK(kern::min_eigenvalue(gram) >= -1e-8);
}

TEST_CASE("frozen normal spectral draws reproduce the gaussian kernel at d=4096") {
    BochnerNormal e(4096, rng::stream(7, "mc-normal"));
    const double est = kernel_estimate(e, 1.0, 0.0);
    CHECK(std::fabs(est - std::exp(-0.5)) <= 0.05);
}

TEST_CASE("monte carlo error shrinks with the sample count (small-scale)") {
    double err_small = 0.0, err_large = 0.0;
    const int trials = 6;
    for (int trial = 0; trial < trials; ++trial) {
        BochnerNormal small(32, rng::stream(trial, "mc-small"));
        BochnerNormal large(2048, rng::stream(trial, "mc-large"));
        double sup_small = 0.0, sup_large = 0.0;
        for (double delta = 0.0; delta <= 4.0; delta += 0.25) {
            const double ref = std::exp(-0.5 * delta * delta);
            sup_small = std::max(sup_small, std::fabs(kernel_estimate(small, delta, 0.0) - ref));
            sup_large = std::max(sup_large, std::fabs(kernel_estimate(large, delta, 0.0) - ref));
        }
        err_small += sup_small / trials;
        err_large += sup_large / trials;
    }
    CHECK(err_large < err_small);
}

TEST_CASE("geometric period initialization") {
    const auto geo = init_frequencies_geometric(1.0, 1000.0, 2);
    REQUIRE(geo.periods.size() == 2);
    CHECK_FALSE(geo.degenerate);
    CHECK(geo.periods[0] == doctest::Approx(1.0 + std::sqrt(999.0)).epsilon(1e-12));
    CHECK(geo.periods[0] == doctest::Approx(32.6070).epsilon(1e-4));
    CHECK(geo.periods[1] == doctest::Approx(1000.0).epsilon(1e-12));

    const auto single = init_frequencies_geometric(3.0, 17.0, 1);
    REQUIRE(single.periods.size() == 1);
    CHECK(single.periods[0] == doctest::Approx(17.0).epsilon(1e-12));
}

TEST_CASE("degenerate geometric span falls back to log spacing and warns") {
    const auto geo = init_frequencies_geometric(1.0, 2.0, 4);
    CHECK(geo.degenerate);
    REQUIRE(geo.periods.size() == 4);
    for (int i = 1; i <= 4; ++i) {
        CHECK(geo.periods[i - 1] == doctest::Approx(std::pow(2.0, i / 4.0)).epsilon(1e-12));
    }
    CHECK_THROWS_AS(init_frequencies_geometric(5.0, 1.0, 3), ConfigError);
    CHECK_THROWS_AS(init_frequencies_geometric(1.0, 2.0, 0), ConfigError);
}

TEST_CASE("phi and gram exports") {
    BochnerNonParam e({1.0});
    const auto phi = phi_matrix(e, {0.0});
    REQUIRE(phi.size() == 1);
    CHECK(phi[0][0] == 1.0);
    CHECK(phi[0][1] == 0.0);
    const auto gram = gram_matrix(e, {0.0});
    CHECK(gram[0][0] == 1.0);

    CHECK_THROWS_AS(phi_matrix(e, {}), InputError);
    CHECK_THROWS_AS(gram_matrix(e, {}), InputError);

    auto s = rng::stream(4, "gram-psd");
    Mercer m({0.5, 2.0, 9.0}, 2, true, false, false);
    for (auto& v : m.cos_coeff_param()->data) v = s.uniform(-1.0, 1.0);
    for (auto& v : m.sin_coeff_param()->data) v = s.uniform(-1.0, 1.0);
    std::vector<double> grid;
    for (int i = 0; i < 32; ++i) grid.push_back(0.3 * i);
    const auto g = gram_matrix(m, grid);
    for (size_t i = 0; i < grid.size(); ++i)
        for (size_t j = 0; j < grid.size(); ++j) CHECK(std::fabs(g[i][j] - g[j][i]) <= 1e-12);
    CHECK(kern::min_eigenvalue(g) >= -1e-8);
}

TEST_CASE("graph evaluation agrees with plain evaluation") {
    auto s = rng::stream(17, "embed-consistency");
    for (int trial = 0; trial < 12; ++trial) {
        auto e = random_family(trial, s);
        const double t = s.uniform(0.0, 20.0);
        ad::Tape tape;
        tape.set_grad_enabled(false);
        auto col = ad::tensor({1, 1}, {t});
        auto g = e->embed_graph(tape, col);
        const auto plain = e->embed(t);
        REQUIRE(g->size() == plain.size());
        for (size_t i = 0; i < plain.size(); ++i) {
            CHECK(std::fabs(g->data[i] - plain[i]) <= 1e-12);
        }
    }

    Mercer m({0.8, 5.0}, 3, true, false, true);
    auto sm = rng::stream(18, "embed-mercer");
    for (auto& v : m.cos_coeff_param()->data) v = sm.uniform(-1.0, 1.0);
    for (auto& v : m.sin_coeff_param()->data) v = sm.uniform(-1.0, 1.0);
    ad::Tape tape;
    tape.set_grad_enabled(false);
    auto g = m.embed_graph(tape, ad::tensor({1, 1}, {2.7}));
    const auto plain = m.embed(2.7);
    for (size_t i = 0; i < plain.size(); ++i) CHECK(std::fabs(g->data[i] - plain[i]) <= 1e-12);
}

TEST_CASE("kernel estimate gradients match finite differences for every trainable") {
    auto s = rng::stream(55, "embed-grads");
    std::vector<std::unique_ptr<TimeEmbedder>> embedders;
    embedders.push_back(std::make_unique<BochnerNormal>(5, rng::Stream(s.next_u64())));
    embedders.push_back(std::make_unique<BochnerInvCdf>(4, rng::Stream(s.next_u64())));
    embedders.push_back(std::make_unique<BochnerNonParam>(std::vector<double>{0.4, -1.3, 2.2}));
    {
        auto m = std::make_unique<Mercer>(std::vector<double>{0.9, 4.0}, 2, true, false, true);
        for (auto& v : m->cos_coeff_param()->data) v = s.uniform(-1.0, 1.0);
        for (auto& v : m->sin_coeff_param()->data) v = s.uniform(-1.0, 1.0);
        embedders.push_back(std::move(m));
    }

    for (auto& e : embedders) {
        const double t1 = 1.3, t2 = 0.4;
        auto build = [&](ad::Tape& tape) {
            auto a = e->embed_graph(tape, ad::tensor({1, 1}, {t1}));
            auto b = e->embed_graph(tape, ad::tensor({1, 1}, {t2}));
            return tape.sum(tape.mul(a, b));
        };
        auto rep = testsupport::check_against_fd(e->trainables(), build, 1e-4, 1e-7);
        CHECK_MESSAGE(rep.ok, rep.detail);
    }
}

TEST_CASE("embedding is differentiable with respect to the time input") {
    BochnerNonParam e({0.8, 2.5});
    auto t_col = ad::tensor({2, 1}, {1.1, 3.0}, true, "t");
    auto w = ad::tensor({2, 4}, {0.3, -0.2, 0.9, 0.1, -0.5, 0.4, 0.2, 0.7});
    auto build = [&](ad::Tape& tape) { return tape.sum(tape.mul(e.embed_graph(tape, t_col), w)); };
    auto rep = testsupport::check_against_fd({t_col}, build);
    CHECK_MESSAGE(rep.ok, rep.detail);
}
