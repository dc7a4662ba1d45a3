#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "fedaaw/aggregation.hpp"
#include "fedaaw/errors.hpp"
#include "fedaaw/random.hpp"

using namespace fedaaw;

namespace {

AggregationWeights weights_of(std::vector<double> v) { return {std::move(v), 0}; }

ParamVector pv(std::vector<double> v) { return {std::move(v), "test"}; }

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

// Straight transcription of the clip-then-normalize rule, kept independent of
// the library code.
std::vector<double> reference_update(const std::vector<double>& a, const std::vector<double>& g, double s) {
    double m = 0.0;
    for (double x : g) m = std::max(m, std::abs(x));
    if (m == 0.0 || s == 0.0) return a;
    std::vector<double> t(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) t[i] = std::clamp(a[i] + g[i] * s / m, 0.0, 1.0);
    const double total = sum(t);
    for (double& x : t) x /= total;
    return t;
}

std::vector<double> random_simplex(Rng& rng, std::size_t k) {
    std::vector<double> v(k);
    for (double& x : v) x = rng.uniform() + 1e-3;
    const double total = sum(v);
    for (double& x : v) x /= total;
    return v;
}

}  // namespace

TEST_CASE("init_weights is sample proportional") {
    const std::vector<std::int64_t> counts{2, 3, 5};
    const auto w = init_weights(counts);
    CHECK(w.round == 0);
    REQUIRE(w.size() == 3);
    CHECK(w.values[0] == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(w.values[1] == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(w.values[2] == doctest::Approx(0.5).epsilon(1e-15));

    const std::vector<std::int64_t> one{7};
    CHECK(init_weights(one).values == std::vector<double>{1.0});

    const std::vector<std::int64_t> equal{1, 1, 1, 1};
    CHECK(init_weights(equal).values == std::vector<double>(4, 0.25));
}

TEST_CASE("init_weights rejects bad counts") {
    CHECK_THROWS_AS(init_weights(std::vector<std::int64_t>{}), InvalidInput);
    CHECK_THROWS_AS(init_weights(std::vector<std::int64_t>{3, 0}), InvalidInput);
    CHECK_THROWS_AS(init_weights(std::vector<std::int64_t>{3, -1}), InvalidInput);
}

TEST_CASE("aggregate examples") {
    const std::vector<ParamVector> p{pv({1, 2}), pv({3, 4})};
    CHECK(aggregate(p, weights_of({0.5, 0.5})).values == std::vector<double>{2, 3});
    CHECK(aggregate(p, weights_of({1.0, 0.0})).values == std::vector<double>{1, 2});

    const std::vector<ParamVector> q{pv({0}), pv({4})};
    CHECK(aggregate(q, weights_of({0.25, 0.75})).values == std::vector<double>{3});
}

TEST_CASE("aggregate validates its inputs") {
    const std::vector<ParamVector> p{pv({1, 2}), pv({3})};
    CHECK_THROWS_AS(aggregate(p, weights_of({0.5, 0.5})), InvalidInput);
    const std::vector<ParamVector> q{pv({1}), pv({3})};
    CHECK_THROWS_AS(aggregate(q, weights_of({1.0})), InvalidInput);
    CHECK_THROWS_AS(aggregate(q, weights_of({0.7, 0.7})), InvalidInput);
    std::vector<ParamVector> r{pv({1}), pv({3})};
    r[1].layout_id = "other";
    CHECK_THROWS_AS(aggregate(r, weights_of({0.5, 0.5})), InvalidInput);
}

TEST_CASE("aggregate properties") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t k = 1 + rng.below(6);
        const std::size_t d = 1 + rng.below(20);
        std::vector<ParamVector> params;
        for (std::size_t i = 0; i < k; ++i) {
            std::vector<double> v(d);
            for (double& x : v) x = rng.uniform(-5, 5);
            params.push_back(pv(std::move(v)));
        }

        // One-hot weights select a client exactly.
        const std::size_t pick = rng.below(k);
        std::vector<double> onehot(k, 0.0);
        onehot[pick] = 1.0;
        CHECK(aggregate(params, weights_of(onehot)).values == params[pick].values);

        // Identical clients are conserved.
        const std::vector<ParamVector> same(k, params[0]);
        const auto w = weights_of(random_simplex(rng, k));
        const auto conserved = aggregate(same, w);
        for (std::size_t j = 0; j < d; ++j) CHECK(conserved.values[j] == doctest::Approx(params[0].values[j]).epsilon(1e-14));

        // Permuting clients and weights together leaves the output unchanged.
        std::vector<std::size_t> perm(k);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(std::span<std::size_t>(perm));
        std::vector<ParamVector> pp;
        std::vector<double> pw;
        for (auto i : perm) {
            pp.push_back(params[i]);
            pw.push_back(w.values[i]);
        }
        const auto a = aggregate(params, w);
        const auto b = aggregate(pp, weights_of(pw));
        for (std::size_t j = 0; j < d; ++j) CHECK(a.values[j] == doctest::Approx(b.values[j]).epsilon(1e-13));
    }
}

TEST_CASE("aggregate with a single client is an exact copy") {
    const std::vector<ParamVector> p{pv({-0.0, 1e-300, -3.5})};
    const auto out = aggregate(p, weights_of({1.0}));
    CHECK(std::signbit(out.values[0]));
    CHECK(out.values == p[0].values);
}

TEST_CASE("step_size schedule") {
    CHECK(step_size(0, 300) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(step_size(300, 300) == 0.0);
    CHECK(step_size(150, 300) == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(step_size(5, 10, 0.0) == 0.0);
    CHECK_THROWS_AS(step_size(301, 300), InvalidInput);
    CHECK_THROWS_AS(step_size(0, 0), InvalidInput);
}

TEST_CASE("compute_loss_gaps") {
    const std::vector<double> p1{0.5, 0.4}, q1{0.6, 0.3};
    const auto g1 = compute_loss_gaps(p1, q1);
    CHECK(g1.gaps[0] == doctest::Approx(0.1));
    CHECK(g1.gaps[1] == doctest::Approx(-0.1));

    const std::vector<double> p2{0.7, 0.7};
    CHECK(compute_loss_gaps(p2, p2).gaps == std::vector<double>{0, 0});

    const std::vector<double> p3{1.0}, q3{0.2};
    CHECK(compute_loss_gaps(p3, q3).gaps[0] == doctest::Approx(-0.8));

    CHECK_THROWS_AS(compute_loss_gaps(p1, p3), InvalidInput);
}

TEST_CASE("update_weights examples") {
    auto w = update_weights(weights_of({0.5, 0.5}), {{0.1, -0.1}}, 0.1);
    CHECK(w.round == 1);
    CHECK(w.values[0] == doctest::Approx(0.6).epsilon(1e-14));
    CHECK(w.values[1] == doctest::Approx(0.4).epsilon(1e-14));

    // 0.6 / (0.6 + 0.5333...) and 0.5333... / 1.1333...
    w = update_weights(weights_of({0.5, 0.5}), {{0.3, 0.1}}, 0.1);
    CHECK(w.values[0] == doctest::Approx(0.6 / (0.6 + 0.5 + 0.1 / 3.0)).epsilon(1e-14));
    CHECK(std::abs(w.values[0] - 0.52941) < 1e-5);
    CHECK(std::abs(w.values[1] - 0.47059) < 1e-5);

    w = update_weights(weights_of({0.4, 0.6}), {{0.0, 0.0}}, 0.1);
    CHECK(w.values == std::vector<double>{0.4, 0.6});
    CHECK(w.round == 1);
}

TEST_CASE("update_weights clamps at the interval ends") {
    // Lower clamp: 0.05 - 0.1 -> 0, upper: 0.95 + 0.1 -> 1.
    const auto d = update_weights_detailed(weights_of({0.05, 0.95}), {{-1.0, 1.0}}, 0.1);
    CHECK(d.clipped == std::vector<double>{0.0, 1.0});
    CHECK(d.weights.values == std::vector<double>{0.0, 1.0});
    CHECK_FALSE(d.skipped);
}

TEST_CASE("update_weights falls back when every weight clips to zero") {
    const std::vector<double> init{0.25, 0.75};
    const auto d = update_weights_detailed(weights_of({0.05, 0.95}), {{-1.0, -1.0}}, 1.0, init);
    CHECK(d.used_fallback);
    CHECK(d.weights.values == init);

    const auto u = update_weights_detailed(weights_of({0.5, 0.5}), {{-1.0, -1.0}}, 1.0);
    CHECK(u.used_fallback);
    CHECK(u.weights.values == std::vector<double>{0.5, 0.5});
}

TEST_CASE("update_weights rejects bad inputs") {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(update_weights(weights_of({0.5, 0.5}), {{nan, 0.1}}, 0.1), InvalidInput);
    CHECK_THROWS_AS(update_weights(weights_of({0.5, 0.5}), {{0.1}}, 0.1), InvalidInput);
    CHECK_THROWS_AS(update_weights(weights_of({0.5, 0.5}), {{0.1, 0.2}}, -0.1), InvalidInput);
}

TEST_CASE("update_weights properties") {
    Rng rng(2024);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t k = 1 + rng.below(8);
        const auto a = weights_of(random_simplex(rng, k));
        std::vector<double> g(k);
        for (double& x : g) x = rng.uniform(-1, 1) * (rng.below(4) == 0 ? 1e-9 : 1.0);
        const double s = rng.uniform(0.0, 0.5);

        const auto d = update_weights_detailed(a, {g}, s);
        check_simplex(d.weights.values);
        CHECK(std::abs(sum(d.weights.values) - 1.0) <= kSimplexTolerance);

        if (!d.used_fallback) {
            const auto ref = reference_update(a.values, g, s);
            for (std::size_t i = 0; i < k; ++i) CHECK(d.weights.values[i] == doctest::Approx(ref[i]).epsilon(1e-12));
        }

        // Zero step is the identity.
        CHECK(update_weights(a, {g}, 0.0).values == a.values);

        // A single client always keeps all the weight.
        if (k == 1) CHECK(d.weights.values == std::vector<double>{1.0});

        // Positive gaps raise the unnormalized weight when no clip binds.
        double m = 0.0;
        for (double x : g) m = std::max(m, std::abs(x));
        for (std::size_t i = 0; i < k; ++i) {
            const double raw = a.values[i] + g[i] * s / m;
            if (g[i] > 0 && s > 0 && raw < 1.0) CHECK(d.clipped[i] > a.values[i]);
        }
    }
}

TEST_CASE("long update chains stay on the simplex") {
    Rng rng(5);
    const std::vector<std::int64_t> counts{162, 148, 206, 17, 25, 74, 91};
    auto w = init_weights(counts);
    const std::size_t total = 300;
    for (std::size_t t = 0; t < total; ++t) {
        std::vector<double> g(counts.size());
        for (double& x : g) x = rng.uniform(-0.05, 0.05);
        w = update_weights(w, {g}, step_size(t, total), init_weights(counts).values);
        check_simplex(w.values);
    }
    CHECK(w.round == total);
}
