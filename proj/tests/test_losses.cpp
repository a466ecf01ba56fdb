#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bregkge/losses.hpp"
#include "support/synth.hpp"

using namespace bregkge;

namespace {

// finite-difference check of d value / d score against the returned weights
void check_score_grad(const std::function<LossOut(const std::vector<double>&)>& loss,
                      std::vector<double> scores, double tol = 1e-6) {
    LossOut out = loss(scores);
    std::vector<double> dense(scores.size(), 0.0);
    for (auto& [y, g] : out.grad) dense[y] += g;
    for (size_t i = 0; i < scores.size(); ++i) {
        double fd = synth::central_diff(
            [&](double x) {
                std::vector<double> s = scores;
                s[i] = x;
                return loss(s).value;
            },
            scores[i]);
        CHECK(synth::rel_err(dense[i], fd) < tol);
    }
}

std::vector<double> random_scores(int n, Rng& rng, double scale = 3.0) {
    std::vector<double> s(n);
    for (double& x : s) x = scale * (2.0 * rng.u01() - 1.0);
    return s;
}

}  // namespace

TEST_CASE("softmax basics") {
    auto u = softmax(std::vector<double>{0.0, 0.0, 0.0});
    for (double p : u) CHECK(p == doctest::Approx(1.0 / 3.0));

    auto extreme = softmax(std::vector<double>{1000.0, 0.0});
    CHECK(extreme[0] == doctest::Approx(1.0));
    CHECK(extreme[1] == doctest::Approx(0.0));
    CHECK(std::isfinite(extreme[0]));

    Rng rng(3);
    auto s = random_scores(6, rng);
    auto p1 = softmax(s);
    for (double& x : s) x += 17.25;
    auto p2 = softmax(s);
    for (size_t i = 0; i < p1.size(); ++i) CHECK(std::abs(p1[i] - p2[i]) < 1e-15);
}

TEST_CASE("sce loss at frozen points") {
    std::vector<double> uniform(4, 0.7);
    CHECK(sce_loss(uniform, 2).value == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    // lambda = 1: the value no longer depends on the gold label
    Rng rng(4);
    auto s = random_scores(5, rng);
    CHECK(sce_loss(s, 0, 1.0).value == doctest::Approx(sce_loss(s, 3, 1.0).value));
}

TEST_CASE("sce gradient is p minus target and passes finite differences") {
    Rng rng(5);
    for (double lambda : {0.0, 0.3}) {
        auto s = random_scores(6, rng);
        int gold = rng.index(6);
        LossOut out = sce_loss(s, gold, lambda);
        auto p = softmax(s);
        double sum = 0.0;
        for (auto& [y, g] : out.grad) {
            double target = lambda / 6.0 + (y == gold ? 1.0 - lambda : 0.0);
            CHECK(g == doctest::Approx(p[y] - target).epsilon(1e-12));
            sum += g;
        }
        CHECK(std::abs(sum) < 1e-12);  // softmax gradient identity
        check_score_grad([&](const std::vector<double>& v) { return sce_loss(v, gold, lambda); },
                         s);
    }
}

TEST_CASE("sce-bc scales vanilla sce by the frequency ratio") {
    Rng rng(6);
    auto s = random_scores(5, rng);
    LossSpec spec;
    spec.family = LossFamily::SceBc;
    CHECK(sce_bc_loss(s, 1, 1.0, spec).value == doctest::Approx(sce_loss(s, 1).value));
    CHECK(sce_bc_loss(s, 1, 0.5, spec).value ==
          doctest::Approx(0.5 * sce_loss(s, 1).value).epsilon(1e-12));
    // clamped at the configured bounds
    CHECK(sce_bc_loss(s, 1, 1e9, spec).value ==
          doctest::Approx(1e3 * sce_loss(s, 1).value).epsilon(1e-12));
}

TEST_CASE("bc weight comes from the frequency table") {
    QuerySet qs;
    qs.n_entities = 4;
    Query q{Direction::TailPredict, 0, 0};
    qs.pairs = {{q, 1}, {q, 1}, {Query{Direction::HeadPredict, 1, 0}, 1},
                {Query{Direction::HeadPredict, 2, 0}, 3}};
    FreqTable ft = frequency_table(qs);
    CHECK(bc_weight(ft, q, 1) == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS_AS(bc_weight(ft, Query{Direction::TailPredict, 3, 0}, 1), config_error);
}

TEST_CASE("sampled ns loss at frozen points") {
    std::vector<double> negs = {0.0};
    std::vector<EntityId> ids = {2};
    LossOut out = ns_loss_sampled(0.0, 1, negs, ids);
    CHECK(out.value == doctest::Approx(1.3862943611198906).epsilon(1e-12));

    std::vector<double> deep = {-40.0};
    CHECK(ns_loss_sampled(40.0, 1, deep, ids).value == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("sampled ns gradient passes finite differences") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        auto s = random_scores(5, rng);
        check_score_grad(
            [&](const std::vector<double>& v) {
                std::vector<double> negs(v.begin() + 1, v.end());
                std::vector<EntityId> ids = {1, 2, 3, 4};
                return ns_loss_sampled(v[0], 0, negs, ids);
            },
            s);
    }
}

TEST_CASE("exact ns loss matches the expectation identity and finite differences") {
    Rng rng(8);
    auto s = random_scores(6, rng);
    std::vector<double> pn(6, 1.0 / 6.0);
    check_score_grad(
        [&](const std::vector<double>& v) { return ns_loss_exact(v, 2, pn, 3); }, s);
    CHECK_THROWS_AS(ns_loss_exact(s, 2, pn, 0), config_error);
}

TEST_CASE("sans weights at frozen points") {
    std::vector<double> two = {1.0, 0.0};
    auto w0 = sans_weights(two, 0.0);
    CHECK(w0[0] == doctest::Approx(0.5));
    auto w1 = sans_weights(two, 1.0);
    CHECK(w1[0] == doctest::Approx(0.7310585786300049).epsilon(1e-12));
    CHECK(w1[1] == doctest::Approx(0.2689414213699951).epsilon(1e-12));
    auto winf = sans_weights(two, 1000.0);
    CHECK(winf[0] == doctest::Approx(1.0));
    CHECK_THROWS_AS(sans_weights(two, -0.1), domain_error);
}

TEST_CASE("sans at alpha zero reproduces plain ns bit for bit") {
    Rng rng(9);
    auto negs = random_scores(8, rng);
    std::vector<EntityId> ids(8);
    for (int i = 0; i < 8; ++i) ids[i] = i + 1;
    double pos = 0.7;

    LossOut plain = ns_loss_sampled(pos, 0, negs, ids);
    std::vector<double> w = sans_weights(negs, 0.0);
    for (double& wi : w) wi *= 8.0;  // nu
    LossOut sans = ns_loss_sampled(pos, 0, negs, ids, w);
    CHECK(plain.value == sans.value);
    REQUIRE(plain.grad.size() == sans.grad.size());
    for (size_t i = 0; i < plain.grad.size(); ++i) {
        CHECK(plain.grad[i].first == sans.grad[i].first);
        CHECK(plain.grad[i].second == sans.grad[i].second);
    }
}

TEST_CASE("sans exact loss passes finite differences with the weight path frozen") {
    // no gradient flows through the adversarial weights, so the finite
    // difference is taken with the weights pinned at the base scores
    Rng rng(10);
    auto s = random_scores(5, rng);
    const double alpha = 0.8;
    const int nu = 4;
    std::vector<double> frozen = sans_weights(s, alpha);
    check_score_grad(
        [&](const std::vector<double>& v) {
            LossOut out;
            out.value = softplus(-v[1]);
            out.grad.emplace_back(1, -sigmoid(-v[1]));
            for (size_t y = 0; y < v.size(); ++y) {
                out.value += nu * frozen[y] * softplus(v[y]);
                out.grad.emplace_back(static_cast<EntityId>(y), nu * frozen[y] * sigmoid(v[y]));
            }
            return out;
        },
        s);
    // and the analytic gradients of the real loss agree with the frozen view
    LossOut real = sans_loss_exact(s, 1, alpha, nu);
    std::vector<double> dense(s.size(), 0.0), dense_frozen(s.size(), 0.0);
    for (auto& [y, g] : real.grad) dense[y] += g;
    dense_frozen[1] -= sigmoid(-s[1]);
    for (size_t y = 0; y < s.size(); ++y) dense_frozen[y] += nu * frozen[y] * sigmoid(s[y]);
    for (size_t y = 0; y < s.size(); ++y)
        CHECK(dense[y] == doctest::Approx(dense_frozen[y]).epsilon(1e-12));
}

TEST_CASE("noise sampling frequencies") {
    Rng rng(11);
    const int n = 1000000;
    std::vector<int> counts(4, 0);
    for (int i = 0; i < n; ++i) {
        auto draw = sample_noise(NoiseSource::Uniform, 1, 4, rng);
        ++counts[draw[0]];
    }
    for (int c : counts) CHECK(std::abs(c / static_cast<double>(n) - 0.25) < 0.002);

    SamplingTable table({0.0, 2.0 / 3.0, 1.0 / 3.0});
    std::vector<int> uc(3, 0);
    for (int i = 0; i < n; ++i) {
        auto draw = sample_noise(NoiseSource::Unigram, 1, 3, rng, &table);
        ++uc[draw[0]];
    }
    CHECK(uc[0] == 0);
    CHECK(std::abs(uc[1] / static_cast<double>(n) - 2.0 / 3.0) < 0.002);
    CHECK(std::abs(uc[2] / static_cast<double>(n) - 1.0 / 3.0) < 0.002);

    CHECK_THROWS_AS(sample_noise(NoiseSource::Uniform, 0, 4, rng), config_error);
}

TEST_CASE("sampled ns mean converges to the exact expectation") {
    Rng rng(12);
    const int ny = 10, nu = 2, trials = 100000;
    auto scores = random_scores(ny, rng, 2.0);
    std::vector<double> pn(ny, 1.0 / ny);
    int gold = 3;
    double exact = ns_loss_exact(scores, gold, pn, nu).value;

    double sum = 0.0, sumsq = 0.0;
    for (int t = 0; t < trials; ++t) {
        auto negs = sample_noise(NoiseSource::Uniform, nu, ny, rng);
        std::vector<double> ns(nu);
        for (int j = 0; j < nu; ++j) ns[j] = scores[negs[j]];
        double v = ns_loss_sampled(scores[gold], gold, ns, negs).value;
        sum += v;
        sumsq += v * v;
    }
    double mean = sum / trials;
    double var = (sumsq / trials - mean * mean) / trials;
    double se = std::sqrt(var);
    CHECK(std::abs(mean - exact) < 3.0 * se + 1e-12);
}

TEST_CASE("loss spec invariants are enforced") {
    LossSpec s;
    s.family = LossFamily::Sce;
    s.lambda = 0.2;
    CHECK_THROWS_AS(s.validate(), config_error);

    s = LossSpec{};
    s.family = LossFamily::NsUni;
    s.alpha = 2.0;
    CHECK_THROWS_AS(s.validate(), config_error);

    s = LossSpec{};
    s.family = LossFamily::NsUni;
    s.nu = 0;
    CHECK_THROWS_AS(s.validate(), config_error);

    s = LossSpec{};
    s.family = LossFamily::NsFreq;
    s.noise = NoiseSource::ModelSelf;
    CHECK_THROWS_AS(s.validate(), config_error);

    s = LossSpec{};
    s.family = LossFamily::Sans;
    s.alpha = 0.5;
    s.noise = NoiseSource::ModelSelf;
    CHECK_NOTHROW(s.validate());
}
