#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "bregkge/bregman.hpp"
#include "bregkge/losses.hpp"
#include "bregkge/oracle.hpp"
#include "support/synth.hpp"

using namespace bregkge;

TEST_CASE("generator values at frozen points") {
    CHECK(psi(PsiKind::NsBinary, 1.0) == doctest::Approx(-1.3862943611198906).epsilon(1e-12));
    CHECK(psi({0.5, 0.5}) == doctest::Approx(-0.6931471805599453).epsilon(1e-12));
    CHECK(psi({1.0}) == doctest::Approx(0.0));
    CHECK_THROWS_AS(psi(PsiKind::NsBinary, 0.0), domain_error);
    CHECK_THROWS_AS(psi(PsiKind::NsBinary, -1.0), domain_error);
}

TEST_CASE("pointwise divergence frozen values and identity case") {
    CHECK(pointwise_divergence(PsiKind::SceEntropy, 0.5, 0.5) == doctest::Approx(0.0));
    CHECK(pointwise_divergence(PsiKind::NsBinary, 0.5, 0.5) == doctest::Approx(0.0));
    CHECK(pointwise_divergence(PsiKind::SceEntropy, 0.5, 0.25) ==
          doctest::Approx(0.14384103622589045).epsilon(1e-10));
    CHECK(pointwise_divergence(PsiKind::NsBinary, 0.5, 0.25) ==
          doctest::Approx(0.07309125508904074).epsilon(1e-10));
}

TEST_CASE("divergence is nonnegative and zero only near f == g") {
    Rng rng(41);
    for (int i = 0; i < 10000; ++i) {
        double f = 0.01 + 0.98 * rng.u01();
        double g = 0.01 + 0.98 * rng.u01();
        for (PsiKind kind : {PsiKind::SceEntropy, PsiKind::NsBinary}) {
            double d = pointwise_divergence(kind, f, g);
            CHECK(d >= 0.0);
            if (std::abs(f - g) >= 1e-9)
                CHECK(d > 0.0);
            else
                CHECK(d < 1e-9);
        }
    }
}

TEST_CASE("generator gradients match central finite differences") {
    Rng rng(42);
    for (int i = 0; i < 1000; ++i) {
        double z = 0.02 + 0.96 * rng.u01();
        for (PsiKind kind : {PsiKind::SceEntropy, PsiKind::NsBinary}) {
            double fd = synth::central_diff([&](double x) { return psi(kind, x); }, z);
            CHECK(synth::rel_err(psi_grad(kind, z), fd) < 1e-6);
        }
    }
}

TEST_CASE("expected divergence collapses to -sum psi(f) w when f == g") {
    Rng rng(43);
    Matrix f(5, 4), w(5, 4);
    for (int x = 0; x < 5; ++x) {
        auto row = random_simplex(4, rng);
        std::copy(row.begin(), row.end(), f.row(x));
        for (int y = 0; y < 4; ++y) w.at(x, y) = 0.05;
    }
    double expect = 0.0;
    for (int x = 0; x < 5; ++x) {
        std::vector<double> row(f.row(x), f.row(x) + 4);
        double wx = 0.0;
        for (int y = 0; y < 4; ++y) wx += w.at(x, y);
        expect -= psi(row) * wx;
    }
    CHECK(expected_divergence_tilde(PsiKind::SceEntropy, f, f, w) ==
          doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("reduced form differs from weighted pointwise sum by the psi(f) constant") {
    Rng rng(44);
    for (PsiKind kind : {PsiKind::SceEntropy, PsiKind::NsBinary}) {
        Matrix f(5, 4), g(5, 4), w(5, 4);
        double wtotal = 0.0;
        for (int x = 0; x < 5; ++x) {
            auto fr = random_simplex(4, rng);
            auto gr = random_simplex(4, rng);
            for (int y = 0; y < 4; ++y) {
                f.at(x, y) = fr[y];
                g.at(x, y) = gr[y];
                w.at(x, y) = 0.2 + rng.u01();
                wtotal += w.at(x, y);
            }
        }
        for (auto& v : w.v) v /= wtotal;

        double btilde = expected_divergence_tilde(kind, f, g, w);
        double full = 0.0, constant = 0.0;
        if (kind == PsiKind::NsBinary) {
            for (size_t i = 0; i < f.v.size(); ++i) {
                full += pointwise_divergence(kind, f.v[i], g.v[i]) * w.v[i];
                constant += psi(kind, f.v[i]) * w.v[i];
            }
        } else {
            for (int x = 0; x < 5; ++x) {
                std::vector<double> fr(f.row(x), f.row(x) + 4), gr(g.row(x), g.row(x) + 4);
                auto gp = psi_grad(gr);
                double d = psi(fr) - psi(gr);
                for (int y = 0; y < 4; ++y) d -= gp[y] * (fr[y] - gr[y]);
                double wx = 0.0;
                for (int y = 0; y < 4; ++y) wx += w.at(x, y);
                full += d * wx;
                constant += psi(fr) * wx;
            }
        }
        CHECK(btilde + constant == doctest::Approx(full).epsilon(1e-10));
    }
}

TEST_CASE("reduced entropy divergence against p_theta is the mean log loss") {
    // weights form an empirical p_d(x,y); f is its conditional; then
    // B~ = -(1/|D|) sum log p_theta(y|x) over the enumerated data
    Rng rng(45);
    const int nx = 4, ny = 5;
    Matrix counts(nx, ny);
    double total = 0.0;
    for (auto& c : counts.v) {
        c = 1.0 + rng.index(5);
        total += c;
    }
    Matrix w(nx, ny), f(nx, ny), g(nx, ny);
    for (int x = 0; x < nx; ++x) {
        double rowsum = 0.0;
        for (int y = 0; y < ny; ++y) rowsum += counts.at(x, y);
        auto gr = random_simplex(ny, rng);
        for (int y = 0; y < ny; ++y) {
            w.at(x, y) = counts.at(x, y) / total;
            f.at(x, y) = counts.at(x, y) / rowsum;
            g.at(x, y) = gr[y];
        }
    }
    double mean_log_loss = 0.0;
    for (int x = 0; x < nx; ++x)
        for (int y = 0; y < ny; ++y)
            mean_log_loss -= (counts.at(x, y) / total) * std::log(g.at(x, y));
    CHECK(expected_divergence_tilde(PsiKind::SceEntropy, f, g, w) ==
          doctest::Approx(mean_log_loss).epsilon(1e-10));
}

TEST_CASE("expected divergence rejects shape mismatches") {
    Matrix a(2, 2), b(2, 3);
    CHECK_THROWS_AS(expected_divergence_tilde(PsiKind::NsBinary, a, b, a), domain_error);
}

TEST_CASE("divergence curve reproduces the reference figure") {
    DivergenceCurve c = divergence_curve(0.5, 999);
    REQUIRE(c.grid.size() == 999);
    // grid point 0.25 sits at index 249 (p_i = i/1000)
    CHECK(c.grid[249] == doctest::Approx(0.25));
    CHECK(c.d_sce[249] == doctest::Approx(0.14384103622589045).epsilon(1e-9));
    CHECK(c.d_ns[249] == doctest::Approx(0.07309125508904074).epsilon(1e-9));
    int equal_points = 0;
    for (size_t i = 0; i < c.grid.size(); ++i) {
        CHECK(c.d_sce[i] >= c.d_ns[i]);
        CHECK(c.d_sce[i] >= 0.0);
        if (c.d_sce[i] - c.d_ns[i] < 1e-12) ++equal_points;
    }
    CHECK(equal_points == 1);  // only at p = reference
    CHECK(c.d_sce[499] == doctest::Approx(0.0));
}

TEST_CASE("divergence curve domain errors") {
    CHECK_THROWS_AS(divergence_curve(0.0, 10), domain_error);
    CHECK_THROWS_AS(divergence_curve(1.0, 10), domain_error);
    CHECK_THROWS_AS(divergence_curve(0.5, 1), domain_error);
}

TEST_CASE("curve csv has the documented header and row count") {
    DivergenceCurve c = divergence_curve(0.5, 9);
    std::ostringstream os;
    write_curve_csv(c, os);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "p,d_sce,d_ns");
    int rows = 0;
    while (std::getline(is, line)) ++rows;
    CHECK(rows == 9);
}

TEST_CASE("log-sum bound at frozen points") {
    std::vector<double> p = {0.2, 0.3, 0.5};
    auto [multi, binary] = logsum_bound_check(p, p, 1);
    CHECK(multi == doctest::Approx(0.0));
    CHECK(binary == doctest::Approx(0.0));

    // |Y| = 2 collapses to the identity
    std::vector<double> pd = {0.7, 0.3}, pt = {0.4, 0.6};
    auto r2 = logsum_bound_check(pd, pt, 0);
    CHECK(r2.multi == doctest::Approx(r2.binary).epsilon(1e-12));
}

TEST_CASE("log-sum bound holds on random strictly positive pairs") {
    Rng rng(46);
    for (int trial = 0; trial < 1000; ++trial) {
        int ny = 3 + rng.index(8);
        auto pd = random_simplex(ny, rng);
        auto pt = random_simplex(ny, rng);
        int j = rng.index(ny);
        auto [multi, binary] = logsum_bound_check(pd, pt, j);
        CHECK(multi >= binary - 1e-12);
    }
}

TEST_CASE("log-sum bound rejects zeros") {
    CHECK_THROWS_AS(logsum_bound_check({0.0, 1.0}, {0.5, 0.5}, 0), domain_error);
}

TEST_CASE("ns integrand is non-convex where the reference point says so") {
    // h(g) = log(1+g) + f log(1+1/g) has h''(1) = -0.175 at f = 0.1
    double f = 0.1;
    auto h = [&](double g) { return std::log1p(g) + f * std::log1p(1.0 / g); };
    double hh = 1e-4;
    double second = (h(1.0 + hh) - 2.0 * h(1.0) + h(1.0 - hh)) / (hh * hh);
    CHECK(second == doctest::Approx(-0.175).epsilon(1e-4));
    CHECK(second < 0.0);
}

TEST_CASE("per-instance sce loss is convex in the logits") {
    Rng rng(47);
    const int ny = 6;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> s(ny), d(ny);
        for (int i = 0; i < ny; ++i) {
            s[i] = 4.0 * (rng.u01() - 0.5);
            d[i] = 2.0 * (rng.u01() - 0.5);
        }
        int gold = rng.index(ny);
        auto loss_at = [&](double t) {
            std::vector<double> v(ny);
            for (int i = 0; i < ny; ++i) v[i] = s[i] + t * d[i];
            return sce_loss(v, gold).value;
        };
        double h = 1e-3;
        double second = (loss_at(h) - 2.0 * loss_at(0.0) + loss_at(-h)) / (h * h);
        CHECK(second >= -1e-6);
    }
}
