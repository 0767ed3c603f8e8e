#include "doctest.h"
#include "fixtures.hpp"

#include "solstab/error.hpp"
#include "solstab/geometry.hpp"
#include "solstab/spectral.hpp"

#include <cmath>
#include <random>

using namespace solstab;
using namespace solstab::geometry;

namespace {

double one(double) { return 1.0; }
double two(double) { return 2.0; }
double ident(double r) { return r; }

std::vector<double> smooth_bump(const WarpedGrid& g, double a, double b) {
    std::vector<double> y(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = g[i];
        if (x > a && x < b) {
            const double t = (x - a) / (b - a);
            y[i] = std::pow(16.0 * t * t * (1 - t) * (1 - t), 4);
        }
    }
    return y;
}

} // namespace

TEST_CASE("grid validation") {
    CHECK_THROWS_AS(WarpedGrid::uniform(3, 0.0, 1.0, 8), Error);
    CHECK_THROWS_AS(WarpedGrid(1, std::vector<double>(20, 0.0)), Error);
    std::vector<double> r(20);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = static_cast<double>(i);
    r[5] = r[4];
    CHECK_THROWS_AS(WarpedGrid(3, r), Error);
}

TEST_CASE("metric validation") {
    auto g = WarpedGrid::uniform(3, 0.0, 1.0, 32);
    std::vector<double> xi(32, 1.0), phi(g.r());
    CHECK_NOTHROW(WarpedMetric(g, xi, phi));
    xi[3] = -1.0;
    CHECK_THROWS_AS(WarpedMetric(g, xi, phi), Error);
    xi[3] = 1.0;
    for (auto& p : phi) p *= 2.0; // wrong slope at the origin
    CHECK_THROWS_AS(WarpedMetric(g, xi, phi), Error);
}

TEST_CASE("flat cone has zero curvature") {
    const auto m = fx::metric_from(3, 0.0, 5.0, 200, one, ident);
    const auto c = curvature(m);
    for (std::size_t i = 0; i < m.size(); ++i) {
        CHECK(std::abs(c.a[i]) < 1e-10);
        CHECK(std::abs(c.b[i]) < 1e-10);
        CHECK(std::abs(c.R[i]) < 1e-10);
    }
}

TEST_CASE("round sphere") {
    const auto m = fx::metric_from(3, 0.1, 3.0, 400, one, [](double r) { return std::sin(r); });
    const auto c = curvature(m);
    for (std::size_t i = 0; i < m.size(); ++i) {
        CHECK(c.a[i] == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(c.b[i] == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(c.R[i] == doctest::Approx(6.0).epsilon(1e-6));
    }
}

TEST_CASE("cigar scalar curvature") {
    const auto m = fx::metric_from(2, 0.0, 6.0, 600, one, [](double r) { return std::tanh(r); });
    const auto c = curvature(m);
    CHECK(c.R[0] == doctest::Approx(4.0).epsilon(1e-6));
    for (std::size_t i = 0; i < m.size(); i += 37) {
        const double s = 1.0 / std::cosh(m.grid[i]);
        CHECK(c.R[i] == doctest::Approx(4.0 * s * s).epsilon(1e-6));
    }
}

TEST_CASE("curvature assembly identities hold exactly") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(0.05, 0.3);
    for (int n : {2, 3, 5}) {
        const double c1 = U(rng), c2 = U(rng);
        auto g = WarpedGrid::uniform(n, 0.0, 4.0, 300);
        std::vector<double> xi(g.size()), phi(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double r = g[i];
            xi[i] = 1.0 + c1 * r * r / (1 + r * r);
            phi[i] = std::sin(c2 * r) / c2 * (1 + 0.1 * r * r) * xi[0];
        }
        const auto c = curvature(WarpedMetric(g, xi, phi));
        for (std::size_t i = 0; i < g.size(); ++i) {
            CHECK(c.R[i] == 2.0 * (n - 1) * c.a[i] + (n - 1.0) * (n - 2) * c.b[i]);
            CHECK(c.ric_r[i] == (n - 1) * c.a[i]);
            CHECK(c.ric_s[i] == c.a[i] + (n - 2) * c.b[i]);
        }
        // Rm * g = Ric
        const auto rg = rm_action(c, DiagonalTensorField(std::vector<double>(g.size(), 1.0), std::vector<double>(g.size(), 1.0)));
        for (std::size_t i = 0; i < g.size(); ++i) {
            CHECK(rg.u[i] == doctest::Approx(c.ric_r[i]).epsilon(1e-14));
            CHECK(rg.v[i] == doctest::Approx(c.ric_s[i]).epsilon(1e-14));
        }
    }
}

TEST_CASE("christoffel symbols") {
    SUBCASE("euclidean polar") {
        const auto m = fx::metric_from(3, 0.5, 3.0, 100, one, ident);
        const auto ch = christoffels(m);
        for (std::size_t i = 0; i < m.size(); ++i) {
            CHECK(std::abs(ch.r_rr[i]) < 1e-12);
            CHECK(ch.t_rt[i] == doctest::Approx(1.0 / m.grid[i]).epsilon(1e-10));
        }
    }
    SUBCASE("constant radial factor") {
        const auto m = fx::metric_from(3, 0.5, 3.0, 100, two, ident);
        const auto ch = christoffels(m);
        for (std::size_t i = 0; i < m.size(); ++i) {
            CHECK(std::abs(ch.r_rr[i]) < 1e-12);
            CHECK(ch.r_sphere[i] == doctest::Approx(-m.grid[i] / 4.0).epsilon(1e-10));
        }
    }
    SUBCASE("cigar at r = 1") {
        const auto m = fx::metric_from(2, 0.0, 2.0, 201, one, [](double r) { return std::tanh(r); });
        const auto ch = christoffels(m);
        const double s = 1.0 / std::cosh(1.0);
        CHECK(ch.t_rt[100] == doctest::Approx(s * s / std::tanh(1.0)).epsilon(1e-9));
    }
}

TEST_CASE("rm action") {
    CurvatureData c{3, {1.0}, {0.0}, {4.0}, {2.0}, {1.0}};
    const auto y = rm_action(c, DiagonalTensorField({2.0}, {1.0}));
    CHECK(y.u[0] == 2.0);
    CHECK(y.v[0] == 2.0);
    CurvatureData flat{4, {0.0}, {0.0}, {0.0}, {0.0}, {0.0}};
    const auto z = rm_action(flat, DiagonalTensorField({3.0}, {-7.0}));
    CHECK(z.u[0] == 0.0);
    CHECK(z.v[0] == 0.0);
    CHECK_THROWS_AS(rm_action(c, DiagonalTensorField({1.0, 2.0}, {1.0, 2.0})), Error);
}

TEST_CASE("rm pairing is symmetric") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> G;
    for (int n : {3, 4, 6}) {
        for (int k = 0; k < 50; ++k) {
            CurvatureData c{n, {G(rng)}, {G(rng)}, {0.0}, {0.0}, {0.0}};
            const DiagonalTensorField h1({G(rng)}, {G(rng)}), h2({G(rng)}, {G(rng)});
            const auto a = rm_action(c, h1), b = rm_action(c, h2);
            const double lhs = a.u[0] * h2.u[0] + (n - 1) * a.v[0] * h2.v[0];
            const double rhs = h1.u[0] * b.u[0] + (n - 1) * h1.v[0] * b.v[0];
            CHECK(lhs == doctest::Approx(rhs).epsilon(1e-13));
        }
    }
}

TEST_CASE("div_f of the metric is grad f") {
    const auto& p = fx::gaussian(3, 6.0, 300);
    const std::size_t N = p.size();
    const auto d = div_f(DiagonalTensorField(std::vector<double>(N, 1.0), std::vector<double>(N, 1.0)), p.metric, p.f);
    for (std::size_t i = 1; i < N; ++i) CHECK(d[i] == doctest::Approx(p.fp[i]).epsilon(1e-9));
}

TEST_CASE("div_f hand value") {
    const auto m = fx::metric_from(3, 0.0, 2.0, 201, one, ident);
    std::vector<double> u(201), v(201, 0.0), f(201, 0.0);
    for (std::size_t i = 0; i < 201; ++i) u[i] = m.grid[i] * m.grid[i];
    const auto d = div_f(DiagonalTensorField(u, v), m, f);
    CHECK(d[100] == doctest::Approx(4.0).epsilon(1e-10));
}

TEST_CASE("div_f is minus the adjoint of the covariant derivative") {
    // <div_f h, w> = -<h, grad w> with (grad w)_rr = w_s, (grad w)_ii = kappa w
    auto run = [](std::size_t N) {
        const auto& p = fx::bryant_expander(N, 8.0);
        const auto& g = p.grid();
        const int n = p.n();
        const auto u = smooth_bump(g, 1.0, 5.0);
        auto v = smooth_bump(g, 1.5, 6.0);
        for (auto& x : v) x *= -0.7;
        auto w = smooth_bump(g, 0.5, 4.5);
        for (std::size_t i = 0; i < N; ++i) w[i] *= std::sin(g[i]);
        const auto d = div_f(DiagonalTensorField(u, v), p.metric, p.f);
        const auto ws = g.d1(w, Parity::Odd);
        const auto kap = kappa(p.metric);
        const auto mu = WeightedMeasure::make(p.metric, p.f);
        std::vector<double> lhs(N), rhs(N);
        for (std::size_t i = 1; i < N; ++i) {
            lhs[i] = d[i] * w[i];
            rhs[i] = u[i] * ws[i] + (n - 1) * v[i] * kap[i] * w[i];
        }
        const double a = mu.integrate(lhs), b = mu.integrate(rhs);
        return std::abs(a + b) / (std::abs(a) + std::abs(b));
    };
    const double e1 = run(400), e2 = run(800);
    CHECK(e1 < 1e-4);
    CHECK(e2 < e1);
}

TEST_CASE("weighted measure integrates the gaussian density") {
    // int e^{-f} dmu_f = int 1 dmu = vol; here check int e^{-f} e^{f} phi^{n-1} dr against r^3/3
    const auto& p = fx::gaussian(3, 4.0, 801);
    const auto mu = WeightedMeasure::make(p.metric, p.f);
    std::vector<double> e(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) e[i] = std::exp(-p.f[i]);
    CHECK(mu.integrate(e) == doctest::Approx(64.0 / 3.0).epsilon(1e-4));
    for (std::size_t i = 1; i < p.size(); ++i) CHECK(mu.w[i] > 0.0);
}

TEST_CASE("quadratic form") {
    const auto& p = fx::bryant_expander(800, 8.0);
    const std::size_t N = p.size();
    SUBCASE("zero field") {
        const auto q = quadratic_form(DiagonalTensorField::zeros(N), p.metric, p.f, p.curvature);
        CHECK(q.gradient == 0.0);
        CHECK(q.curvature == 0.0);
    }
    SUBCASE("flat data has no curvature term") {
        const auto& gp = fx::gaussian(3, 6.0, 600);
        const auto u = smooth_bump(gp.grid(), 1.0, 4.0);
        const auto q = quadratic_form(DiagonalTensorField(u, std::vector<double>(gp.size(), 0.0)), gp.metric, gp.f, gp.curvature);
        CHECK(q.gradient > 0.0);
        CHECK(std::abs(q.curvature) < 1e-10 * q.gradient);
    }
    SUBCASE("boundary support is enforced") {
        auto u = std::vector<double>(N, 1.0);
        CHECK_THROWS_AS(quadratic_form(DiagonalTensorField(u, u), p.metric, p.f, p.curvature), Error);
    }
    SUBCASE("matches the assembled rough Laplacian") {
        const auto u = smooth_bump(p.grid(), 0.5, 6.0);
        auto v = smooth_bump(p.grid(), 1.0, 5.0);
        for (auto& x : v) x *= 0.4;
        const DiagonalTensorField h(u, v);
        const auto q = quadratic_form(h, p.metric, p.f, p.curvature);
        const spectral::ReducedOperator op(p.metric, p.f, nullptr, spectral::Sector::DiagonalTensor, {0, N - 1});
        const auto Ah = op.apply(h);
        const auto mu = WeightedMeasure::make(p.metric, p.f);
        std::vector<double> integrand(N);
        for (std::size_t i = 0; i < N; ++i) integrand[i] = Ah.u[i] * h.u[i] + (p.n() - 1) * Ah.v[i] * h.v[i];
        CHECK(mu.integrate(integrand) == doctest::Approx(q.gradient).epsilon(1e-4));
    }
}

TEST_CASE("reduced operator is self-adjoint in L2_f") {
    const auto& p = fx::bryant_expander(600, 8.0);
    const std::size_t N = p.size();
    const spectral::ReducedOperator op(p.metric, p.f, &p.curvature, spectral::Sector::DiagonalTensor, {0, N - 1});
    const DiagonalTensorField h1(smooth_bump(p.grid(), 0.3, 5.0), smooth_bump(p.grid(), 1.0, 6.0));
    const DiagonalTensorField h2(smooth_bump(p.grid(), 2.0, 7.0), smooth_bump(p.grid(), 0.5, 3.0));
    const auto a1 = op.apply(h1), a2 = op.apply(h2);
    // the lumped weights of the assembly are the measure of the symmetric form
    double s12 = 0.0, s21 = 0.0;
    for (std::size_t i = op.first(); i < N - 1; ++i) {
        const double w = std::exp(op.log_weight(i));
        s12 += w * (a1.u[i] * h2.u[i] + (p.n() - 1) * a1.v[i] * h2.v[i]);
        s21 += w * (h1.u[i] * a2.u[i] + (p.n() - 1) * h1.v[i] * a2.v[i]);
    }
    CHECK(s12 == doctest::Approx(s21).epsilon(1e-10));
}

TEST_CASE("even limit at the origin") {
    auto g = WarpedGrid::uniform(3, 0.0, 1.0, 101);
    std::vector<double> y(101);
    for (std::size_t i = 0; i < 101; ++i) y[i] = 2.0 + 3.0 * g[i] * g[i] - g[i] * g[i] * g[i] * g[i];
    CHECK(even_limit_at_origin(g, y) == doctest::Approx(2.0).epsilon(1e-12));
}
