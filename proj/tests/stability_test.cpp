#include "doctest.h"
#include "fixtures.hpp"

#include "json.hpp"
#include "solstab/error.hpp"
#include "solstab/spectral.hpp"
#include "solstab/stability.hpp"

#include <cmath>

using namespace solstab;
using namespace solstab::stability;
using geometry::DiagonalTensorField;

TEST_CASE("rotationally symmetric curvature chain") {
    SUBCASE("flat curvature gives zero") {
        const std::vector<double> h{0.3, -1.0, 2.0, 0.5};
        geometry::CurvatureData zero{4, {0.0}, {0.0}, {0.0}, {0.0}, {0.0}};
        CHECK(rotsym_margin(zero, 0, h) == 0.0);
        // the discrete flat profile carries stencil roundoff only
        const auto p = solitons::closed_form(solitons::Kind::FlatSteady, 4, geometry::WarpedGrid::uniform(4, 0.0, 5.0, 50));
        for (std::size_t i = 0; i < p.size(); i += 7) CHECK(std::abs(rotsym_margin(p.curvature, i, h)) < 1e-9);
    }
    SUBCASE("hand evaluation at n = 3, where the b correction drops out") {
        const auto& p = fx::bryant_expander(400, 10.0);
        const auto& c = p.curvature;
        const std::size_t i = 100;
        const double hr = 0.4, h1 = -0.7, h2 = 1.1;
        const double sum = h1 + h2, sq = h1 * h1 + h2 * h2, norm = hr * hr + sq;
        const double rm = 2 * c.a[i] * hr * sum + c.b[i] * (sum * sum - sq);
        const double want = c.R[i] * norm - 2 * rm - 2 * std::sqrt(2.0) * (std::sqrt(2.0) - 1) * c.a[i] * norm;
        CHECK(rotsym_margin(c, i, std::vector<double>{hr, h1, h2}) == doctest::Approx(want).epsilon(1e-13));
        CHECK_THROWS_AS(rotsym_margin(c, i, std::vector<double>{1.0, 2.0}), Error);
    }
    SUBCASE("positively curved bryant expander") {
        const auto& p = fx::bryant_expander(2000, 15.0);
        const auto r = rotsym_pointwise_inequality(p, 11, 200, p.size());
        CHECK(r.min_margin >= -1e-12);
        CHECK(r.samples == 200 * p.size());
        CHECK(rotsym_pointwise_inequality(p, 11, 50, 300).min_margin ==
              rotsym_pointwise_inequality(p, 11, 50, 300).min_margin);
    }
}

TEST_CASE("Bochner criterion") {
    const auto g = bochner_criterion(fx::gaussian(3, 12.0, 1000), 10.0);
    CHECK(g.status == "pass");
    CHECK(g.margin == doctest::Approx(1.5).epsilon(1e-9));
    const auto b = bochner_criterion(fx::bryant_expander(2000, 15.0), 12.0);
    CHECK(b.status == "pass");
    CHECK(b.margin > 0.0);
    // strongly curved members of the family leave the criterion without conclusion
    const auto s = bochner_criterion(fx::shot(1, 3, 4.0, 15.0, 2000), 12.0);
    CHECK(s.margin <= 0.0);
    CHECK(s.status == "inconclusive");
}

TEST_CASE("Anderson-Chow estimate") {
    const auto& p = fx::bryant_expander(1000, 15.0);
    const double t = p.f[600];
    SUBCASE("a constant tensor peaks on the level set") {
        const DiagonalTensorField h{std::vector<double>(p.size(), 1.0), std::vector<double>(p.size(), 1.0)};
        const auto ac = anderson_chow_check(p, h, 0.8, t);
        CHECK(ac.on_boundary);
        CHECK(ac.status == "pass");
    }
    SUBCASE("an interior bump is caught") {
        const auto u = spectral::bump(p.grid(), 1.0, 3.0, 0.5);
        const auto ac = anderson_chow_check(p, {u, u}, 0.8, t);
        CHECK_FALSE(ac.on_boundary);
        CHECK(ac.status == "fail");
        CHECK(anderson_chow_check(p, {u, u}, 1.6, t).status == "inconclusive");
    }
    SUBCASE("preconditions") {
        const auto& g4 = fx::gaussian(4, 8.0, 200);
        CHECK_THROWS_AS(anderson_chow_check(g4, DiagonalTensorField::zeros(200), 0.5, 1.0), Error);
        const auto& s = fx::bryant_steady(500, 20.0);
        CHECK_THROWS_AS(anderson_chow_check(s, DiagonalTensorField::zeros(500), 0.5, 1.0), Error);
        CHECK_THROWS_AS(anderson_chow_check(p, DiagonalTensorField::zeros(10), 0.5, t), Error);
    }
}

TEST_CASE("tail decay classification") {
    SUBCASE("the cigar decays like e^{-f}") {
        const auto& c = fx::cigar(15.0, 4000, true);
        const auto t0 = steady_curvature_gap(c, 0.0);
        CHECK(t0.exponent == doctest::Approx(1.0).epsilon(0.02));
        CHECK(steady_curvature_gap(c, 0.5).status == "inconclusive");
    }
    SUBCASE("the bryant steady soliton has a gap for every alpha") {
        const auto& s = fx::bryant_steady(4000, 60.0);
        for (double a : {0.3, 0.6, 0.9}) {
            CAPTURE(a);
            CHECK(steady_curvature_gap(s, a).status == "pass");
        }
    }
    SUBCASE("flat space is never called unstable") {
        const auto p = solitons::closed_form(solitons::Kind::FlatSteady, 3, geometry::WarpedGrid::uniform(3, 0.0, 20.0, 400));
        CHECK(steady_curvature_gap(p, 0.5).status == "inconclusive");
    }
    SUBCASE("expanders") {
        CHECK(expander_ricci_decay(fx::gaussian(3, 12.0, 1000), 0.0).status != "pass");
        const auto b = expander_ricci_decay(fx::bryant_expander(2000, 15.0), 0.0);
        CHECK(b.tail_min > 0.0);
    }
    SUBCASE("preconditions") {
        CHECK_THROWS_AS(steady_curvature_gap(fx::gaussian(3, 12.0, 1000), 0.5), Error);
        CHECK_THROWS_AS(expander_ricci_decay(fx::cigar(15.0, 1000, true), 0.5), Error);
        CHECK_THROWS_AS(steady_curvature_gap(fx::cigar(15.0, 1000, true), 1.5), Error);
    }
}

TEST_CASE("criteria agree with the spectral solver") {
    // a positive Bochner margin forces a positive tensor bottom on the same window
    for (double s : {0.6, 0.7, 1.0}) {
        const auto& p = fx::shot(1, 3, s, 15.0, 1000);
        const auto b = bochner_criterion(p, 10.0);
        const auto l = spectral::bottom_lichnerowicz({p, spectral::Sector::DiagonalTensor, spectral::window_upto(p.grid(), 10.0)});
        CAPTURE(s);
        if (b.status == "pass") CHECK(l.lambda_min >= b.margin - 1e-6);
    }
}

TEST_CASE("evaluate_all") {
    const auto& p = fx::bryant_expander(1000, 15.0);
    const auto reps = evaluate_all(p, 10.0, 5);
    for (const auto& r : reps) {
        CAPTURE(r.criterion);
        CHECK(r.status != "fail");
    }
    const auto j = nlohmann::json::parse(to_json(reps));
    REQUIRE(j.is_array());
    CHECK(j.size() == reps.size());
    CHECK(j[0]["criterion"] == "rotsym_pointwise_inequality");
    CHECK(j[0]["seed"] == 5);
    const auto steady = evaluate_all(fx::bryant_steady(2000, 40.0), 30.0, 5);
    for (const auto& r : steady) CHECK(r.status != "fail");
}
