#include "doctest.h"
#include "fixtures.hpp"

#include "solstab/error.hpp"
#include "solstab/solitons.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

using namespace solstab;
using namespace solstab::solitons;

TEST_CASE("closed forms") {
    SUBCASE("flat steady is exact up to stencil roundoff") {
        for (int n : {2, 3, 4}) {
            const auto p = closed_form(Kind::FlatSteady, n, geometry::WarpedGrid::uniform(n, 0.0, 10.0, 200));
            for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p.curvature.R[i]) < 1e-10);
            const auto id = identity_residuals(p);
            CHECK(id.trace < 1e-10);
            CHECK(id.hamilton < 1e-10);
            CHECK(id.bianchi < 1e-9);
            CHECK(p.lambda_g == 0.0);
        }
    }
    SUBCASE("cigar") {
        const auto& p = fx::cigar(15.0, 4000, false);
        CHECK(p.lambda_g == 4.0);
        CHECK(p.curvature.R[0] == doctest::Approx(4.0).epsilon(1e-8));
        CHECK(p.fp[0] == 0.0);
        const auto id = identity_residuals(p);
        CHECK(id.constant == doctest::Approx(4.0).epsilon(1e-7));
        CHECK(id.trace < 1e-6);
        CHECK(id.hamilton < 1e-6);
        CHECK(id.bianchi < 1e-6);
    }
    SUBCASE("gaussian expander") {
        const auto& p = fx::gaussian(3, 15.0, 4000);
        CHECK(p.mu_g == doctest::Approx(-1.5 * std::log(4 * std::numbers::pi)).epsilon(1e-12));
        const auto lap = laplacian_f(p);
        for (std::size_t i = 1; i + 1 < p.size(); i += 97) CHECK(lap[i] == doctest::Approx(1.5).epsilon(1e-8));
        const auto id = identity_residuals(p);
        CHECK(id.trace < 1e-6);
        CHECK(id.hamilton < 1e-6);
        CHECK(id.bianchi < 1e-6);
        CHECK(id.constant == doctest::Approx(p.mu_g).epsilon(1e-9));
    }
    SUBCASE("dimension checks") {
        CHECK_THROWS_AS(closed_form(Kind::Cigar, 3, geometry::WarpedGrid::uniform(3, 0.0, 5.0, 100)), Error);
        CHECK_THROWS_AS(parse_kind("torpedo"), Error);
    }
}

TEST_CASE("identity residuals converge at second order or better on coarse grids") {
    // at N = 4000 the cigar residual is at the roundoff floor, so ratios are taken lower
    auto res = [](std::size_t N) {
        const auto p = closed_form(Kind::Cigar, 2, geometry::WarpedGrid::uniform(2, 0.0, 15.0, N));
        const auto id = identity_residuals(p);
        return std::max({id.trace, id.hamilton, id.bianchi});
    };
    const double e1 = res(250), e2 = res(500);
    CHECK(fx::order(e1, e2) >= 2.0);
}

TEST_CASE("shooting") {
    SUBCASE("s = 1/2 recovers the gaussian") {
        const auto& p = fx::shot(1, 3, 0.5, 12.0, 1000);
        for (std::size_t i = 0; i < p.size(); ++i) {
            CHECK(std::abs(p.curvature.a[i]) < 1e-7);
            CHECK(std::abs(p.curvature.b[i]) < 1e-7);
        }
        CHECK(p.cone_angle == doctest::Approx(1.0).epsilon(1e-8));
        CHECK(p.mu_g == doctest::Approx(-1.5 * std::log(4 * std::numbers::pi)).epsilon(1e-6));
    }
    SUBCASE("bryant expander s = 0.7") {
        const auto& p = fx::shot(1, 3, 0.7, 40.0, 2000);
        CHECK(p.cone_angle > 0.0);
        CHECK(p.cone_angle < 1.0);
        for (std::size_t i = 0; i < p.size(); ++i) {
            CHECK(p.curvature.a[i] > 0.0);
            CHECK(p.curvature.b[i] > 0.0);
        }
        const auto id = identity_residuals(p);
        CHECK(id.trace < 1e-8);
        CHECK(id.hamilton < 1e-8);
        CHECK(id.bianchi < 1e-8);
    }
    SUBCASE("bryant steady s = 0.5") {
        const auto p = shoot_soliton(0, 3, 0.5, 40.0, 1e-9, 2000, false);
        const auto id = identity_residuals(p);
        CHECK(id.hamilton < 1e-6);
        CHECK(id.constant == doctest::Approx(p.lambda_g).epsilon(1e-6));
        for (std::size_t i = 1; i < p.size(); ++i) CHECK(p.curvature.R[i] <= p.curvature.R[i - 1] + 1e-10);
        CHECK(p.curvature.R.back() < 0.05 * p.curvature.R.front());
    }
    SUBCASE("rejected input") {
        CHECK_THROWS_AS(shoot_soliton(1, 2, 0.7, 10.0), Error);
        CHECK_THROWS_AS(shoot_soliton(1, 3, -1.0, 10.0), Error);
    }
    SUBCASE("negative curvature at the origin is flagged") {
        const auto p = shoot_soliton(1, 3, 0.45, 10.0, 1e-9, 500);
        CHECK_FALSE(p.flags.empty());
    }
}

TEST_CASE("residuals stay below max(10 ode_tol, C dr^2) on the shooting family") {
    for (double s : {0.6, 0.8, 1.0, 1.3}) {
        const auto p = shoot_soliton(1, 3, s, 15.0, 1e-9, 1500);
        const auto id = identity_residuals(p);
        const double dr = p.grid().max_spacing();
        const double bound = std::max(1e-8, 1e-3 * dr * dr);
        CAPTURE(s);
        CHECK(id.trace < bound);
        CHECK(id.hamilton < bound);
        CHECK(id.bianchi < bound);
    }
}

TEST_CASE("cone angle decreases along the shooting family") {
    double prev = 2.0;
    for (double s = 0.5; s <= 1.5 + 1e-9; s += 0.1) {
        const auto p = shoot_soliton(1, 3, s, 30.0, 1e-9, 600);
        CAPTURE(s);
        CHECK(p.cone_angle < prev);
        if (s == 0.5) CHECK(p.cone_angle == doctest::Approx(1.0).epsilon(1e-6));
        prev = p.cone_angle;
    }
}

TEST_CASE("steady scaling covariance") {
    const auto raw = shoot_soliton(0, 3, 0.8, 30.0, 1e-9, 1500, false);
    const auto norm = normalize_steady(raw);
    CHECK(norm.lambda_g == 1.0);
    CHECK(norm.r().back() == doctest::Approx(std::sqrt(raw.lambda_g) * raw.r().back()));
    const auto id = identity_residuals(norm);
    CHECK(id.constant == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(id.hamilton < 1e-6);
    CHECK(id.bianchi < 1e-6);
    CHECK_THROWS_AS(normalize_steady(fx::gaussian(3, 5.0, 200)), Error);
}

TEST_CASE("hypothesis H") {
    SUBCASE("gaussian") {
        const auto rep = check_hypothesis_H(fx::gaussian(3, 15.0, 1000));
        CHECK(rep.passed());
        const auto g = potential_growth_check(fx::gaussian(3, 15.0, 1000));
        CHECK(g.power == 2);
        CHECK(g.c1 == doctest::Approx(0.25).epsilon(1e-10));
        CHECK(g.pass);
    }
    SUBCASE("normalized cigar") {
        const auto& p = fx::cigar(15.0, 2000, true);
        const auto rep = check_hypothesis_H(p);
        CHECK(rep.passed());
        CHECK_FALSE(rep.notes.empty());
        const auto g = potential_growth_check(p);
        CHECK(g.power == 1);
        CHECK(g.c1 == doctest::Approx(1.0).epsilon(1e-3));
    }
    SUBCASE("flat steady fails the growth check") {
        const auto g = potential_growth_check(closed_form(Kind::FlatSteady, 3, geometry::WarpedGrid::uniform(3, 0.0, 20.0, 200)));
        CHECK_FALSE(g.pass);
        CHECK(g.c1 == doctest::Approx(0.0).scale(1.0));
    }
    SUBCASE("short tail") {
        const auto p = closed_form(Kind::GaussianExpander, 3, geometry::WarpedGrid::uniform(3, 0.0, 2.0, 200));
        for (const auto& c : check_hypothesis_H(p).clauses) CHECK(c.status == "insufficient tail");
    }
}

TEST_CASE("profile csv") {
    const auto p = closed_form(Kind::GaussianExpander, 3, geometry::WarpedGrid::uniform(3, 0.0, 2.0, 20));
    const auto csv = to_csv(p);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    CHECK(line == "r,phi,f,fp,a,b,R");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 20);
}

TEST_CASE("restriction keeps the prefix") {
    const auto& p = fx::bryant_expander(2000, 15.0);
    const auto q = restrict_to(p, 5.0);
    CHECK(q.r().back() <= 5.0 + 1e-12);
    CHECK(q.f[10] == p.f[10]);
    CHECK_THROWS_AS(restrict_to(p, 0.01), Error);
}
