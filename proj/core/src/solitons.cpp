#include "solstab/solitons.hpp"

#include "solstab/error.hpp"
#include "solstab/fit.hpp"

#include <boost/numeric/odeint.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

namespace solstab::solitons {

using geometry::Parity;
using geometry::WarpedGrid;
using geometry::WarpedMetric;

Kind parse_kind(const std::string& s) {
    if (s == "cigar") return Kind::Cigar;
    if (s == "gaussian_expander") return Kind::GaussianExpander;
    if (s == "flat_steady") return Kind::FlatSteady;
    throw Error(ErrorKind::InvalidConfig, "unknown closed-form kind '" + s + "'");
}

std::string to_string(Kind k) {
    switch (k) {
    case Kind::Cigar: return "cigar";
    case Kind::GaussianExpander: return "gaussian_expander";
    case Kind::FlatSteady: return "flat_steady";
    }
    return "?";
}

SolitonProfile make_profile(int epsilon, WarpedGrid grid, std::vector<double> phi, std::vector<double> f,
                            std::vector<double> fp, std::string id) {
    const std::size_t N = grid.size();
    if (f.size() != N || fp.size() != N) throw Error(ErrorKind::GridMismatch, "potential arrays differ from grid size");
    WarpedMetric m(std::move(grid), std::vector<double>(N, 1.0), std::move(phi));
    auto c = geometry::curvature(m);
    return SolitonProfile{.epsilon = epsilon,
                          .metric = std::move(m),
                          .f = std::move(f),
                          .fp = std::move(fp),
                          .curvature = std::move(c),
                          .id = std::move(id),
                          .flags = {}};
}

namespace {

double log_cosh(double x) {
    const double a = std::abs(x);
    return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
}

double sphere_area(int n) { // area of the unit S^{n-1}
    return 2.0 * std::pow(std::numbers::pi, 0.5 * n) / std::tgamma(0.5 * n);
}

} // namespace

SolitonProfile closed_form(Kind kind, int n, const WarpedGrid& grid) {
    if (grid.n() != n) throw Error(ErrorKind::GridMismatch, "grid dimension differs from requested n");
    const auto& r = grid.r();
    const std::size_t N = r.size();
    std::vector<double> phi(N), f(N), fp(N);
    switch (kind) {
    case Kind::Cigar: {
        if (n != 2) throw Error(ErrorKind::IncompatibleDimension, "the cigar needs n = 2");
        for (std::size_t i = 0; i < N; ++i) {
            phi[i] = std::tanh(r[i]);
            f[i] = 2.0 * log_cosh(r[i]);
            fp[i] = 2.0 * std::tanh(r[i]);
        }
        auto p = make_profile(0, grid, phi, f, fp, "cigar");
        p.lambda_g = 4.0;
        return p;
    }
    case Kind::GaussianExpander: {
        const double c = 0.5 * n * std::log(4.0 * std::numbers::pi);
        for (std::size_t i = 0; i < N; ++i) {
            phi[i] = r[i];
            f[i] = 0.25 * r[i] * r[i] + c;
            fp[i] = 0.5 * r[i];
        }
        auto p = make_profile(1, grid, phi, f, fp, "gaussian_expander");
        p.mu_g = -c;
        p.cone_angle = 1.0;
        return p;
    }
    case Kind::FlatSteady: {
        for (std::size_t i = 0; i < N; ++i) {
            phi[i] = r[i];
            f[i] = 0.0;
            fp[i] = 0.0;
        }
        auto p = make_profile(0, grid, phi, f, fp, "flat_steady");
        p.lambda_g = 0.0;
        return p;
    }
    }
    throw Error(ErrorKind::InvalidConfig, "unknown closed-form kind");
}

SolitonProfile normalize_steady(const SolitonProfile& p) {
    if (p.epsilon != 0) throw Error(ErrorKind::Precondition, "normalization by lambda(g) applies to steady profiles");
    if (!(p.lambda_g > 0.0)) throw Error(ErrorKind::Precondition, "lambda(g) must be positive to normalize");
    const double c = std::sqrt(p.lambda_g);
    const std::size_t N = p.size();
    std::vector<double> r(N), phi(N), fp(N);
    for (std::size_t i = 0; i < N; ++i) {
        r[i] = c * p.r()[i];
        phi[i] = c * p.metric.phi[i];
        fp[i] = p.fp[i] / c;
    }
    auto q = make_profile(0, WarpedGrid(p.n(), std::move(r)), std::move(phi), p.f, std::move(fp), p.id);
    q.lambda_g = 1.0;
    q.flags = p.flags;
    q.constraint_drift = p.constraint_drift / p.lambda_g;
    return q;
}

namespace {

using State = std::array<double, 4>; // phi, phi', f, f'

struct Series {
    double p3, p5, p7, q4, q6;

    Series(double e, int nn, double s) {
        const double n = nn;
        const double d = 2.0 * s - e;
        p3 = -d / (12.0 * (n - 1));
        p5 = d * (-e * n - 2 * e + 26 * n * s - 20 * s) / (480.0 * (n - 1) * (n - 1) * (n + 2));
        q4 = -s * d / (12.0 * (n + 2));
        p7 = -d *
             (e * e * n * n + 6 * e * e * n + 8 * e * e - 268 * e * n * n * s - 96 * e * n * s + 304 * e * s +
              1972 * n * n * s * s - 2712 * n * s * s + 800 * s * s) /
             (40320.0 * (n - 1) * (n - 1) * (n - 1) * (n + 2) * (n + 4));
        q6 = s * d * (-2 * e * n + e + 22 * n * s - 20 * s) / (360.0 * (n - 1) * (n + 2) * (n + 4));
    }

    State at(double r, double s) const {
        const double r2 = r * r;
        State y;
        y[0] = r * (1 + r2 * (p3 + r2 * (p5 + r2 * p7)));
        y[1] = 1 + r2 * (3 * p3 + r2 * (5 * p5 + r2 * 7 * p7));
        y[2] = r2 * (0.5 * s + r2 * (q4 + r2 * q6));
        y[3] = r * (s + r2 * (4 * q4 + r2 * 6 * q6));
        return y;
    }
};

struct System {
    int n;
    double eps;

    double phi2(const State& y) const {
        return (n - 2) * (1.0 - y[1] * y[1]) / y[0] + 0.5 * eps * y[0] - y[1] * y[3];
    }

    void operator()(const State& y, State& dy, double r) const {
        if (!(y[0] > 0.0) || !std::isfinite(y[0]) || !std::isfinite(y[3]))
            throw Error(ErrorKind::ShootingFailure, "solution leaves the admissible region at r=" + std::to_string(r));
        const double pp = phi2(y);
        if (std::abs(pp) > 1e8)
            throw Error(ErrorKind::ShootingFailure, "phi'' blows up at r=" + std::to_string(r));
        dy[0] = y[1];
        dy[1] = pp;
        dy[2] = y[3];
        dy[3] = -(n - 1) * pp / y[0] + 0.5 * eps;
    }

    // |grad f|^2 + R - eps f, the first integral of the system
    double first_integral(const State& y) const {
        const double a = -phi2(y) / y[0];
        const double b = (1.0 - y[1] * y[1]) / (y[0] * y[0]);
        const double R = 2.0 * (n - 1) * a + (n - 1) * (n - 2) * b;
        return y[3] * y[3] + R - eps * y[2];
    }
};

} // namespace

SolitonProfile shoot_soliton(int epsilon, int n, double s, double r_max, double ode_tol, std::size_t N,
                             bool normalize) {
    if (n < 3) throw Error(ErrorKind::IncompatibleDimension, "shooting needs n >= 3");
    if (epsilon != 0 && epsilon != 1) throw Error(ErrorKind::Precondition, "epsilon must be 0 or 1");
    if (!(s > 0.0)) throw Error(ErrorKind::Precondition, "shooting parameter s must be positive");
    if (!(r_max > 0.0) || !(ode_tol > 0.0)) throw Error(ErrorKind::Precondition, "r_max and ode_tol must be positive");

    WarpedGrid grid = WarpedGrid::uniform(n, 0.0, r_max, N);
    const auto& r = grid.r();
    const double delta = 1e-3 * r_max;
    const Series series(epsilon, n, s);
    const System sys{n, static_cast<double>(epsilon)};

    std::vector<double> phi(N), f(N), fp(N);
    std::vector<double> times{delta};
    std::vector<std::size_t> slots;
    for (std::size_t i = 0; i < N; ++i) {
        if (r[i] <= delta) {
            const State y = series.at(r[i], s);
            phi[i] = y[0];
            f[i] = y[2];
            fp[i] = y[3];
        } else {
            times.push_back(r[i]);
            slots.push_back(i);
        }
    }

    State y = series.at(delta, s);
    const double c0 = sys.first_integral(y);
    double drift = 0.0;
    std::size_t k = 0;
    auto observer = [&](const State& x, double) {
        drift = std::max(drift, std::abs(sys.first_integral(x) - c0));
        if (k > 0) {
            const std::size_t i = slots[k - 1];
            phi[i] = x[0];
            f[i] = x[2];
            fp[i] = x[3];
        }
        ++k;
    };
    namespace ode = boost::numeric::odeint;
    // The identity checks differentiate the sampled profile three times, so step-to-step
    // jitter at the level ode_tol would be amplified by 1/dr^3. Integrate tighter.
    const double tol = std::max(1e-2 * ode_tol, 1e-14);
    try {
        ode::integrate_times(ode::make_controlled<ode::runge_kutta_dopri5<State>>(tol, tol), sys, y,
                             times.begin(), times.end(), 1e-3 * delta, observer);
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error(ErrorKind::ShootingFailure, std::string("step control failed: ") + e.what());
    }

    std::ostringstream id;
    id << (epsilon == 1 ? "bryant_expander_s" : "bryant_steady_s") << s;
    auto p = make_profile(epsilon, grid, std::move(phi), std::move(f), std::move(fp), id.str());
    p.constraint_drift = drift;
    if (epsilon == 1 && s < 0.5) p.flags.push_back("negative curvature at the origin (s < 1/2)");

    if (epsilon == 0) {
        p.lambda_g = c0;
        if (normalize) p = normalize_steady(p);
        return p;
    }

    // Entropy normalization with the full sphere area, int e^{-f} dmu = 1.
    double Z = 0.0;
    for (std::size_t i = 0; i < N; ++i) Z += std::exp(-p.f[i]) * std::pow(p.metric.phi[i], n - 1) * grid.cell(i);
    Z *= sphere_area(n);
    const double last = std::exp(-p.f.back()) * std::pow(p.metric.phi.back(), n - 1);
    p.normalization_tail = sphere_area(n) * last / std::max(p.fp.back(), 1e-300) / Z;
    if (normalize) {
        const double shift = std::log(Z);
        for (auto& v : p.f) v += shift;
        p.mu_g = c0 - shift;
    } else {
        p.mu_g = c0;
    }
    p.cone_angle = p.metric.phi.back() / r_max;
    return p;
}

SolitonProfile restrict_to(const SolitonProfile& p, double r_hi) {
    const auto& r = p.r();
    const std::size_t M = static_cast<std::size_t>(std::upper_bound(r.begin(), r.end(), r_hi * (1 + 1e-12)) - r.begin());
    if (M < 16) throw Error(ErrorKind::Grid, "restricted window has fewer than 16 nodes");
    auto cut = [M](const std::vector<double>& v) { return std::vector<double>(v.begin(), v.begin() + M); };
    auto q = make_profile(p.epsilon, WarpedGrid(p.n(), cut(r)), cut(p.metric.phi), cut(p.f), cut(p.fp), p.id);
    q.lambda_g = p.lambda_g;
    q.mu_g = p.mu_g;
    q.cone_angle = p.cone_angle;
    q.flags = p.flags;
    q.constraint_drift = p.constraint_drift;
    q.normalization_tail = p.normalization_tail;
    return q;
}

std::vector<double> laplacian_f(const SolitonProfile& p) {
    const auto& m = p.metric;
    const std::size_t N = p.size();
    const int n = p.n();
    std::vector<double> fs(N);
    for (std::size_t i = 0; i < N; ++i) fs[i] = p.fp[i] / m.xi[i];
    const auto dfs = m.grid.d1(fs, Parity::Odd);
    const auto k = geometry::kappa(m);
    std::vector<double> out(N);
    for (std::size_t i = 0; i < N; ++i) {
        if (m.origin_regular && i == 0)
            out[i] = n * dfs[0] / m.xi[0];
        else
            out[i] = dfs[i] / m.xi[i] + (n - 1) * k[i] * fs[i];
    }
    return out;
}

namespace {

std::pair<std::size_t, std::size_t> interior(const SolitonProfile& p) {
    const std::size_t lo = p.metric.origin_regular ? 0 : 2;
    return {lo, p.size() - 2};
}

} // namespace

IdentityResiduals identity_residuals(const SolitonProfile& p) {
    const auto& c = p.curvature;
    const auto& m = p.metric;
    const int n = p.n();
    const double eps = p.epsilon;
    const auto lap = laplacian_f(p);
    const auto dR = m.grid.d1(c.R, Parity::Even);
    const auto [lo, hi] = interior(p);

    IdentityResiduals res;
    std::vector<double> ham;
    for (std::size_t i = lo; i < hi; ++i) {
        const double fs = p.fp[i] / m.xi[i];
        res.trace = std::max(res.trace, std::abs(lap[i] - c.R[i] - 0.5 * eps * n));
        res.bianchi = std::max(res.bianchi, std::abs(2.0 * c.ric_r[i] * fs + dR[i] / m.xi[i]));
        ham.push_back(fs * fs + c.R[i] - eps * p.f[i]);
    }
    const auto [mn, mx] = std::minmax_element(ham.begin(), ham.end());
    res.constant = 0.5 * (*mn + *mx);
    res.hamilton = 0.5 * (*mx - *mn);
    return res;
}

bool HypothesisReport::passed() const {
    return std::all_of(clauses.begin(), clauses.end(), [](const Clause& c) { return c.status == "pass"; });
}

HypothesisReport check_hypothesis_H(const SolitonProfile& p) {
    const auto& c = p.curvature;
    const auto& r = p.r();
    const std::size_t N = p.size();
    const bool short_tail = r.back() < kMinTail;
    HypothesisReport rep;
    auto status = [&](bool ok) { return short_tail ? std::string("insufficient tail") : std::string(ok ? "pass" : "fail"); };

    double sup_rm = 0.0;
    for (std::size_t i = 0; i < N; ++i) sup_rm = std::max({sup_rm, std::abs(c.a[i]), std::abs(c.b[i])});
    const std::size_t h0 = N / 2;
    std::vector<double> xs(r.begin() + h0, r.end());

    if (p.epsilon == 0) {
        double min_ric = INFINITY;
        for (std::size_t i = 0; i < N; ++i) min_ric = std::min({min_ric, c.ric_r[i], c.ric_s[i]});
        rep.clauses.push_back({"ric_nonnegative", status(min_ric >= -1e-8), min_ric});

        double Rmax = *std::max_element(c.R.begin(), c.R.end());
        std::vector<double> ys(c.R.begin() + h0, c.R.end());
        const auto trend = fit::median_slope(xs, ys);
        const bool decays = trend.slope <= 0.0 && c.R.back() <= 0.1 * std::max(Rmax, 1e-300);
        rep.clauses.push_back({"scalar_curvature_to_zero", status(Rmax > 0.0 ? decays : true), c.R.back()});
        rep.clauses.push_back({"sup_rm_finite", status(std::isfinite(sup_rm)), sup_rm});

        std::vector<double> fx, ly;
        for (std::size_t i = h0; i < N; ++i)
            if (c.R[i] > 0.0) {
                fx.push_back(p.f[i]);
                ly.push_back(std::log(c.R[i]));
            }
        if (fx.size() >= 3) {
            const auto lf = fit::median_slope(fx, ly);
            char buf[128];
            std::snprintf(buf, sizeof buf, "tail fit log R ~ %.4f f", lf.slope);
            rep.notes.emplace_back(buf);
        }
    } else {
        rep.clauses.push_back({"sup_rm_finite", status(std::isfinite(sup_rm)), sup_rm});
        double q = INFINITY;
        for (std::size_t i = h0; i < N; ++i)
            if (r[i] > 0.0) q = std::min(q, p.f[i] / (r[i] * r[i]));
        rep.clauses.push_back({"potential_quadratic_growth", status(q > 0.0), q});
    }
    return rep;
}

GrowthFit potential_growth_check(const SolitonProfile& p) {
    GrowthFit g;
    g.power = p.epsilon == 1 ? 2 : 1;
    const auto& r = p.r();
    const std::size_t N = p.size();
    std::vector<double> x, y;
    for (std::size_t i = N / 2; i < N; ++i) {
        x.push_back(g.power == 2 ? r[i] * r[i] : r[i]);
        y.push_back(p.f[i]);
    }
    const auto l = fit::least_squares(x, y);
    g.c1 = g.c3 = l.slope;
    g.c2 = INFINITY;
    g.c4 = -INFINITY;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double d = y[j] - l.slope * x[j];
        g.c2 = std::min(g.c2, d);
        g.c4 = std::max(g.c4, d);
    }
    g.pass = g.c1 > 1e-12;
    return g;
}

std::string to_csv(const SolitonProfile& p) {
    std::string out = "r,phi,f,fp,a,b,R\n";
    char buf[256];
    for (std::size_t i = 0; i < p.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", p.r()[i], p.metric.phi[i],
                      p.f[i], p.fp[i], p.curvature.a[i], p.curvature.b[i], p.curvature.R[i]);
        out += buf;
    }
    return out;
}

} // namespace solstab::solitons
