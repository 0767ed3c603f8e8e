// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the number of failures.

#include "fixtures.hpp"

#include "solstab/flow.hpp"
#include "solstab/solitons.hpp"
#include "solstab/spectral.hpp"
#include "solstab/stability.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

using namespace solstab;
using geometry::DiagonalTensorField;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

// printf into a string
template <class... A>
std::string fmt(const char* f, A... a) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, a...);
    return buf;
}

double worst_identity(const solitons::SolitonProfile& p) {
    const auto id = solitons::identity_residuals(p);
    return std::max({id.trace, id.hamilton, id.bianchi});
}

spectral::SpectralProblem problem(const solitons::SolitonProfile& p, spectral::Sector s, double r_hi) {
    return {p, s, spectral::window_upto(p.grid(), r_hi), 1e-10};
}

DiagonalTensorField seeded_tensor(const solitons::SolitonProfile& p, std::uint64_t seed, double lo, double hi) {
    std::mt19937_64 rng(seed);
    const auto s1 = spectral::random_bump_spec(rng, lo, hi), s2 = spectral::random_bump_spec(rng, lo, hi);
    return {spectral::bump(p.grid(), s1.a, s1.b, s1.taper), spectral::bump(p.grid(), s2.a, s2.b, s2.taper)};
}

std::vector<double> seeded_scalar(const solitons::SolitonProfile& p, std::uint64_t seed, double lo, double hi) {
    std::mt19937_64 rng(seed);
    const auto s = spectral::random_bump_spec(rng, lo, hi);
    return spectral::bump(p.grid(), s.a, s.b, s.taper);
}

flow::FlowConfig flow_config(const solitons::SolitonProfile& p, double r_window, double horizon, double amplitude) {
    flow::FlowConfig c{.profile = p, .r_window = r_window, .horizon = horizon, .sample_dt = horizon / 100};
    c.perturbation.amplitude = amplitude;
    c.perturbation.seed = 1;
    return c;
}

// 1. closed-form identities and their convergence
Outcome identities() {
    const double cig = worst_identity(fx::cigar(15.0, 4000, false));
    const double gau = worst_identity(fx::gaussian(3, 15.0, 4000));
    // at N = 4000 the cigar is near the roundoff floor, so the order is taken on a coarser pair
    const double c1 = worst_identity(fx::cigar(15.0, 250, false)), c2 = worst_identity(fx::cigar(15.0, 500, false));
    const double oc = fx::order(c1, c2);
    // the stencils are exact on the gaussian's polynomial data: residuals sit at roundoff on every grid
    const double g1 = worst_identity(fx::gaussian(3, 15.0, 250)), g2 = worst_identity(fx::gaussian(3, 15.0, 500));
    const bool pass = cig < 1e-6 && gau < 1e-6 && oc >= 1.9 && std::max(g1, g2) < 1e-9;
    return {pass, fmt("cigar %.2e, gaussian %.2e at N=4000 (< 1e-6); cigar order %.2f (>= 1.9); gaussian %.1e/%.1e at roundoff",
                      cig, gau, oc, g1, g2)};
}

// 2. scalar bottom of the gaussian expander
Outcome scalar_bottom() {
    const auto& p = fx::gaussian(3, 12.0, 2000);
    const auto r = spectral::bottom_scalar(problem(p, spectral::Sector::Scalar, 12.0));
    const double err = std::abs(r.lambda_min - 1.5) / 1.5, sens = r.window_sensitivity / r.lambda_min;
    return {err < 0.01 && sens < 0.005,
            fmt("lambda_1 = %.6f (1.5 within 1%%: %.2e); window sensitivity %.2e (< 0.5%%)", r.lambda_min, err, sens)};
}

// 3. Hardy inequalities on 100 seeded test functions per case
Outcome hardy() {
    double worst = INFINITY;
    std::string d;
    for (double a : {0.25, 0.5, 1.0}) {
        const double m = spectral::hardy_check(fx::cigar(15.0, 2000, true), a, 31, 100).min_margin;
        worst = std::min(worst, m);
        d += fmt("cigar(%.2f) %.3e, ", a, m);
    }
    const double g = spectral::hardy_check(fx::gaussian(3, 12.0, 2000), 0.0, 32, 100).min_margin;
    const double b = spectral::hardy_check(fx::bryant_expander(2000, 15.0), 0.0, 33, 100).min_margin;
    worst = std::min({worst, g, b});
    d += fmt("gaussian %.3e, bryant %.3e; min %.3e (>= -1e-8)", g, b, worst);
    return {worst >= -1e-8, d};
}

// 4. kernel oracle on the bryant expander
// The L^2_f norm carries a factor e^{max f / 2} (about e^28 on r <= 15), so the residual is measured
// against the norm of the kernel element itself.
Outcome kernel() {
    const auto k = spectral::kernel_oracle(fx::bryant_expander(4000, 15.0));
    const double e1 = spectral::kernel_oracle(fx::bryant_expander(250, 15.0)).relative;
    const double e2 = spectral::kernel_oracle(fx::bryant_expander(500, 15.0)).relative;
    const double o = fx::order(e1, e2);
    return {k.relative < 1e-4 && o >= 2.0,
            fmt("||L k|| / ||k|| = %.3e at N=4000 (< 1e-4, unnormalized %.2e); order %.2f on N=250/500 (>= 2)", k.relative,
                k.absolute, o)};
}

// 5. tensor bottoms
Outcome tensor_bottom() {
    const auto& b = fx::bryant_expander(2000, 15.0);
    const double le = spectral::bottom_lichnerowicz(problem(b, spectral::Sector::DiagonalTensor, 12.0)).lambda_min;
    const auto& s = fx::bryant_steady(2000, 40.0);
    const double ls = spectral::bottom_lichnerowicz(problem(s, spectral::Sector::DiagonalTensor, 30.0)).lambda_min;
    return {le >= 1.5 - 1e-2 && ls > 0.0,
            fmt("bryant expander %.6f (>= 1.49); bryant steady lambda(g)=%.3f bottom %.6f (margin %.3e > 0)", le, s.lambda_g, ls, ls)};
}

// 6. linear flow decay and the Gronwall bounds
Outcome linear_flow() {
    const auto& g = fx::gaussian(3, 12.0, 241);
    auto c = flow_config(g, 8.0, 8.0, 0.01);
    const auto tr = flow::run_linear_flow(c, flow::initial_perturbation(c));
    const double lambda = spectral::bottom_lichnerowicz(problem(g, spectral::Sector::DiagonalTensor, 8.0)).lambda_min;
    const auto fit = flow::fit_l2f_rate(tr);
    const double rel = std::abs(fit.rate - 2 * lambda) / (2 * lambda);
    const auto gr = flow::gronwall_check(tr, 1, lambda);

    const auto& s = fx::bryant_steady(241, 40.0);
    const auto cs = flow_config(s, 20.0, 4.0, 0.01);
    const auto ts = flow::run_linear_flow(cs, flow::initial_perturbation(cs));
    double worst = 0.0;
    for (std::size_t k = 1; k < ts.divf_norm.size(); ++k)
        if (ts.divf_norm[k - 1] > 0.0) worst = std::max(worst, ts.divf_norm[k] / ts.divf_norm[k - 1]);
    const bool pass = rel < 0.10 && gr.divergence_pass && worst <= 1.0;
    return {pass, fmt("rate %.4f vs 2 lambda %.4f (%.1f%%, < 10%%); divergence ratio %.4f (<= %.3f); steady step ratio %.4f (<= 1)",
                      fit.rate, 2 * lambda, 100 * rel, gr.worst_divergence_ratio, gr.slack, worst)};
}

// 7. nonlinear stability under (MRHF)
Outcome nonlinear_flow() {
    const auto& p = fx::bryant_expander(241, 12.0);
    const auto tr = flow::run_mrhf(flow_config(p, 8.0, 10.0, 1e-2));
    const double lambda = spectral::bottom_lichnerowicz(problem(p, spectral::Sector::DiagonalTensor, 8.0)).lambda_min;
    const auto ly = flow::lyapunov_check(tr, lambda);
    const auto a = flow::run_mrhf(flow_config(p, 8.0, 1.0, 1e-2));
    const auto h = flow::run_mrhf(flow_config(p, 8.0, 1.0, 5e-3));
    double worst = 0.0;
    for (std::size_t k = 0; k < a.sup_norm.size(); ++k)
        if (h.sup_norm[k] > 0.0) worst = std::max(worst, std::abs(a.sup_norm[k] / h.sup_norm[k] / 2.0 - 1.0));
    const double terminal = tr.sup_norm.back();
    const bool pass = terminal < 1e-4 && ly.pass && worst <= 0.2;
    return {pass, fmt("terminal sup %.3e at T=10 (< 1e-4); rate %.4f in [%.4f, %.4f]; halving deviation %.2e (<= 20%%)", terminal,
                      ly.fit.rate, ly.band_lo, ly.band_hi, worst)};
}

// 8. pointwise curvature chain
Outcome pointwise() {
    const auto& p = fx::bryant_expander(2000, 15.0);
    const auto r = stability::rotsym_pointwise_inequality(p, 7, 10000, p.size());
    return {r.min_margin >= -1e-12, fmt("min margin %.3e at r=%.3f over %zu samples (>= -1e-12)", r.min_margin, r.r_at_min, r.samples)};
}

// 9. decay classification
Outcome decay() {
    const auto t = stability::steady_curvature_gap(fx::cigar(15.0, 4000, true), 0.0);
    const auto& s = fx::bryant_steady(4000, 60.0);
    bool all = true;
    std::string d = fmt("cigar exponent %.5f (1.00 +- 0.02); bryant steady", t.exponent);
    for (double a : {0.3, 0.6, 0.9}) {
        const auto g = stability::steady_curvature_gap(s, a);
        all = all && g.status == "pass";
        d += fmt(" a=%.1f %s (slope %.3f)", a, g.status.c_str(), g.slope);
    }
    return {std::abs(t.exponent - 1.0) <= 0.02 && all, d};
}

// 10. conjugation, Koiso and Donnelly-Garofalo residuals under refinement
Outcome identities_order() {
    struct Row {
        std::string name;
        std::function<double(std::size_t)> err;
    };
    auto worst = [](auto&& one) {
        double w = 0.0;
        for (std::uint64_t k = 0; k < 10; ++k) w = std::max(w, one(k));
        return w;
    };
    const std::vector<Row> rows{
        {"conj/gaussian", [&](std::size_t N) { const auto& p = fx::gaussian(3, 10.0, N); return worst([&](std::uint64_t k) { return spectral::conjugate_schrodinger(p, seeded_tensor(p, k, 0.5, 9.0)); }); }},
        {"conj/cigar", [&](std::size_t N) { const auto& p = fx::cigar(10.0, N, true); return worst([&](std::uint64_t k) { return spectral::conjugate_schrodinger(p, seeded_tensor(p, k, 0.5, 9.0)); }); }},
        {"koiso/gaussian", [&](std::size_t N) { const auto& p = fx::gaussian(3, 10.0, N); return worst([&](std::uint64_t k) { return spectral::koiso_identity_residual(p, seeded_tensor(p, k, 0.5, 9.0)).relative(); }); }},
        {"dg/gaussian", [&](std::size_t N) { const auto& p = fx::gaussian(3, 10.0, N); return worst([&](std::uint64_t k) { return spectral::donnelly_garofalo_residual(p, seeded_scalar(p, k, 0.5, 9.0)).relative(); }); }},
        {"dg/cigar", [&](std::size_t N) { const auto& p = fx::cigar(10.0, N, true); return worst([&](std::uint64_t k) { return spectral::donnelly_garofalo_residual(p, seeded_scalar(p, k, 0.5, 9.0)).relative(); }); }},
    };
    bool pass = true;
    std::string d;
    for (const auto& r : rows) {
        const double e1 = r.err(1000), e2 = r.err(2000);
        const double dr = 10.0 / 1999.0;
        const double o = fx::order(e1, e2);
        pass = pass && o >= 1.9;
        d += fmt("%s order %.2f C=%.2e; ", r.name.c_str(), o, e2 / (dr * dr));
    }
    d += "(order >= 1.9 on N=1000/2000)";
    return {pass, d};
}

// 11. flow equivalence of the stationary gaussian
Outcome equivalence() {
    const auto& g = fx::gaussian(3, 12.0, 481);
    auto c = flow_config(g, 10.0, 0.5, 0.0);
    c.keep_snapshots = true;
    const auto mrf = flow::run_mrf(c);
    const std::vector<double> ts{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
    const auto eq = flow::flow_equivalence_transform(mrf, g, ts);
    return {eq.max_residual <= 1e-4, fmt("max |d_t g + 2 Ric| = %.3e on r <= %.2f (<= 1e-4)", eq.max_residual, eq.r_verified)};
}

} // namespace

int main() {
    const std::vector<std::pair<const char*, Outcome (*)()>> criteria{
        {"closed-form soliton identities", identities},
        {"scalar spectral bottom", scalar_bottom},
        {"Hardy inequalities", hardy},
        {"kernel oracle", kernel},
        {"tensor spectral bottom", tensor_bottom},
        {"linear flow decay", linear_flow},
        {"nonlinear stability", nonlinear_flow},
        {"pointwise curvature inequality", pointwise},
        {"decay classification", decay},
        {"conjugation/Koiso/Donnelly-Garofalo orders", identities_order},
        {"flow equivalence", equivalence},
    };
    int failures = 0;
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[k].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failures += o.pass ? 0 : 1;
        std::printf("%s %2zu %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first, o.detail.c_str(), sec);
        std::fflush(stdout);
    }
    const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%d of %zu criteria failed, %.1fs\n", failures, criteria.size(), total);
    return failures;
}
