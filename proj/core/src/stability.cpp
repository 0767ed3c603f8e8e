#include "solstab/stability.hpp"

#include "solstab/error.hpp"
#include "solstab/fit.hpp"
#include "solstab/rng.hpp"
#include "solstab/spectral.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace solstab::stability {

using geometry::DiagonalTensorField;
using solitons::SolitonProfile;

double rotsym_margin(const geometry::CurvatureData& c, std::size_t i, std::span<const double> h) {
    const int n = c.n;
    if (h.size() != static_cast<std::size_t>(n)) throw Error(ErrorKind::IncompatibleDimension, "sample must have n entries");
    const double a = c.a[i], b = c.b[i], R = c.R[i];
    double norm2 = 0.0, sum_s = 0.0, sq_s = 0.0;
    for (int k = 0; k < n; ++k) norm2 += h[k] * h[k];
    for (int k = 1; k < n; ++k) {
        sum_s += h[k];
        sq_s += h[k] * h[k];
    }
    const double rm = 2.0 * a * h[0] * sum_s + b * (sum_s * sum_s - sq_s);
    const double s = std::sqrt(n - 1.0);
    return R * norm2 - 2.0 * rm - (2.0 * s * (s - 1.0) * a * norm2 + (n - 2.0) * (n - 3.0) * b * sq_s);
}

RotsymResult rotsym_pointwise_inequality(const SolitonProfile& p, std::uint64_t seed, std::size_t per_node,
                                         std::size_t upto) {
    const int n = p.n();
    if (n < 2) throw Error(ErrorKind::IncompatibleDimension, "needs n >= 2");
    upto = std::min(upto, p.size());
    SeedStream seeds(seed);
    auto rng = seeds.split();
    std::normal_distribution<double> G(0.0, 1.0);
    RotsymResult out;
    out.min_margin = std::numeric_limits<double>::infinity();
    std::vector<double> h(n);
    for (std::size_t i = 0; i < upto; ++i) {
        for (std::size_t k = 0; k < per_node; ++k) {
            double s = 0.0;
            for (auto& x : h) {
                x = G(rng);
                s += x * x;
            }
            s = 1.0 / std::sqrt(s);
            for (auto& x : h) x *= s;
            const double m = rotsym_margin(p.curvature, i, h);
            if (m < out.min_margin) {
                out.min_margin = m;
                out.r_at_min = p.r()[i];
            }
            ++out.samples;
        }
    }
    return out;
}

CriteriaReport bochner_criterion(const SolitonProfile& p, double r_window) {
    CriteriaReport rep;
    rep.criterion = "bochner";
    if (p.epsilon != 1) {
        rep.status = "inconclusive";
        rep.margin = std::numeric_limits<double>::quiet_NaN();
        rep.caveats.push_back("stated for expanding solitons only");
        return rep;
    }
    const auto w = spectral::window_upto(p.grid(), r_window);
    double infR = std::numeric_limits<double>::infinity(), rm = 0.0;
    for (std::size_t i = 0; i <= w.hi; ++i) {
        infR = std::min(infR, p.curvature.R[i]);
        rm = std::max(rm, std::max(std::abs(p.curvature.a[i]), std::abs(p.curvature.b[i])));
    }
    rep.margin = infR + 0.5 * p.n() - 2.0 * rm;
    rep.measured = {{"inf_R", infR}, {"sup_abs_sectional", rm}, {"r_window", p.r()[w.hi]}};
    rep.caveats.push_back("inf and sup taken over the window r <= " + std::to_string(p.r()[w.hi]));
    if (rep.margin > 0.0) {
        const auto lam = spectral::bottom_lichnerowicz({p, spectral::Sector::DiagonalTensor, w}).lambda_min;
        rep.measured.emplace_back("bottom_lichnerowicz", lam);
        rep.caveats.push_back("spectral cross-check restricted to the diagonal sector");
        rep.status = lam > 0.0 ? "pass" : "fail";
    } else {
        rep.status = "inconclusive";
    }
    return rep;
}

AndersonChow anderson_chow_check(const SolitonProfile& p, const DiagonalTensorField& h, double lambda, double t_level) {
    if (p.n() != 3) throw Error(ErrorKind::IncompatibleDimension, "the Anderson-Chow estimate is for n = 3");
    if (p.epsilon != 1) throw Error(ErrorKind::Precondition, "the Anderson-Chow estimate is for expanding solitons");
    if (h.size() != p.size()) throw Error(ErrorKind::GridMismatch, "field size differs from grid");
    std::size_t k = 0;
    while (k + 1 < p.size() && p.f[k + 1] <= t_level) ++k;
    if (p.f[0] > t_level || k < 2) throw Error(ErrorKind::Precondition, "sublevel set {f <= t} is too small");
    AndersonChow out;
    std::size_t arg = 0;
    for (std::size_t i = 0; i <= k; ++i) {
        const double R = p.curvature.R[i];
        if (!(R > 0.0)) throw Error(ErrorKind::Precondition, "R <= 0 at r=" + std::to_string(p.r()[i]));
        const double ratio = std::sqrt(h.norm2(i, 3)) / R;
        if (ratio > out.max_ratio) {
            out.max_ratio = ratio;
            arg = i;
        }
    }
    out.r_argmax = p.r()[arg];
    out.r_level = p.r()[k];
    out.on_boundary = arg + 1 >= k;
    if (lambda > 1.0) out.status = "inconclusive";
    else out.status = out.on_boundary ? "pass" : "fail";
    return out;
}

namespace {

TailTrend tail_trend(const SolitonProfile& p, const std::vector<double>& q, double alpha) {
    const std::size_t N = p.size();
    double qmax = 0.0;
    for (double x : q) qmax = std::max(qmax, std::abs(x));
    TailTrend out;
    std::vector<double> f, lq;
    out.tail_min = std::numeric_limits<double>::infinity();
    bool nonpositive = false;
    for (std::size_t i = N / 2; i + 2 < N; ++i) {
        // below this the stencil roundoff dominates the curvature
        if (std::abs(q[i]) < 1e-8 * qmax) continue;
        if (q[i] < 0.0) {
            nonpositive = true;
            continue;
        }
        f.push_back(p.f[i]);
        lq.push_back(std::log(q[i]));
        out.tail_min = std::min(out.tail_min, std::exp(alpha * p.f[i]) * q[i]);
    }
    if (nonpositive || f.size() < 8) {
        out.tail_min = nonpositive ? 0.0 : out.tail_min;
        out.status = "inconclusive";
        out.slope = std::numeric_limits<double>::quiet_NaN();
        out.exponent = std::numeric_limits<double>::quiet_NaN();
        return out;
    }
    const double s = fit::median_slope(f, lq).slope;
    out.exponent = -s;
    out.slope = alpha + s;
    out.status = (out.tail_min > 0.0 && out.slope >= 0.0) ? "pass" : "inconclusive";
    return out;
}

} // namespace

TailTrend steady_curvature_gap(const SolitonProfile& p, double alpha) {
    if (p.epsilon != 0) throw Error(ErrorKind::Precondition, "steady_curvature_gap needs a steady profile");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorKind::Precondition, "alpha must lie in [0, 1]");
    std::vector<double> q(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) q[i] = std::min(p.curvature.ric_r[i], p.curvature.ric_s[i]);
    return tail_trend(p, q, alpha);
}

TailTrend expander_ricci_decay(const SolitonProfile& p, double alpha) {
    if (p.epsilon != 1) throw Error(ErrorKind::Precondition, "expander_ricci_decay needs an expanding profile");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorKind::Precondition, "alpha must lie in [0, 1]");
    return tail_trend(p, p.curvature.R, alpha);
}

std::vector<CriteriaReport> evaluate_all(const SolitonProfile& p, double r_window, std::uint64_t seed) {
    std::vector<CriteriaReport> out;
    const auto w = spectral::window_upto(p.grid(), r_window);
    {
        CriteriaReport rep;
        rep.criterion = "rotsym_pointwise_inequality";
        rep.seed = seed;
        const auto r = rotsym_pointwise_inequality(p, seed, 1000, w.hi + 1);
        rep.margin = r.min_margin;
        rep.measured = {{"min_margin", r.min_margin}, {"r_at_min", r.r_at_min}, {"samples", double(r.samples)}};
        bool curved = true;
        for (std::size_t i = 0; i <= w.hi; ++i) curved = curved && p.curvature.a[i] >= 0.0 && p.curvature.b[i] >= 0.0;
        if (r.min_margin >= -1e-12) rep.status = "pass";
        else rep.status = curved ? "fail" : "inconclusive";
        if (!curved) rep.caveats.push_back("profile is not positively curved on the window");
        out.push_back(rep);
    }
    if (p.epsilon == 1) {
        out.push_back(bochner_criterion(p, r_window));
        for (double alpha : {0.3, 0.6, 0.9}) {
            const auto t = expander_ricci_decay(restrict_to(p, p.r()[w.hi]), alpha);
            CriteriaReport rep;
            rep.criterion = "expander_ricci_decay";
            rep.measured = {{"alpha", alpha}, {"slope", t.slope}, {"decay_exponent", t.exponent}, {"tail_min", t.tail_min}};
            rep.margin = t.slope;
            rep.status = t.status;
            rep.caveats.push_back("tail trend over the outer half of the window");
            out.push_back(rep);
        }
    } else {
        for (double alpha : {0.3, 0.6, 0.9}) {
            const auto t = steady_curvature_gap(restrict_to(p, p.r()[w.hi]), alpha);
            CriteriaReport rep;
            rep.criterion = "steady_curvature_gap";
            rep.measured = {{"alpha", alpha}, {"slope", t.slope}, {"decay_exponent", t.exponent}, {"tail_min", t.tail_min}};
            rep.margin = t.slope;
            rep.status = t.status;
            rep.caveats.push_back("tail trend over the outer half of the window");
            out.push_back(rep);
        }
    }
    if (p.n() == 3 && p.epsilon == 1) {
        CriteriaReport rep;
        rep.criterion = "anderson_chow";
        rep.seed = seed;
        try {
            const auto s = spectral::bottom_lichnerowicz({p, spectral::Sector::DiagonalTensor, w});
            const double t = p.f[spectral::scale_window(p.grid(), w, 0.8).hi];
            const auto ac = anderson_chow_check(p, s.tensor, s.lambda_min, t);
            rep.measured = {{"lambda", s.lambda_min}, {"max_ratio", ac.max_ratio}, {"r_argmax", ac.r_argmax},
                            {"r_level", ac.r_level}};
            rep.margin = ac.r_level - ac.r_argmax;
            rep.status = ac.status;
            if (s.lambda_min > 1.0) rep.caveats.push_back("bottom eigenvalue exceeds 1, the estimate does not apply");
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Precondition) throw;
            rep.status = "inconclusive";
            rep.margin = std::numeric_limits<double>::quiet_NaN();
            rep.caveats.push_back(e.what());
        }
        out.push_back(rep);
    }
    return out;
}

namespace {

nlohmann::ordered_json num(double x) { return std::isfinite(x) ? nlohmann::ordered_json(x) : nlohmann::ordered_json(nullptr); }

} // namespace

std::string to_json(const std::vector<CriteriaReport>& reports) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : reports) {
        nlohmann::ordered_json j;
        j["criterion"] = r.criterion;
        nlohmann::ordered_json m = nlohmann::ordered_json::object();
        for (const auto& [k, v] : r.measured) m[k] = num(v);
        j["measured"] = m;
        j["status"] = r.status;
        j["margin"] = num(r.margin);
        j["caveats"] = r.caveats;
        j["seed"] = r.seed;
        arr.push_back(j);
    }
    return arr.dump(2);
}

} // namespace solstab::stability
