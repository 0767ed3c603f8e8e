#include "solstab/flow.hpp"

#include "solstab/error.hpp"
#include "solstab/fit.hpp"
#include "solstab/rng.hpp"

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <boost/numeric/odeint.hpp>
#include "json.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace solstab::flow {

using geometry::DiagonalTensorField;
using geometry::Parity;
using geometry::WarpedMetric;
using solitons::SolitonProfile;
using spectral::ReducedOperator;
using spectral::Sector;
using spectral::Window;

Shape parse_shape(const std::string& s) {
    if (s == "bump_psi") return Shape::BumpPsi;
    if (s == "bump_xi") return Shape::BumpXi;
    if (s == "random_highfreq") return Shape::RandomHighfreq;
    throw Error(ErrorKind::InvalidConfig, "unknown perturbation shape '" + s + "'");
}

std::string to_string(Shape s) {
    switch (s) {
    case Shape::BumpPsi: return "bump_psi";
    case Shape::BumpXi: return "bump_xi";
    case Shape::RandomHighfreq: return "random_highfreq";
    }
    return "?";
}

namespace {

void validate(const FlowConfig& cfg) {
    const auto& p = cfg.profile;
    const auto& pert = cfg.perturbation;
    auto bad = [](const std::string& what) { throw Error(ErrorKind::InvalidConfig, what); };
    if (!(cfg.dt_safety > 0.0)) bad("dt_safety must be positive");
    if (!(cfg.horizon > 0.0)) bad("horizon must be positive");
    if (!(cfg.sample_dt > 0.0) || cfg.sample_dt > cfg.horizon) bad("sample_dt must lie in (0, horizon]");
    if (!(pert.amplitude >= 0.0) || pert.amplitude > kMaxAmplitude)
        bad("perturbation amplitude must lie in [0, " + std::to_string(kMaxAmplitude) + "]");
    if (!(pert.support_lo > 0.0 && pert.support_lo < pert.support_hi && pert.support_hi < 1.0))
        bad("perturbation support must satisfy 0 < lo < hi < 1");
    if (!p.metric.origin_regular) throw Error(ErrorKind::Precondition, "flows need a profile with a regular origin");
    if (p.n() < 3) throw Error(ErrorKind::IncompatibleDimension, "flows need n >= 3");
    if (!(cfg.r_window > 0.0) || cfg.r_window > p.r().back())
        bad("r_window must lie in (0, r_max] of the profile");
}

Window flow_window(const FlowConfig& cfg) {
    const Window w = spectral::window_upto(cfg.profile.grid(), cfg.r_window);
    if (w.hi < 8) throw Error(ErrorKind::Grid, "flow window has fewer than 8 nodes");
    return w;
}

double sup_of(const DiagonalTensorField& h, int n, std::size_t upto) {
    double s = 0.0;
    for (std::size_t i = 0; i <= upto && i < h.size(); ++i) s = std::max(s, std::sqrt(h.norm2(i, n)));
    return s;
}

struct Norms {
    double l2f = 0.0, sup = 0.0, divf = 0.0, grad_sup = 0.0;
};

// Norms of h against the background (g0, f0) over nodes [0, hi].
class Meter {
public:
    Meter(const SolitonProfile& p, std::size_t hi) : p_(p), hi_(hi), mu_(geometry::WeightedMeasure::make(p.metric, p.f)) {}

    Norms operator()(const DiagonalTensorField& h) const {
        const int n = p_.n();
        Norms out;
        const auto div = geometry::div_f(h, p_.metric, p_.f);
        const auto g2 = geometry::grad_norm2(h, p_.metric);
        double l2 = 0.0, d2 = 0.0;
        for (std::size_t i = 0; i <= hi_; ++i) {
            l2 += mu_.w[i] * h.norm2(i, n);
            d2 += mu_.w[i] * div[i] * div[i];
            out.grad_sup = std::max(out.grad_sup, std::sqrt(std::max(g2[i], 0.0)));
        }
        out.l2f = std::sqrt(l2);
        out.divf = std::sqrt(d2);
        out.sup = sup_of(h, n, hi_);
        return out;
    }

    double l2f(std::span<const double> w, std::size_t lo, std::size_t hi) const {
        double acc = 0.0;
        for (std::size_t i = lo; i <= hi; ++i) acc += mu_.w[i] * w[i] * w[i];
        return std::sqrt(acc);
    }

private:
    const SolitonProfile& p_;
    std::size_t hi_;
    geometry::WeightedMeasure mu_;
};

void record(FlowTrace& tr, double t, const Norms& nm) {
    tr.times.push_back(t);
    tr.l2f_norm.push_back(nm.l2f);
    tr.sup_norm.push_back(nm.sup);
    tr.divf_norm.push_back(nm.divf);
    tr.grad_sup.push_back(nm.grad_sup);
}

double peclet(const SolitonProfile& p, std::size_t hi) {
    double pe = 0.0;
    for (std::size_t i = 0; i < hi; ++i) pe = std::max(pe, std::abs(p.fp[i]) * p.grid().spacing(i));
    return pe;
}

// Sub-steps per sample so that the step does not exceed dt_max.
std::size_t substeps(double sample_dt, double dt_max) {
    const double k = std::ceil(sample_dt / dt_max - 1e-12);
    if (!(k >= 1.0) || k > 1e9) throw Error(ErrorKind::NumericalFailure, "time step underflow");
    return static_cast<std::size_t>(k);
}

} // namespace

// ---------------------------------------------------------------------------
// Initial data

DiagonalTensorField initial_perturbation(const FlowConfig& cfg) {
    validate(cfg);
    const auto& p = cfg.profile;
    const auto& pert = cfg.perturbation;
    const int n = p.n();
    const std::size_t N = p.size();
    const double a = pert.support_lo * cfg.r_window, b = pert.support_hi * cfg.r_window;
    const auto env = spectral::bump(p.grid(), a, b, 0.25 * (b - a));
    auto h = DiagonalTensorField::zeros(N);
    switch (pert.shape) {
    case Shape::BumpPsi: h.v = env; break;
    case Shape::BumpXi: h.u = env; break;
    case Shape::RandomHighfreq: {
        SeedStream seeds(pert.seed);
        auto rng = seeds.split();
        std::normal_distribution<double> G(0.0, 1.0);
        std::uniform_int_distribution<int> K(8, 24);
        for (auto* comp : {&h.u, &h.v}) {
            for (int term = 0; term < 6; ++term) {
                const double c = G(rng);
                const int k = K(rng);
                for (std::size_t i = 0; i < N; ++i)
                    (*comp)[i] += c * env[i] * std::sin(k * M_PI * (p.r()[i] - a) / (b - a));
            }
        }
        break;
    }
    }
    const double s = sup_of(h, n, N - 1);
    const double scale = s > 0.0 ? pert.amplitude / s : 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        h.u[i] *= scale;
        h.v[i] *= scale;
    }
    return h;
}

DiagonalTensorField divergence_free(const SolitonProfile& p, std::span<const double> u) {
    const auto& m = p.metric;
    const std::size_t N = p.size();
    if (u.size() != N) throw Error(ErrorKind::GridMismatch, "field size differs from grid");
    const int n = p.n();
    const auto du = m.grid.d1(u, Parity::Even);
    const auto k = geometry::kappa(m);
    DiagonalTensorField h{std::vector<double>(u.begin(), u.end()), std::vector<double>(N)};
    for (std::size_t i = 0; i < N; ++i) {
        if (m.origin_regular && i == 0) {
            h.v[0] = u[0];
            continue;
        }
        if (!(std::abs(k[i]) > 0.0)) throw Error(ErrorKind::Precondition, "divergence-free lift needs kappa != 0");
        h.v[i] = u[i] + (du[i] / m.xi[i] + p.fp[i] / m.xi[i] * u[i]) / ((n - 1) * k[i]);
    }
    return h;
}

DiagonalTensorField truncated_kernel_element(const SolitonProfile& p, double r_window) {
    const auto& m = p.metric;
    const std::size_t N = p.size();
    std::vector<double> fs(N);
    for (std::size_t i = 0; i < N; ++i) fs[i] = p.fp[i] / m.xi[i];
    const auto dfs = m.grid.d1(fs, Parity::Odd);
    const auto k = geometry::kappa(m);
    const auto cut = spectral::bump(m.grid, -0.2 * r_window, r_window, 0.2 * r_window);
    auto h = DiagonalTensorField::zeros(N);
    for (std::size_t i = 0; i < N; ++i) {
        h.u[i] = 2.0 * dfs[i] / m.xi[i] * cut[i];
        h.v[i] = (m.origin_regular && i == 0) ? h.u[i] : 2.0 * k[i] * fs[i] * cut[i];
    }
    return h;
}

// ---------------------------------------------------------------------------
// Linear flow d_t h = Delta_f h + 2 Rm * h

FlowTrace run_linear_flow(const FlowConfig& cfg, const DiagonalTensorField& h0) {
    validate(cfg);
    const std::size_t N_full = cfg.profile.size();
    if (h0.size() != N_full || h0.v.size() != N_full)
        throw Error(ErrorKind::GridMismatch, "initial field size differs from grid");
    const Window w = flow_window(cfg);
    for (std::size_t i = w.hi; i < N_full; ++i)
        if (h0.u[i] != 0.0 || h0.v[i] != 0.0)
            throw Error(ErrorKind::BoundarySupport, "initial perturbation must vanish from the window edge outward");
    // nodes past the window only enter through stencils at the edge
    const double r_work = cfg.profile.r()[std::min(N_full - 1, w.hi + 8)];
    const SolitonProfile p = r_work < cfg.profile.r().back() ? solitons::restrict_to(cfg.profile, r_work) : cfg.profile;
    const auto& m = p.metric;
    const std::size_t N = p.size();
    const int n = p.n();
    auto pad = [N_full](DiagonalTensorField x) {
        x.u.resize(N_full, 0.0);
        x.v.resize(N_full, 0.0);
        return x;
    };

    const ReducedOperator op(m, p.f, &p.curvature, Sector::DiagonalTensor, w);
    // 1-form companion: omega = div_f h solves d_t omega = Delta_f omega - (n-1) kappa^2 omega - (eps/2) omega,
    // omega(0) = 0, omega(r_hi) = div_f h(t)(r_hi).
    const ReducedOperator op1(m, p.f, nullptr, Sector::Scalar, w);
    const auto kap = geometry::kappa(m);
    std::vector<double> pot(N, 0.0);
    for (std::size_t i = 1; i < w.hi; ++i) {
        pot[i] = (n - 1) * kap[i] * kap[i] + 0.5 * p.epsilon;
    }
    auto sym1 = op1.symmetric();
    for (std::size_t k = 0; k < sym1.d11.size(); ++k) sym1.d11[k] += pot[op1.first() + k];
    const double bound = std::max(spectral::largest_eigenvalue(op.symmetric()), spectral::largest_eigenvalue(sym1));
    const std::size_t sub = substeps(cfg.sample_dt, cfg.dt_safety * 2.0 / bound);
    const double dt = cfg.sample_dt / static_cast<double>(sub);
    const std::size_t samples = static_cast<std::size_t>(std::llround(cfg.horizon / cfg.sample_dt));

    FlowTrace tr;
    tr.profile_id = p.id;
    tr.amplitude = sup_of(h0, n, N - 1);
    tr.dr = p.grid().max_spacing();
    tr.dt = dt;
    tr.window_hi = w.hi;
    tr.peclet = peclet(p, w.hi);
    const Meter meter(p, w.hi);

    DiagonalTensorField h = h0;
    h.u.resize(N);
    h.v.resize(N);
    auto omega = geometry::div_f(h, m, p.f);
    for (std::size_t i = w.hi + 1; i < N; ++i) omega[i] = 0.0;
    omega[0] = 0.0;
    const double div0 = meter.l2f(omega, 0, w.hi);

    auto rhs_h = [&](const DiagonalTensorField& x) {
        auto y = op.apply(x);
        for (std::size_t i = 0; i < N; ++i) {
            y.u[i] = -y.u[i];
            y.v[i] = -y.v[i];
        }
        return y;
    };
    auto rhs_w = [&](const std::vector<double>& x) {
        auto y = op1.apply(x);
        y[0] = 0.0;
        for (std::size_t i = 1; i < w.hi; ++i) y[i] = -y[i] - pot[i] * x[i];
        return y;
    };
    auto edge_divergence = [&](const DiagonalTensorField& x) { return geometry::div_f(x, m, p.f)[w.hi]; };

    const double cap = 10.0 * std::max(tr.amplitude, 1e-300);
    auto sample = [&](double t) {
        const Norms nm = meter(h);
        record(tr, t, nm);
        auto div = geometry::div_f(h, m, p.f);
        std::vector<double> diff(N, 0.0);
        for (std::size_t i = 1; i < w.hi; ++i) diff[i] = div[i] - omega[i];
        const double e = meter.l2f(diff, 1, w.hi - 1);
        tr.divf_consistency.push_back(div0 > 0.0 ? e / div0 : e);
        if (cfg.keep_snapshots) tr.snapshots.push_back({t, {}, {}, pad(h)});
    };

    sample(0.0);
    for (std::size_t k = 1; k <= samples; ++k) {
        for (std::size_t s = 0; s < sub; ++s) {
            // Heun
            const auto k1 = rhs_h(h);
            const auto q1 = rhs_w(omega);
            DiagonalTensorField h1 = h;
            auto w1 = omega;
            for (std::size_t i = 0; i < N; ++i) {
                h1.u[i] += dt * k1.u[i];
                h1.v[i] += dt * k1.v[i];
                w1[i] += dt * q1[i];
            }
            w1[w.hi] = edge_divergence(h1);
            const auto k2 = rhs_h(h1);
            const auto q2 = rhs_w(w1);
            for (std::size_t i = 0; i < N; ++i) {
                h.u[i] += 0.5 * dt * (k1.u[i] + k2.u[i]);
                h.v[i] += 0.5 * dt * (k1.v[i] + k2.v[i]);
                omega[i] += 0.5 * dt * (q1[i] + q2[i]);
            }
            omega[w.hi] = edge_divergence(h);
            ++tr.steps;
            const double s_now = sup_of(h, n, w.hi);
            if (!std::isfinite(s_now) || s_now > cap)
                throw Error(ErrorKind::NumericalFailure, "linear flow blew up at t=" +
                                                             std::to_string((static_cast<double>(k - 1) * sub + s + 1) * dt) +
                                                             " (dt=" + std::to_string(dt) + ")");
        }
        sample(static_cast<double>(k) * cfg.sample_dt);
    }
    tr.terminal = pad(h);
    return tr;
}

GronwallReport gronwall_check(const FlowTrace& tr, int epsilon, double lambda) {
    if (tr.times.empty()) throw Error(ErrorKind::Precondition, "empty trace");
    GronwallReport g;
    g.slack = 1.0 + 10.0 * tr.dr;
    const double d0 = tr.divf_norm.front(), e0 = tr.l2f_norm.front();
    const double eps = epsilon;
    g.divergence_pass = g.energy_pass = true;
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
        const double t = tr.times[k];
        const double dk = tr.divf_norm[k], ek = tr.l2f_norm[k];
        if (d0 > 0.0) {
            const double ratio = dk * dk / (std::exp(-eps * t) * d0 * d0);
            g.worst_divergence_ratio = std::max(g.worst_divergence_ratio, ratio);
        } else if (dk > 0.0) {
            g.worst_divergence_ratio = std::numeric_limits<double>::infinity();
        }
        const double mu = 2.0 * (lambda - eps);
        const double integral = std::abs(mu) < 1e-12 ? t : std::expm1(mu * t) / mu;
        const double bound = (e0 * e0 + d0 * d0 * integral) * std::exp(-2.0 * lambda * t);
        if (bound > 0.0)
            g.worst_energy_ratio = std::max(g.worst_energy_ratio, ek * ek / bound);
        else if (ek > 0.0)
            g.worst_energy_ratio = std::numeric_limits<double>::infinity();
    }
    for (double c : tr.divf_consistency) g.consistency = std::max(g.consistency, c);
    g.divergence_pass = g.worst_divergence_ratio <= g.slack;
    g.energy_pass = g.worst_energy_ratio <= g.slack;
    g.pass = g.divergence_pass && g.energy_pass;
    return g;
}

// ---------------------------------------------------------------------------
// DeTurck field

DeTurck deturck_field(const WarpedMetric& m, const WarpedMetric& bg) {
    if (!m.grid.same_nodes(bg.grid)) throw Error(ErrorKind::GridMismatch, "metric and background live on different grids");
    const std::size_t N = m.size();
    const int n = m.n();
    const auto& g = m.grid;
    const auto c = geometry::christoffels(m);
    const auto c0 = geometry::christoffels(bg);
    DeTurck out;
    out.coordinate.assign(N, 0.0);
    out.global.assign(N, 0.0);
    out.linearized.assign(N, 0.0);
    // coordinate: g^{rs} (Gamma^r_rs - Gamma0^r_rs); the sphere parts of both use the same round metric
    for (std::size_t i = 0; i < N; ++i) {
        if (m.origin_regular && i == 0) continue;
        const double xi2 = m.xi[i] * m.xi[i], psi2 = m.phi[i] * m.phi[i];
        out.coordinate[i] =
            (c.r_rr[i] - c0.r_rr[i]) / xi2 + (n - 1) * (c.r_sphere[i] - c0.r_sphere[i]) / psi2;
    }
    // global: g0-frame components u = g(e0, e0), v = g(e_i, e_i) and the reduced g0-covariant derivative
    std::vector<double> u(N), v(N);
    for (std::size_t i = 0; i < N; ++i) {
        u[i] = m.xi[i] * m.xi[i] / (bg.xi[i] * bg.xi[i]);
        v[i] = (bg.origin_regular && i == 0) ? u[i] : m.phi[i] * m.phi[i] / (bg.phi[i] * bg.phi[i]);
    }
    if (bg.origin_regular) v[0] = geometry::even_limit_at_origin(g, v);
    const auto du = g.d1(u, Parity::Even), dv = g.d1(v, Parity::Even);
    const auto k0 = geometry::kappa(bg);
    for (std::size_t i = 0; i < N; ++i) {
        if (bg.origin_regular && i == 0) continue;
        const double us = du[i] / bg.xi[i], vs = dv[i] / bg.xi[i];
        const double frame = (0.5 * us / u[i] + (n - 1) * ((u[i] - v[i]) * k0[i] - 0.5 * vs) / v[i]) / u[i];
        out.global[i] = frame / bg.xi[i];
        out.linearized[i] = (0.5 * us + (n - 1) * ((u[i] - v[i]) * k0[i] - 0.5 * vs)) / bg.xi[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// (MRHF) / (MRF)

namespace {

class ReducedRicciDeTurck {
public:
    ReducedRicciDeTurck(const SolitonProfile& p, std::size_t hi, bool deturck)
        : p_(p), g_(p.grid()), n_(p.n()), hi_(hi), deturck_(deturck) {
        const std::size_t N = p.size();
        const auto& g = g_;
        h_ = g.spacing(0);
        if (g.max_spacing() > h_ * (1.0 + 1e-9) || std::abs(g.spacing(N - 2) - h_) > 1e-9 * h_)
            throw Error(ErrorKind::Grid, "nonlinear flows need a uniform grid");
        fpp_ = g.d1(p.fp, Parity::Odd);
        dphi0_ = g.d1(p.metric.phi, Parity::Odd);
        d2phi0_ = g.d2(p.metric.phi, Parity::Odd);
        zero_.assign(2 * N, 0.0);
        std::vector<double> xi(p.metric.xi), psi(p.metric.phi);
        background_ = raw(xi, psi);
    }

    // Time derivative of (xi, psi) minus that of the background: g0 is an exact fixed point.
    void operator()(const std::vector<double>& xi, const std::vector<double>& psi, std::vector<double>& dxi,
                    std::vector<double>& dpsi) const {
        const auto r = raw(xi, psi);
        const std::size_t N = xi.size();
        dxi.assign(N, 0.0);
        dpsi.assign(N, 0.0);
        for (std::size_t i = 1; i < hi_; ++i) {
            dxi[i] = r[i] - background_[i];
            dpsi[i] = r[N + i] - background_[N + i];
        }
    }

    // Frame-norm sup of the unbalanced right-hand side at g0, as a symmetric 2-tensor.
    double stationarity() const {
        const std::size_t N = p_.size();
        double s = 0.0;
        for (std::size_t i = 1; i < hi_; ++i) {
            const double a = 2.0 * background_[i] / p_.metric.xi[i];
            const double b = 2.0 * background_[N + i] / p_.metric.phi[i];
            s = std::max(s, std::sqrt(a * a + (n_ - 1) * b * b));
        }
        return s;
    }

    // Imposes the origin and outer conditions.
    void close(std::vector<double>& xi, std::vector<double>& psi) const {
        xi[0] = geometry::even_limit_at_origin(g_, xi);
        psi[0] = 0.0;
        for (std::size_t i = hi_; i < xi.size(); ++i) {
            xi[i] = p_.metric.xi[i];
            psi[i] = p_.metric.phi[i];
        }
    }

private:
    // Upwinded second-order derivative for the transport term w q'.
    double upwind(const std::vector<double>& q, std::size_t i, double w, Parity par) const {
        const std::size_t N = q.size();
        auto at = [&](std::ptrdiff_t j) {
            if (j >= 0) return q[static_cast<std::size_t>(j)];
            return par == Parity::Odd ? -q[static_cast<std::size_t>(-j)] : q[static_cast<std::size_t>(-j)];
        };
        const auto ii = static_cast<std::ptrdiff_t>(i);
        if (w > 0.0 && i + 2 < N) return (-3.0 * q[i] + 4.0 * q[i + 1] - q[i + 2]) / (2.0 * h_);
        if (w < 0.0) return (3.0 * q[i] - 4.0 * at(ii - 1) + at(ii - 2)) / (2.0 * h_);
        return (at(ii + 1 < static_cast<std::ptrdiff_t>(N) ? ii + 1 : ii) - at(ii - 1)) /
               ((ii + 1 < static_cast<std::ptrdiff_t>(N) ? 2.0 : 1.0) * h_);
    }

    std::vector<double> raw(const std::vector<double>& xi, const std::vector<double>& psi) const {
        const std::size_t N = xi.size();
        const int n = n_;
        const double eps = p_.epsilon;
        std::vector<double> out(2 * N, 0.0);
        geometry::CurvatureData c;
        try {
            c = geometry::curvature(WarpedMetric(g_, xi, psi));
        } catch (const Error& e) {
            throw Error(ErrorKind::NumericalFailure, std::string("evolving metric degenerated: ") + e.what());
        }
        const auto& phi0 = p_.metric.phi;
        const auto x1 = g_.d1(xi, Parity::Even), x2 = g_.d2(xi, Parity::Even);
        const auto p1 = g_.d1(psi, Parity::Odd), p2 = g_.d2(psi, Parity::Odd);
        for (std::size_t i = 1; i < hi_; ++i) {
            double V = 0.0, dV = 0.0;
            if (deturck_) {
                const double x = xi[i], s = psi[i];
                const double x2i = x * x, s2 = s * s;
                V = x1[i] / (x2i * x) + (n - 1) * (phi0[i] * dphi0_[i] / s2 - p1[i] / (s * x2i));
                dV = x2[i] / (x2i * x) - 3.0 * x1[i] * x1[i] / (x2i * x2i) +
                     (n - 1) * ((dphi0_[i] * dphi0_[i] + phi0[i] * d2phi0_[i]) / s2 -
                                2.0 * phi0[i] * dphi0_[i] * p1[i] / (s2 * s) - p2[i] / (s * x2i) +
                                p1[i] * p1[i] / (s2 * x2i) + 2.0 * p1[i] * x1[i] / (s * x2i * x));
            }
            const double w = p_.fp[i] + V;
            const double dw = fpp_[i] + dV;
            out[i] = -c.ric_r[i] * xi[i] - 0.5 * eps * xi[i] + upwind(xi, i, w, Parity::Even) * w + xi[i] * dw;
            out[N + i] = -c.ric_s[i] * psi[i] - 0.5 * eps * psi[i] + upwind(psi, i, w, Parity::Odd) * w;
        }
        return out;
    }

    const SolitonProfile& p_;
    geometry::WarpedGrid g_;
    int n_;
    std::size_t hi_;
    bool deturck_;
    double h_ = 0.0;
    std::vector<double> fpp_, dphi0_, d2phi0_, zero_, background_;
};

DiagonalTensorField metric_perturbation(const SolitonProfile& p, const std::vector<double>& xi,
                                        const std::vector<double>& psi) {
    const std::size_t N = p.size();
    auto h = DiagonalTensorField::zeros(N);
    for (std::size_t i = 0; i < N; ++i) {
        h.u[i] = xi[i] * xi[i] - 1.0;
        if (i > 0) h.v[i] = psi[i] * psi[i] / (p.metric.phi[i] * p.metric.phi[i]) - 1.0;
    }
    h.v[0] = geometry::even_limit_at_origin(p.grid(), h.v);
    return h;
}

// Spectral radius of the Jacobian of the balanced right-hand side, by power iteration on
// finite-difference directional derivatives.
double jacobian_radius(const ReducedRicciDeTurck& F, const std::vector<double>& xi, const std::vector<double>& psi,
                       std::size_t hi, std::uint64_t seed) {
    const std::size_t N = xi.size();
    std::mt19937_64 rng(splitmix64(seed ^ 0x6a6163u));
    std::normal_distribution<double> G(0.0, 1.0);
    std::vector<double> ax(N, 0.0), ap(N, 0.0);
    for (std::size_t i = 1; i < hi; ++i) {
        ax[i] = G(rng);
        ap[i] = G(rng) * psi[i];
    }
    std::vector<double> f0x, f0p, f1x, f1p;
    auto x = xi, q = psi;
    F.close(x, q);
    F(x, q, f0x, f0p);
    double rho = 0.0;
    for (int it = 0; it < 60; ++it) {
        double nrm = 0.0;
        for (std::size_t i = 0; i < N; ++i) nrm = std::max(nrm, std::max(std::abs(ax[i]), std::abs(ap[i])));
        if (!(nrm > 0.0)) break;
        const double delta = 1e-7 / nrm;
        auto xd = x, qd = q;
        for (std::size_t i = 1; i < hi; ++i) {
            xd[i] += delta * ax[i];
            qd[i] += delta * ap[i];
        }
        F.close(xd, qd);
        F(xd, qd, f1x, f1p);
        for (std::size_t i = 1; i < hi; ++i) {
            ax[i] = (f1x[i] - f0x[i]) / delta;
            ap[i] = (f1p[i] - f0p[i]) / delta;
        }
        // growth in the sup norm
        double out = 0.0;
        for (std::size_t i = 1; i < hi; ++i) out = std::max(out, std::max(std::abs(ax[i]), std::abs(ap[i])));
        rho = out / nrm;
        for (std::size_t i = 1; i < hi; ++i) {
            ax[i] /= out;
            ap[i] /= out;
        }
    }
    return rho;
}

FlowTrace run_nonlinear(const FlowConfig& cfg, bool deturck) {
    validate(cfg);
    const auto& p0 = cfg.profile;
    const Window w = flow_window(cfg);
    // work on the nodes the window and its stencils see
    const double r_work = p0.r()[std::min(p0.size() - 1, w.hi + 8)];
    const SolitonProfile p = r_work < p0.r().back() ? solitons::restrict_to(p0, r_work) : p0;
    const std::size_t N = p.size();
    const int n = p.n();
    const std::size_t hi = w.hi;

    auto h0 = initial_perturbation(FlowConfig{p, cfg.r_window, cfg.dt_safety, cfg.horizon, cfg.sample_dt,
                                              cfg.perturbation, false});
    std::vector<double> xi(N), psi(N);
    for (std::size_t i = 0; i < N; ++i) {
        xi[i] = std::sqrt(1.0 + h0.u[i]);
        psi[i] = p.metric.phi[i] * std::sqrt(1.0 + h0.v[i]);
    }
    const ReducedRicciDeTurck F(p, hi, deturck);
    F.close(xi, psi);

    FlowTrace tr;
    tr.profile_id = p.id;
    tr.amplitude = cfg.perturbation.amplitude;
    tr.dr = p.grid().max_spacing();
    tr.window_hi = hi;
    tr.peclet = peclet(p, hi);
    tr.stationarity_residual = F.stationarity();

    const double rho = jacobian_radius(F, xi, psi, hi, cfg.perturbation.seed);
    const std::size_t sub = substeps(cfg.sample_dt, cfg.dt_safety * 2.0 / (1.2 * rho));
    const double dt = cfg.sample_dt / static_cast<double>(sub);
    tr.dt = dt;
    const std::size_t samples = static_cast<std::size_t>(std::llround(cfg.horizon / cfg.sample_dt));
    const Meter meter(p, hi);
    const double cap = 10.0 * std::max(sup_of(metric_perturbation(p, xi, psi), n, hi), 1e-12);

    auto sample = [&](double t) {
        record(tr, t, meter(metric_perturbation(p, xi, psi)));
        if (cfg.keep_snapshots) tr.snapshots.push_back({t, xi, psi, {}});
    };
    sample(0.0);
    std::vector<double> k1x, k1p, k2x, k2p;
    for (std::size_t k = 1; k <= samples; ++k) {
        for (std::size_t s = 0; s < sub; ++s) {
            F(xi, psi, k1x, k1p);
            auto x1 = xi, q1 = psi;
            for (std::size_t i = 1; i < hi; ++i) {
                x1[i] += dt * k1x[i];
                q1[i] += dt * k1p[i];
            }
            F.close(x1, q1);
            F(x1, q1, k2x, k2p);
            double dev = 0.0;
            for (std::size_t i = 1; i < hi; ++i) {
                xi[i] += 0.5 * dt * (k1x[i] + k2x[i]);
                psi[i] += 0.5 * dt * (k1p[i] + k2p[i]);
                dev = std::max(dev, std::max(std::abs(xi[i] * xi[i] - 1.0),
                                             std::abs(psi[i] * psi[i] / (p.metric.phi[i] * p.metric.phi[i]) - 1.0)));
            }
            F.close(xi, psi);
            ++tr.steps;
            if (!std::isfinite(dev) || dev > cap)
                throw Error(ErrorKind::NumericalFailure,
                            std::string(deturck ? "MRHF" : "MRF") + " blew up at t=" +
                                std::to_string((static_cast<double>(k - 1) * sub + s + 1) * dt) + " (dt=" + std::to_string(dt) + ")");
        }
        sample(static_cast<double>(k) * cfg.sample_dt);
    }
    auto term = metric_perturbation(p, xi, psi);
    // report on the caller's grid
    term.u.resize(p0.size(), 0.0);
    term.v.resize(p0.size(), 0.0);
    tr.terminal = std::move(term);
    return tr;
}

} // namespace

FlowTrace run_mrhf(const FlowConfig& cfg) { return run_nonlinear(cfg, true); }
FlowTrace run_mrf(const FlowConfig& cfg) { return run_nonlinear(cfg, false); }

// ---------------------------------------------------------------------------
// Fits and checks

namespace {

RateFit fit_rate(const FlowTrace& tr, const std::vector<double>& y, double power) {
    RateFit fit;
    if (tr.times.empty()) throw Error(ErrorKind::Precondition, "empty trace");
    if (!(y.front() > 0.0)) {
        fit.vacuous = true;
        return fit;
    }
    const double t0 = 0.2 * tr.times.back();
    std::vector<double> t, ly;
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
        if (tr.times[k] < t0 || !(y[k] > 0.0) || !std::isfinite(y[k])) continue;
        t.push_back(tr.times[k]);
        ly.push_back(power * std::log(y[k]));
    }
    if (t.size() < 3) throw Error(ErrorKind::Precondition, "fewer than 3 samples past the transient");
    fit.samples = t.size();
    fit.rate = -fit::least_squares(t, ly).slope;
    return fit;
}

} // namespace

RateFit fit_l2f_rate(const FlowTrace& tr) { return fit_rate(tr, tr.l2f_norm, 2.0); }
RateFit fit_sup_rate(const FlowTrace& tr) { return fit_rate(tr, tr.sup_norm, 1.0); }

LyapunovReport lyapunov_check(const FlowTrace& tr, double lambda) {
    LyapunovReport rep;
    rep.fit = fit_l2f_rate(tr);
    rep.band_lo = 0.5 * 2.0 * lambda;
    rep.band_hi = 1.1 * 2.0 * lambda;
    rep.pass = rep.fit.vacuous || (rep.fit.rate >= rep.band_lo && rep.fit.rate <= rep.band_hi);
    return rep;
}

SupDecayReport sup_decay_check(const FlowTrace& tr, double lambda_tilde, int n) {
    if (tr.times.empty()) throw Error(ErrorKind::Precondition, "empty trace");
    SupDecayReport rep;
    const double rate = lambda_tilde / (n + 2);
    const double t0 = 0.2 * tr.times.back();
    std::size_t k0 = 0;
    while (k0 + 1 < tr.times.size() && tr.times[k0] < t0) ++k0;
    rep.constant = tr.sup_norm[k0] * std::exp(rate * tr.times[k0]);
    const double slack = 1.0 + 10.0 * tr.dr;
    rep.pass = true;
    if (!(rep.constant > 0.0)) {
        rep.pass = std::all_of(tr.sup_norm.begin() + static_cast<std::ptrdiff_t>(k0), tr.sup_norm.end(),
                               [](double s) { return s == 0.0; });
        return rep;
    }
    for (std::size_t k = k0; k < tr.times.size(); ++k) {
        const double ratio = tr.sup_norm[k] / (rep.constant * std::exp(-rate * tr.times[k]));
        if (!std::isfinite(ratio)) rep.worst_ratio = std::numeric_limits<double>::infinity();
        else rep.worst_ratio = std::max(rep.worst_ratio, ratio);
    }
    // the sup must also keep decaying: a flat trace meets the bound only at t0
    const double last = tr.sup_norm.back() / (rep.constant * std::exp(-rate * tr.times.back()));
    rep.pass = rep.worst_ratio <= slack && last <= slack && tr.times.back() > tr.times[k0];
    return rep;
}

BlowupReport derivative_blowup_check(const FlowTrace& tr) {
    if (tr.times.size() < 4) throw Error(ErrorKind::Precondition, "trace too short for the derivative check");
    BlowupReport rep;
    const double t1 = std::min(1.0, tr.times.back());
    std::vector<double> lt, lg;
    bool finite = true;
    for (std::size_t k = 1; k < tr.times.size() && tr.times[k] <= t1 * (1.0 + 1e-12); ++k) {
        const double g = tr.grad_sup[k];
        if (!std::isfinite(g)) finite = false;
        rep.constant = std::max(rep.constant, tr.times[k] * g);
        if (g > 0.0) {
            lt.push_back(std::log(tr.times[k]));
            lg.push_back(std::log(g));
        }
    }
    if (lt.size() >= 3) rep.exponent = -fit::least_squares(lt, lg).slope;
    rep.pass = finite && std::isfinite(rep.constant) && rep.exponent <= 1.1;
    return rep;
}

// ---------------------------------------------------------------------------
// Flow equivalence

namespace {

using Spline = boost::math::interpolators::cardinal_cubic_b_spline<double>;

struct Frame {
    Spline xi, psi;
};

Frame spline_frame(const std::vector<double>& xi, const std::vector<double>& psi, double h) {
    return {Spline(xi.begin(), xi.end(), 0.0, h, 0.0), Spline(psi.begin(), psi.end(), 0.0, h)};
}

} // namespace

EquivalenceReport flow_equivalence_transform(const FlowTrace& mrf, const SolitonProfile& p,
                                             std::span<const double> t_samples) {
    if (mrf.snapshots.empty() || mrf.snapshots.front().xi.empty())
        throw Error(ErrorKind::Precondition, "flow equivalence needs an (MRF) trace with snapshots");
    const auto& snaps = mrf.snapshots;
    const std::size_t Nw = snaps.front().xi.size();
    const double h = p.grid().spacing(0);
    const int n = p.n();
    std::vector<Frame> frames;
    frames.reserve(snaps.size());
    for (const auto& s : snaps) frames.push_back(spline_frame(s.xi, s.psi, h));

    const Spline fp(p.fp.begin(), p.fp.end(), 0.0, h);
    const double r_window = p.r()[mrf.window_hi];
    const double tau_max = snaps.back().t;

    using State = std::array<double, 2>; // rho, J
    namespace ode = boost::numeric::odeint;
    auto characteristic = [&](double r, double s) {
        State x{r, 1.0};
        if (s <= 0.0) return x;
        ode::runge_kutta4<State> stepper;
        const int steps = std::max(16, static_cast<int>(std::ceil(s / 0.01)));
        ode::integrate_const(
            stepper,
            [&](const State& y, State& dy, double) {
                const double rho = std::clamp(y[0], 0.0, p.r().back());
                dy[0] = -fp(rho);
                dy[1] = -fp.prime(rho) * y[1];
            },
            x, 0.0, s, s / steps);
        return x;
    };

    EquivalenceReport rep;
    // verification nodes: r <= r_window and the characteristic stays inside the flow window
    double s_max = 0.0;
    for (double t : t_samples) s_max = std::max(s_max, std::log1p(t + 1e-3 * (1.0 + t)));
    if (s_max > tau_max + 1e-12) throw Error(ErrorKind::Precondition, "t samples exceed the (MRF) horizon");
    std::size_t M = mrf.window_hi;
    while (M > 8) {
        const double rho = characteristic(p.r()[M], s_max)[0];
        if (rho <= r_window && rho >= 0.0) break;
        --M;
        rep.reduced_window = true;
    }
    if (M <= 8) throw Error(ErrorKind::Precondition, "characteristics leave the flow window");
    // curvature stencils reach 4 nodes out; keep a margin for the one-sided rows
    const std::size_t hi_ver = M;
    const std::size_t Mgrid = std::min(Nw, M + 1);
    rep.r_verified = p.r()[hi_ver - 4];
    std::vector<double> rr(p.r().begin(), p.r().begin() + static_cast<std::ptrdiff_t>(Mgrid));
    const geometry::WarpedGrid grid(n, rr);

    auto evaluate = [&](double t, std::vector<double>& xt, std::vector<double>& pt) {
        const double s = std::log1p(t);
        std::size_t k = 0;
        while (k + 1 < snaps.size() && snaps[k + 1].t < s) ++k;
        const std::size_t k2 = std::min(k + 1, snaps.size() - 1);
        const double span = snaps[k2].t - snaps[k].t;
        const double theta = span > 0.0 ? std::clamp((s - snaps[k].t) / span, 0.0, 1.0) : 0.0;
        xt.assign(Mgrid, 0.0);
        pt.assign(Mgrid, 0.0);
        const double sc = std::sqrt(1.0 + t);
        for (std::size_t i = 0; i < Mgrid; ++i) {
            const auto c = characteristic(rr[i], s);
            const double rho = c[0];
            const double x = (1.0 - theta) * frames[k].xi(rho) + theta * frames[k2].xi(rho);
            const double q = (1.0 - theta) * frames[k].psi(rho) + theta * frames[k2].psi(rho);
            xt[i] = sc * x * c[1];
            pt[i] = i == 0 ? 0.0 : sc * q;
        }
    };

    for (double t : t_samples) {
        const double dtau = 1e-3 * (1.0 + t);
        std::vector<double> x0, q0, xm, qm, xp, qp;
        evaluate(t, x0, q0);
        evaluate(std::max(t - dtau, 0.0), xm, qm);
        evaluate(t + dtau, xp, qp);
        const double span = (t + dtau) - std::max(t - dtau, 0.0);
        const auto c = geometry::curvature(WarpedMetric(grid, x0, q0));
        double worst = 0.0;
        for (std::size_t i = 1; i + 4 < Mgrid; ++i) {
            const double er = (std::log(xp[i] * xp[i]) - std::log(xm[i] * xm[i])) / span + 2.0 * c.ric_r[i];
            const double es = (std::log(qp[i] * qp[i]) - std::log(qm[i] * qm[i])) / span + 2.0 * c.ric_s[i];
            worst = std::max(worst, std::max(std::abs(er), std::abs(es)));
        }
        rep.times.push_back(t);
        rep.residual.push_back(worst);
        rep.max_residual = std::max(rep.max_residual, worst);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Output

std::string to_csv(const FlowTrace& tr) {
    std::ostringstream os;
    os << "t,l2f_norm,sup_norm,divf_norm,grad_sup\n" << std::setprecision(12);
    for (std::size_t k = 0; k < tr.times.size(); ++k)
        os << tr.times[k] << ',' << tr.l2f_norm[k] << ',' << tr.sup_norm[k] << ',' << tr.divf_norm[k] << ','
           << tr.grad_sup[k] << '\n';
    return os.str();
}

std::string to_json(const FlowSummary& s) {
    nlohmann::ordered_json j;
    j["profile_id"] = s.profile_id;
    j["amplitude"] = s.amplitude;
    j["fitted_l2f_rate"] = s.fitted_l2f_rate;
    j["fitted_sup_rate"] = s.fitted_sup_rate;
    j["lyapunov_pass"] = s.lyapunov_pass ? nlohmann::ordered_json(*s.lyapunov_pass) : nlohmann::ordered_json(nullptr);
    j["gronwall_pass"] = s.gronwall_pass ? nlohmann::ordered_json(*s.gronwall_pass) : nlohmann::ordered_json(nullptr);
    j["stationarity_residual"] = s.stationarity_residual;
    return j.dump(2);
}

} // namespace solstab::flow
