#include "solstab/geometry.hpp"

#include "solstab/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

namespace solstab::geometry {

namespace {

// Near a regular origin b = (1 - phi_s^2)/phi^2 divides the stencil error by r^2, which
// costs two orders; 9 points keep R accurate there. The width is uniform so that the
// truncation error stays smooth across rows (R is differentiated again).
constexpr int kWidth = 9;

// Fornberg's recursion: weights c[k*m + j] of the k-th derivative at x0 on nodes x[0..m).
void fornberg(double x0, const double* x, int m, int maxd, double* c) {
    std::fill(c, c + (maxd + 1) * m, 0.0);
    double c1 = 1.0, c4 = x[0] - x0;
    c[0] = 1.0;
    for (int i = 1; i < m; ++i) {
        const int mn = std::min(i, maxd);
        double c2 = 1.0;
        const double c5 = c4;
        c4 = x[i] - x0;
        for (int j = 0; j < i; ++j) {
            const double c3 = x[i] - x[j];
            c2 *= c3;
            if (j == i - 1) {
                for (int k = mn; k >= 1; --k)
                    c[k * m + i] = c1 * (k * c[(k - 1) * m + i - 1] - c5 * c[k * m + i - 1]) / c2;
                c[i] = -c1 * c5 * c[i - 1] / c2;
            }
            for (int k = mn; k >= 1; --k) c[k * m + j] = (c4 * c[k * m + j] - k * c[(k - 1) * m + j]) / c3;
            c[j] = c4 * c[j] / c3;
        }
        c1 = c2;
    }
}

} // namespace

struct WarpedGrid::Stencils {
    struct Row {
        std::array<int, kWidth> idx; // negative index -k: mirror image of node k
        std::array<double, kWidth> w1, w2;
    };
    std::vector<Row> plain; // one-sided near both ends
    std::vector<Row> ghost; // mirrored across r = 0 near the origin
};

WarpedGrid::WarpedGrid(int n, std::vector<double> r) : n_(n), r_(std::move(r)) {
    if (n_ < 2) throw Error(ErrorKind::Grid, "dimension n must be >= 2, got " + std::to_string(n_));
    if (r_.size() < 16) throw Error(ErrorKind::Grid, "grid needs at least 16 nodes, got " + std::to_string(r_.size()));
    if (r_.front() < 0.0) throw Error(ErrorKind::Grid, "grid must start at r >= 0");
    for (std::size_t i = 1; i < r_.size(); ++i)
        if (!(r_[i] > r_[i - 1])) throw Error(ErrorKind::Grid, "grid nodes must be strictly increasing");

    auto st = std::make_shared<Stencils>();
    const int N = static_cast<int>(r_.size());
    auto coord = [&](int k) { return k >= 0 ? r_[k] : -r_[-k]; };
    auto build = [&](bool mirror) {
        std::vector<Stencils::Row> rows(N);
        for (int i = 0; i < N; ++i) {
            int start = i - kWidth / 2;
            if (!mirror) start = std::max(start, 0);
            start = std::min(start, N - kWidth);
            Stencils::Row row;
            std::array<double, kWidth> xs;
            for (int j = 0; j < kWidth; ++j) {
                row.idx[j] = start + j;
                xs[j] = coord(start + j);
            }
            std::array<double, 3 * kWidth> c;
            fornberg(r_[i], xs.data(), kWidth, 2, c.data());
            for (int j = 0; j < kWidth; ++j) {
                row.w1[j] = c[kWidth + j];
                row.w2[j] = c[2 * kWidth + j];
            }
            rows[i] = row;
        }
        return rows;
    };
    st->plain = build(false);
    if (starts_at_origin()) st->ghost = build(true);
    st_ = std::move(st);
}

WarpedGrid WarpedGrid::uniform(int n, double r0, double r1, std::size_t N) {
    if (N < 2 || !(r1 > r0)) throw Error(ErrorKind::Grid, "uniform grid needs N >= 2 and r1 > r0");
    std::vector<double> r(N);
    const double h = (r1 - r0) / static_cast<double>(N - 1);
    for (std::size_t i = 0; i < N; ++i) r[i] = r0 + h * static_cast<double>(i);
    r.back() = r1;
    return WarpedGrid(n, std::move(r));
}

double WarpedGrid::cell(std::size_t i) const {
    const std::size_t N = r_.size();
    if (i == 0) return 0.5 * (r_[1] - r_[0]);
    if (i == N - 1) return 0.5 * (r_[N - 1] - r_[N - 2]);
    return 0.5 * (r_[i + 1] - r_[i - 1]);
}

double WarpedGrid::max_spacing() const {
    double m = 0.0;
    for (std::size_t i = 0; i + 1 < r_.size(); ++i) m = std::max(m, spacing(i));
    return m;
}

namespace {

std::vector<double> apply(const std::vector<WarpedGrid::Stencils::Row>& rows, std::span<const double> y, Parity p,
                          bool second) {
    const double sign = p == Parity::Odd ? -1.0 : 1.0;
    std::vector<double> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& row = rows[i];
        const auto& w = second ? row.w2 : row.w1;
        double acc = 0.0;
        for (int j = 0; j < kWidth; ++j) {
            const int k = row.idx[j];
            acc += w[j] * (k >= 0 ? y[k] : sign * y[-k]);
        }
        out[i] = acc;
    }
    return out;
}

} // namespace

std::vector<double> WarpedGrid::d1(std::span<const double> y, Parity p) const {
    if (y.size() != r_.size()) throw Error(ErrorKind::GridMismatch, "field size differs from grid size");
    const bool mirror = starts_at_origin() && p != Parity::None;
    return apply(mirror ? st_->ghost : st_->plain, y, p, false);
}

std::vector<double> WarpedGrid::d2(std::span<const double> y, Parity p) const {
    if (y.size() != r_.size()) throw Error(ErrorKind::GridMismatch, "field size differs from grid size");
    const bool mirror = starts_at_origin() && p != Parity::None;
    return apply(mirror ? st_->ghost : st_->plain, y, p, true);
}

double even_limit_at_origin(const WarpedGrid& g, std::span<const double> y) {
    const double x[3] = {g[1] * g[1], g[2] * g[2], g[3] * g[3]};
    double acc = 0.0;
    for (int k = 0; k < 3; ++k) {
        double l = 1.0;
        for (int j = 0; j < 3; ++j)
            if (j != k) l *= (0.0 - x[j]) / (x[k] - x[j]);
        acc += l * y[k + 1];
    }
    return acc;
}

WarpedMetric::WarpedMetric(WarpedGrid g, std::vector<double> xi_, std::vector<double> phi_)
    : grid(std::move(g)), xi(std::move(xi_)), phi(std::move(phi_)), origin_regular(grid.starts_at_origin()) {
    const std::size_t N = grid.size();
    if (xi.size() != N || phi.size() != N) throw Error(ErrorKind::GridMismatch, "metric arrays differ from grid size");
    for (std::size_t i = 0; i < N; ++i) {
        if (!(xi[i] > 0.0) || !std::isfinite(xi[i]))
            throw Error(ErrorKind::InvalidMetric, "xi must be positive, fails at r=" + std::to_string(grid[i]));
        if (grid[i] > 0.0 && (!(phi[i] > 0.0) || !std::isfinite(phi[i])))
            throw Error(ErrorKind::InvalidMetric, "phi must be positive for r>0, fails at r=" + std::to_string(grid[i]));
    }
    if (origin_regular) {
        if (std::abs(phi[0]) > 1e-12) throw Error(ErrorKind::InvalidMetric, "phi(0) must vanish at a regular origin");
        const double slope = grid.d1(phi, Parity::Odd)[0] / xi[0];
        if (std::abs(slope - 1.0) > 1e-2)
            throw Error(ErrorKind::InvalidMetric, "phi'(0)/xi(0) must be 1 at a regular origin, got " + std::to_string(slope));
    }
}

CurvatureData curvature(const WarpedMetric& m) {
    const auto& g = m.grid;
    const std::size_t N = m.size();
    const int n = m.n();
    const auto p1 = g.d1(m.phi, Parity::Odd);
    const auto p2 = g.d2(m.phi, Parity::Odd);
    const auto x1 = g.d1(m.xi, Parity::Even);
    CurvatureData c;
    c.n = n;
    c.a.resize(N);
    c.b.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
        if (m.origin_regular && i == 0) continue;
        const double xi = m.xi[i], phi = m.phi[i];
        const double ps = p1[i] / xi;
        const double dps = p2[i] / xi - p1[i] * x1[i] / (xi * xi);
        c.a[i] = -dps / (xi * phi);
        c.b[i] = (1.0 - ps * ps) / (phi * phi);
    }
    if (m.origin_regular) {
        c.a[0] = even_limit_at_origin(g, c.a);
        c.b[0] = even_limit_at_origin(g, c.b);
    }
    c.R.resize(N);
    c.ric_r.resize(N);
    c.ric_s.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
        c.R[i] = 2.0 * (n - 1) * c.a[i] + (n - 1) * (n - 2) * c.b[i];
        c.ric_r[i] = (n - 1) * c.a[i];
        c.ric_s[i] = c.a[i] + (n - 2) * c.b[i];
    }
    return c;
}

Christoffels christoffels(const WarpedMetric& m) {
    const auto& g = m.grid;
    const std::size_t N = m.size();
    const auto p1 = g.d1(m.phi, Parity::Odd);
    const auto x1 = g.d1(m.xi, Parity::Even);
    Christoffels out;
    out.r_rr.resize(N);
    out.r_sphere.resize(N);
    out.t_rt.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
        out.r_rr[i] = x1[i] / m.xi[i];
        out.r_sphere[i] = -m.phi[i] * p1[i] / (m.xi[i] * m.xi[i]);
        out.t_rt[i] = (m.origin_regular && i == 0) ? std::numeric_limits<double>::infinity() : p1[i] / m.phi[i];
    }
    return out;
}

DiagonalTensorField rm_action(const CurvatureData& c, const DiagonalTensorField& h) {
    const std::size_t N = h.size();
    if (c.a.size() != N || h.v.size() != N) throw Error(ErrorKind::GridMismatch, "curvature and tensor sizes differ");
    const int n = c.n;
    auto out = DiagonalTensorField::zeros(N);
    for (std::size_t i = 0; i < N; ++i) {
        out.u[i] = (n - 1) * c.a[i] * h.v[i];
        out.v[i] = c.a[i] * h.u[i] + (n - 2) * c.b[i] * h.v[i];
    }
    return out;
}

std::vector<double> rm_pairing(const CurvatureData& c, const DiagonalTensorField& h) {
    const std::size_t N = h.size();
    if (c.a.size() != N) throw Error(ErrorKind::GridMismatch, "curvature and tensor sizes differ");
    const int n = c.n;
    std::vector<double> out(N);
    for (std::size_t i = 0; i < N; ++i)
        out[i] = 2.0 * (n - 1) * c.a[i] * h.u[i] * h.v[i] + (n - 1) * (n - 2) * c.b[i] * h.v[i] * h.v[i];
    return out;
}

std::vector<double> kappa(const WarpedMetric& m) {
    const auto p1 = m.grid.d1(m.phi, Parity::Odd);
    std::vector<double> k(m.size());
    for (std::size_t i = 0; i < m.size(); ++i)
        k[i] = (m.origin_regular && i == 0) ? std::numeric_limits<double>::infinity() : p1[i] / (m.xi[i] * m.phi[i]);
    return k;
}

namespace {

void check_same(const DiagonalTensorField& h, const WarpedMetric& m) {
    if (h.u.size() != m.size() || h.v.size() != m.size())
        throw Error(ErrorKind::GridMismatch, "tensor field size differs from metric grid");
}

} // namespace

std::vector<double> div_f(const DiagonalTensorField& h, const WarpedMetric& m, std::span<const double> f) {
    check_same(h, m);
    if (f.size() != m.size()) throw Error(ErrorKind::GridMismatch, "potential size differs from metric grid");
    const int n = m.n();
    const auto du = m.grid.d1(h.u, Parity::Even);
    const auto df = m.grid.d1(f, Parity::Even);
    const auto k = kappa(m);
    std::vector<double> out(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (m.origin_regular && i == 0) {
            out[i] = 0.0;
            continue;
        }
        out[i] = du[i] / m.xi[i] + (n - 1) * k[i] * (h.u[i] - h.v[i]) + df[i] / m.xi[i] * h.u[i];
    }
    return out;
}

std::vector<double> grad_norm2(const DiagonalTensorField& h, const WarpedMetric& m) {
    check_same(h, m);
    const int n = m.n();
    const auto du = m.grid.d1(h.u, Parity::Even);
    const auto dv = m.grid.d1(h.v, Parity::Even);
    const auto k = kappa(m);
    std::vector<double> out(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (m.origin_regular && i == 0) continue;
        const double us = du[i] / m.xi[i], vs = dv[i] / m.xi[i], w = k[i] * (h.u[i] - h.v[i]);
        out[i] = us * us + (n - 1) * vs * vs + 2.0 * (n - 1) * w * w;
    }
    if (m.origin_regular) out[0] = even_limit_at_origin(m.grid, out);
    return out;
}

std::vector<double> codazzi_norm2(const DiagonalTensorField& h, const WarpedMetric& m) {
    check_same(h, m);
    const int n = m.n();
    const auto dv = m.grid.d1(h.v, Parity::Even);
    const auto k = kappa(m);
    std::vector<double> out(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (m.origin_regular && i == 0) continue;
        const double c = dv[i] / m.xi[i] - k[i] * (h.u[i] - h.v[i]);
        out[i] = 2.0 * (n - 1) * c * c;
    }
    if (m.origin_regular) out[0] = even_limit_at_origin(m.grid, out);
    return out;
}

WeightedMeasure WeightedMeasure::make(const WarpedMetric& m, std::span<const double> f) {
    if (f.size() != m.size()) throw Error(ErrorKind::GridMismatch, "potential size differs from metric grid");
    const int n = m.n();
    WeightedMeasure mu;
    mu.w.resize(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (m.origin_regular && i == 0) {
            const double half = 0.5 * m.grid.spacing(0);
            mu.w[i] = std::exp(f[0]) * std::pow(m.xi[0] * half, n) / n;
        } else {
            mu.w[i] = std::exp(f[i]) * m.xi[i] * std::pow(m.phi[i], n - 1) * m.grid.cell(i);
        }
        if (!std::isfinite(mu.w[i]))
            throw Error(ErrorKind::NumericalFailure, "weighted measure overflows at r=" + std::to_string(m.grid[i]));
    }
    return mu;
}

double WeightedMeasure::integrate(std::span<const double> g) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * g[i];
    return acc;
}

QuadraticForm quadratic_form(const DiagonalTensorField& h, const WarpedMetric& m, std::span<const double> f,
                             const CurvatureData& c) {
    check_same(h, m);
    double scale = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) scale = std::max({scale, std::abs(h.u[i]), std::abs(h.v[i])});
    auto nonzero = [&](std::size_t i) { return std::abs(h.u[i]) > 1e-14 * scale || std::abs(h.v[i]) > 1e-14 * scale; };
    if (scale > 0.0 && (nonzero(h.size() - 1) || (!m.origin_regular && nonzero(0))))
        throw Error(ErrorKind::BoundarySupport, "tensor field must vanish at the window ends");
    const auto mu = WeightedMeasure::make(m, f);
    const auto g2 = grad_norm2(h, m);
    auto rm = rm_pairing(c, h);
    for (auto& x : rm) x *= 2.0;
    return {mu.integrate(g2), mu.integrate(rm)};
}

} // namespace solstab::geometry
