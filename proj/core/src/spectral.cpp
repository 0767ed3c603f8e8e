#include "solstab/spectral.hpp"

#include "solstab/error.hpp"
#include "solstab/fit.hpp"
#include "solstab/rng.hpp"

#include <Eigen/Dense>
#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace solstab::spectral {

using geometry::DiagonalTensorField;
using geometry::Parity;
using solitons::SolitonProfile;

std::string to_string(Sector s) { return s == Sector::Scalar ? "scalar" : "diagonal_tensor"; }

Sector parse_sector(const std::string& s) {
    if (s == "scalar") return Sector::Scalar;
    if (s == "diagonal_tensor" || s == "tensor") return Sector::DiagonalTensor;
    throw Error(ErrorKind::InvalidConfig, "unknown sector '" + s + "'");
}

Window window_upto(const geometry::WarpedGrid& g, double r_hi) {
    const auto& r = g.r();
    auto it = std::upper_bound(r.begin(), r.end(), r_hi * (1.0 + 1e-12));
    if (it == r.begin()) throw Error(ErrorKind::Grid, "window radius below the first node");
    return {0, static_cast<std::size_t>(it - r.begin()) - 1};
}

Window scale_window(const geometry::WarpedGrid& g, Window w, double factor) {
    const double r_hi = g[w.lo] + factor * (g[w.hi] - g[w.lo]);
    const auto& r = g.r();
    auto it = std::upper_bound(r.begin() + static_cast<std::ptrdiff_t>(w.lo), r.begin() + static_cast<std::ptrdiff_t>(w.hi) + 1,
                               r_hi * (1.0 + 1e-12));
    return {w.lo, static_cast<std::size_t>(it - r.begin()) - 1};
}

// ---------------------------------------------------------------------------
// Assembly

ReducedOperator::ReducedOperator(const geometry::WarpedMetric& m, std::span<const double> f,
                                 const geometry::CurvatureData* curvature, Sector sector, Window window)
    : sector_(sector), window_(window), n_(m.n()) {
    const std::size_t N = m.size();
    if (f.size() != N) throw Error(ErrorKind::GridMismatch, "potential size differs from grid size");
    if (curvature && curvature->a.size() != N) throw Error(ErrorKind::GridMismatch, "curvature size differs from grid size");
    if (window.hi >= N || window.hi < window.lo + 2)
        throw Error(ErrorKind::Grid, "window [" + std::to_string(window.lo) + ", " + std::to_string(window.hi) +
                                         "] has no interior on a grid of " + std::to_string(N) + " nodes");
    const bool closure = window.lo == 0 && m.origin_regular;
    first_ = closure ? 0 : window.lo + 1;
    if (closure && sector == Sector::DiagonalTensor && n_ < 3)
        throw Error(ErrorKind::IncompatibleDimension, "tensor sector with a regular origin needs n >= 3");

    const auto& g = m.grid;
    const int n = n_;
    lw_.assign(N, std::numeric_limits<double>::quiet_NaN());
    lflux_.assign(N, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t j = first_; j < window.hi; ++j) {
        if (closure && j == 0)
            lw_[j] = f[0] + n * std::log(0.5 * m.xi[0] * g.spacing(0)) - std::log(static_cast<double>(n));
        else
            lw_[j] = f[j] + std::log(m.xi[j]) + (n - 1) * std::log(m.phi[j]) + std::log(g.cell(j));
    }
    for (std::size_t j = window.lo; j < window.hi; ++j) {
        lflux_[j] = 0.5 * (f[j] + f[j + 1]) + (n - 1) * std::log(0.5 * (m.phi[j] + m.phi[j + 1])) -
                    std::log(0.5 * (m.xi[j] + m.xi[j + 1])) - std::log(g.spacing(j));
        if (!std::isfinite(lflux_[j])) throw Error(ErrorKind::InvalidMetric, "degenerate edge flux at r=" + std::to_string(g[j]));
    }
    if (sector == Sector::DiagonalTensor) {
        const auto k = geometry::kappa(m);
        puu_.assign(N, 0.0);
        puv_.assign(N, 0.0);
        pvv_.assign(N, 0.0);
        for (std::size_t j = first_; j < window.hi; ++j) {
            double k2;
            if (closure && j == 0) {
                // average of 1/(xi r)^2 over the origin cell against r^{n-1} dr
                const double half = 0.5 * g.spacing(0) * m.xi[0];
                k2 = n / ((n - 2) * half * half);
            } else {
                k2 = k[j] * k[j];
            }
            const double a = curvature ? curvature->a[j] : 0.0;
            const double b = curvature ? curvature->b[j] : 0.0;
            puu_[j] = 2.0 * (n - 1) * k2;
            puv_[j] = -2.0 * (n - 1) * k2 - 2.0 * (n - 1) * a;
            pvv_[j] = 2.0 * (n - 1) * k2 - 2.0 * (n - 1) * (n - 2) * b;
        }
    }
}

std::vector<double> ReducedOperator::apply(std::span<const double> x) const {
    if (x.size() != lw_.size()) throw Error(ErrorKind::GridMismatch, "field size differs from operator grid");
    std::vector<double> out(x.size(), 0.0);
    for (std::size_t j = first_; j < window_.hi; ++j) {
        double acc = std::exp(lflux_[j] - lw_[j]) * (x[j] - x[j + 1]);
        if (j > window_.lo) acc += std::exp(lflux_[j - 1] - lw_[j]) * (x[j] - x[j - 1]);
        out[j] = acc;
    }
    return out;
}

DiagonalTensorField ReducedOperator::apply(const DiagonalTensorField& h) const {
    if (h.u.size() != lw_.size() || h.v.size() != lw_.size())
        throw Error(ErrorKind::GridMismatch, "field size differs from operator grid");
    DiagonalTensorField out{apply(h.u), apply(h.v)};
    if (sector_ == Sector::DiagonalTensor) {
        const double nm1 = n_ - 1;
        for (std::size_t j = first_; j < window_.hi; ++j) {
            out.u[j] += puu_[j] * h.u[j] + puv_[j] * h.v[j];
            out.v[j] += (puv_[j] * h.u[j] + pvv_[j] * h.v[j]) / nm1;
        }
    }
    return out;
}

ReducedOperator::Symmetric ReducedOperator::symmetric() const {
    Symmetric a;
    a.m = block();
    const std::size_t B = window_.hi - first_;
    a.d11.resize(B);
    a.s.resize(B > 0 ? B - 1 : 0);
    if (a.m == 2) {
        a.d12.resize(B);
        a.d22.resize(B);
    }
    const double nm1 = n_ - 1;
    for (std::size_t k = 0; k < B; ++k) {
        const std::size_t j = first_ + k;
        double diag = std::exp(lflux_[j] - lw_[j]);
        if (j > window_.lo) diag += std::exp(lflux_[j - 1] - lw_[j]);
        a.d11[k] = diag;
        if (a.m == 2) {
            a.d11[k] += puu_[j];
            a.d12[k] = puv_[j] / std::sqrt(nm1);
            a.d22[k] = diag + pvv_[j] / nm1;
        }
        if (k + 1 < B) a.s[k] = std::exp(lflux_[j] - 0.5 * lw_[j] - 0.5 * lw_[j + 1]);
    }
    return a;
}

namespace {

// Row sums |offdiag| per block row.
double row_radius(const ReducedOperator::Symmetric& a, std::size_t k) {
    double r = 0.0;
    if (k > 0) r += a.s[k - 1];
    if (k < a.s.size()) r += a.s[k];
    if (a.m == 2) r += std::abs(a.d12[k]);
    return r;
}

} // namespace

double ReducedOperator::gershgorin_upper() const {
    const auto a = symmetric();
    double up = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < a.d11.size(); ++k) {
        up = std::max(up, a.d11[k] + row_radius(a, k));
        if (a.m == 2) up = std::max(up, a.d22[k] + row_radius(a, k));
    }
    return up;
}

double ReducedOperator::gershgorin_lower() const {
    const auto a = symmetric();
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < a.d11.size(); ++k) {
        lo = std::min(lo, a.d11[k] - row_radius(a, k));
        if (a.m == 2) lo = std::min(lo, a.d22[k] - row_radius(a, k));
    }
    return lo;
}

std::vector<double> ReducedOperator::dense() const {
    const auto a = symmetric();
    const std::size_t M = unknowns(), m = a.m;
    std::vector<double> A(M * M, 0.0);
    for (std::size_t k = 0; k < a.d11.size(); ++k) {
        const std::size_t i = k * m;
        A[i * M + i] = a.d11[k];
        if (m == 2) {
            A[i * M + i + 1] = A[(i + 1) * M + i] = a.d12[k];
            A[(i + 1) * M + i + 1] = a.d22[k];
        }
        if (k < a.s.size())
            for (std::size_t c = 0; c < m; ++c) A[(i + c) * M + i + m + c] = A[(i + m + c) * M + i + c] = -a.s[k];
    }
    return A;
}

// ---------------------------------------------------------------------------
// Eigensolvers

namespace {

constexpr double kTiny = 1e-300;

struct Block2 {
    double a = 0.0, b = 0.0, c = 0.0; // [[a, b], [b, c]]
    double det() const { return a * c - b * b; }
};

Block2 inverse(const Block2& e) {
    double d = e.det();
    if (d == 0.0) d = kTiny;
    return {e.c / d, -e.b / d, e.a / d};
}

// y = E^{-1} x for the stored inverse
void mul(const Block2& inv, const double* x, double* y, int m) {
    if (m == 1) {
        y[0] = inv.a * x[0];
    } else {
        const double x0 = x[0], x1 = x[1];
        y[0] = inv.a * x0 + inv.b * x1;
        y[1] = inv.b * x0 + inv.c * x1;
    }
}

Block2 diag_block(const ReducedOperator::Symmetric& a, std::size_t k, double sigma) {
    if (a.m == 1) return {a.d11[k] - sigma, 0.0, 0.0};
    return {a.d11[k] - sigma, a.d12[k], a.d22[k] - sigma};
}

// Block LDL^T of A - sigma I; stores inverse pivots.
std::vector<Block2> factor(const ReducedOperator::Symmetric& a, double sigma) {
    const std::size_t B = a.d11.size();
    std::vector<Block2> inv(B);
    for (std::size_t k = 0; k < B; ++k) {
        Block2 e = diag_block(a, k, sigma);
        if (k > 0) {
            const double s2 = a.s[k - 1] * a.s[k - 1];
            const Block2& p = inv[k - 1];
            e.a -= s2 * p.a;
            if (a.m == 2) {
                e.b -= s2 * p.b;
                e.c -= s2 * p.c;
            }
        }
        if (a.m == 1) {
            inv[k] = {1.0 / (e.a == 0.0 ? kTiny : e.a), 0.0, 0.0};
        } else {
            inv[k] = inverse(e);
        }
    }
    return inv;
}

std::vector<double> solve(const ReducedOperator::Symmetric& a, const std::vector<Block2>& inv, std::vector<double> y) {
    const std::size_t B = a.d11.size();
    const int m = a.m;
    std::vector<double> w(y.size()), t(2);
    // L z = y
    for (std::size_t k = 1; k < B; ++k) {
        mul(inv[k - 1], &y[(k - 1) * m], t.data(), m);
        for (int c = 0; c < m; ++c) y[k * m + c] += a.s[k - 1] * t[c];
    }
    // D w = z
    for (std::size_t k = 0; k < B; ++k) mul(inv[k], &y[k * m], &w[k * m], m);
    // L^T x = w
    for (std::size_t k = B - 1; k-- > 0;) {
        mul(inv[k], &w[(k + 1) * m], t.data(), m);
        for (int c = 0; c < m; ++c) w[k * m + c] += a.s[k] * t[c];
    }
    return w;
}

std::vector<double> multiply(const ReducedOperator::Symmetric& a, const std::vector<double>& x) {
    const std::size_t B = a.d11.size();
    const int m = a.m;
    std::vector<double> y(x.size());
    for (std::size_t k = 0; k < B; ++k) {
        if (m == 1) {
            y[k] = a.d11[k] * x[k];
        } else {
            y[2 * k] = a.d11[k] * x[2 * k] + a.d12[k] * x[2 * k + 1];
            y[2 * k + 1] = a.d12[k] * x[2 * k] + a.d22[k] * x[2 * k + 1];
        }
        for (int c = 0; c < m; ++c) {
            if (k > 0) y[k * m + c] -= a.s[k - 1] * x[(k - 1) * m + c];
            if (k + 1 < B) y[k * m + c] -= a.s[k] * x[(k + 1) * m + c];
        }
    }
    return y;
}

double dot(const std::vector<double>& x, const std::vector<double>& y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
    return acc;
}

void rayleigh(const ReducedOperator::Symmetric& a, Eigenpair& e) {
    const auto Ay = multiply(a, e.y);
    e.lambda = dot(e.y, Ay);
    double r2 = 0.0;
    for (std::size_t i = 0; i < Ay.size(); ++i) {
        const double d = Ay[i] - e.lambda * e.y[i];
        r2 += d * d;
    }
    e.residual = std::sqrt(r2);
}

void fix_sign(std::vector<double>& y) {
    std::size_t imax = 0;
    for (std::size_t i = 1; i < y.size(); ++i)
        if (std::abs(y[i]) > std::abs(y[imax])) imax = i;
    if (y[imax] < 0.0)
        for (auto& x : y) x = -x;
}

Eigenpair lowest_dense(const ReducedOperator& op, const ReducedOperator::Symmetric& a) {
    const std::size_t M = op.unknowns();
    const auto A = op.dense();
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> map(A.data(), M, M);
    const Eigen::MatrixXd dense_a = map;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense_a);
    if (es.info() != Eigen::Success) throw Error(ErrorKind::NumericalFailure, "dense eigensolver did not converge");
    Eigenpair e;
    e.y.resize(M);
    for (std::size_t i = 0; i < M; ++i) e.y[i] = es.eigenvectors()(static_cast<Eigen::Index>(i), 0);
    fix_sign(e.y);
    rayleigh(a, e);
    e.iterations = 1;
    e.method = "dense";
    return e;
}

} // namespace

std::size_t count_below(const ReducedOperator::Symmetric& a, double sigma) {
    const std::size_t B = a.d11.size();
    std::size_t count = 0;
    Block2 prev_inv;
    for (std::size_t k = 0; k < B; ++k) {
        Block2 e = diag_block(a, k, sigma);
        if (k > 0) {
            const double s2 = a.s[k - 1] * a.s[k - 1];
            e.a -= s2 * prev_inv.a;
            if (a.m == 2) {
                e.b -= s2 * prev_inv.b;
                e.c -= s2 * prev_inv.c;
            }
        }
        if (a.m == 1) {
            if (e.a == 0.0) e.a = -kTiny;
            if (e.a < 0.0) ++count;
            prev_inv = {1.0 / e.a, 0.0, 0.0};
        } else {
            double d = e.det();
            if (d == 0.0) d = -kTiny;
            if (d < 0.0)
                ++count;
            else if (e.a < 0.0)
                count += 2;
            prev_inv = {e.c / d, -e.b / d, e.a / d};
        }
    }
    return count;
}

double largest_eigenvalue(const ReducedOperator::Symmetric& a, double rel_tol) {
    const std::size_t B = a.d11.size();
    if (B == 0) throw Error(ErrorKind::Grid, "empty spectral window");
    const std::size_t M = B * static_cast<std::size_t>(a.m);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t k = 0; k < B; ++k) {
        const double r = row_radius(a, k);
        lo = std::min(lo, a.d11[k] - r);
        hi = std::max(hi, a.d11[k] + r);
        if (a.m == 2) {
            lo = std::min(lo, a.d22[k] - r);
            hi = std::max(hi, a.d22[k] + r);
        }
    }
    const double scale = std::max(std::abs(lo), std::abs(hi));
    while (hi - lo > rel_tol * scale) {
        const double mid = 0.5 * (lo + hi);
        if (count_below(a, mid) >= M)
            hi = mid;
        else
            lo = mid;
    }
    return hi;
}

Eigenpair lowest(const ReducedOperator& op, double tolerance, Method method) {
    const auto a = op.symmetric();
    const std::size_t M = op.unknowns();
    if (M == 0) throw Error(ErrorKind::Grid, "empty spectral window");
    if (method == Method::Dense) return lowest_dense(op, a);

    double lo = op.gershgorin_lower(), hi = op.gershgorin_upper();
    const double scale = std::max(std::abs(lo), std::abs(hi));
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi || hi - lo <= 4e-16 * scale) break;
        if (count_below(a, mid) >= 1)
            hi = mid;
        else
            lo = mid;
    }

    const double target = tolerance * (1.0 + std::abs(lo));
    const double sigma = lo - std::max(1e-3 * target, 1e-14 * scale);
    const auto inv = factor(a, sigma);
    Eigenpair e;
    e.y.resize(M);
    for (std::size_t i = 0; i < M; ++i) e.y[i] = 1.0 + 1e-3 * std::sin(1.0 + static_cast<double>(i));
    std::ostringstream log;
    for (int it = 1; it <= 40; ++it) {
        auto x = solve(a, inv, e.y);
        const double nx = std::sqrt(dot(x, x));
        if (!std::isfinite(nx) || nx == 0.0) break;
        for (std::size_t i = 0; i < M; ++i) e.y[i] = x[i] / nx;
        rayleigh(a, e);
        e.iterations = it;
        log << " it" << it << ": lambda=" << e.lambda << " res=" << e.residual << ";";
        if (e.residual <= target) {
            fix_sign(e.y);
            e.method = "bisection+inverse-iteration";
            return e;
        }
    }
    if (method == Method::Auto && M <= 400) {
        auto d = lowest_dense(op, a);
        if (d.residual <= target) return d;
    }
    throw Error(ErrorKind::NumericalFailure,
                "inverse iteration did not reach residual " + std::to_string(target) + ":" + log.str());
}

namespace {

SpectralResult to_result(const ReducedOperator& op, const Eigenpair& e, std::size_t N) {
    SpectralResult r;
    r.sector = op.sector();
    r.lambda_min = e.lambda;
    r.residual = e.residual;
    r.norm = std::sqrt(dot(e.y, e.y));
    r.window = op.window();
    r.iterations = e.iterations;
    r.method = e.method;
    const std::size_t first = op.first(), hi = op.window().hi;
    if (op.sector() == Sector::Scalar) {
        r.scalar.assign(N, 0.0);
        for (std::size_t j = first; j < hi; ++j) r.scalar[j] = e.y[j - first] * std::exp(-0.5 * op.log_weight(j));
    } else {
        r.tensor = DiagonalTensorField::zeros(N);
        const double c = 1.0 / std::sqrt(static_cast<double>(op.n() - 1));
        for (std::size_t j = first; j < hi; ++j) {
            const double s = std::exp(-0.5 * op.log_weight(j));
            r.tensor.u[j] = e.y[2 * (j - first)] * s;
            r.tensor.v[j] = e.y[2 * (j - first) + 1] * s * c;
        }
    }
    return r;
}

SpectralResult bottom(const SpectralProblem& prob, Method method) {
    const auto& p = prob.profile;
    const geometry::CurvatureData* c = prob.sector == Sector::DiagonalTensor ? &p.curvature : nullptr;
    ReducedOperator op(p.metric, p.f, c, prob.sector, prob.window);
    auto res = to_result(op, lowest(op, prob.tolerance, method), p.size());
    const Window small = scale_window(p.grid(), prob.window, 0.8);
    ReducedOperator op_small(p.metric, p.f, c, prob.sector, small);
    res.window_sensitivity = std::abs(res.lambda_min - lowest(op_small, prob.tolerance, method).lambda);
    return res;
}

} // namespace

SpectralResult bottom_scalar(const SpectralProblem& prob, Method method) {
    if (prob.sector != Sector::Scalar) throw Error(ErrorKind::Precondition, "bottom_scalar needs the scalar sector");
    return bottom(prob, method);
}

SpectralResult bottom_lichnerowicz(const SpectralProblem& prob, Method method) {
    if (prob.sector != Sector::DiagonalTensor)
        throw Error(ErrorKind::Precondition, "bottom_lichnerowicz needs the diagonal tensor sector");
    return bottom(prob, method);
}

// ---------------------------------------------------------------------------
// Test fields

namespace {

// Integral of the quadratic B-spline on [0, 3], rescaled to t in [0, 1]: C^2, piecewise cubic.
double taper_step(double t) {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    const double x = 3.0 * t;
    if (x < 1.0) return x * x * x / 6.0;
    if (x < 2.0) return 0.5 + (-x * x * x / 3.0 + 1.5 * x * x - 1.5 * x);
    const double y = 3.0 - x;
    return 1.0 - y * y * y / 6.0;
}

} // namespace

std::vector<double> bump(const geometry::WarpedGrid& g, double a, double b, double taper) {
    if (!(b > a) || !(taper > 0.0) || 2.0 * taper > b - a + 1e-15)
        throw Error(ErrorKind::Precondition, "bump needs a < b and 0 < taper <= (b - a)/2");
    std::vector<double> out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double r = g[i];
        out[i] = std::min(taper_step((r - a) / taper), taper_step((b - r) / taper));
    }
    return out;
}

BumpSpec random_bump_spec(std::mt19937_64& rng, double r_lo, double r_hi) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const double span = r_hi - r_lo;
    BumpSpec s;
    s.a = r_lo + 0.8 * span * U(rng);
    const double len = (0.1 + 0.9 * U(rng)) * (r_hi - s.a);
    s.b = s.a + len;
    s.taper = (0.1 + 0.4 * U(rng)) * len;
    return s;
}

// ---------------------------------------------------------------------------
// Hardy inequalities

double hardy_weight(const SolitonProfile& p, double alpha, std::size_t i) {
    const double R = p.curvature.R[i];
    if (p.epsilon == 1) return R + 0.5 * p.n();
    return alpha * alpha * R + p.lambda_g * alpha * (1.0 - alpha);
}

namespace {

void check_hardy_pre(const SolitonProfile& p, double alpha) {
    if (p.epsilon == 0) {
        if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(ErrorKind::Precondition, "steady Hardy check needs alpha in (0, 1]");
        if (!(std::abs(p.lambda_g - 1.0) < 1e-6)) throw Error(ErrorKind::Precondition, "steady Hardy check needs lambda(g) = 1");
    }
}

Window full_window(const SolitonProfile& p) { return {0, p.size() - 1}; }

} // namespace

double hardy_margin(const SolitonProfile& p, double alpha, std::span<const double> phi) {
    check_hardy_pre(p, alpha);
    const std::size_t N = p.size();
    if (phi.size() != N) throw Error(ErrorKind::GridMismatch, "test function size differs from grid");
    if (phi[N - 1] != 0.0 || (!p.metric.origin_regular && phi[0] != 0.0))
        throw Error(ErrorKind::BoundarySupport, "test function must vanish at the grid ends");
    ReducedOperator op(p.metric, p.f, nullptr, Sector::Scalar, full_window(p));
    double shift = -std::numeric_limits<double>::infinity();
    for (std::size_t j = op.first(); j < N - 1; ++j) shift = std::max(shift, op.log_weight(j));
    // G = sum_j w_j phi_j (K phi)_j / w_j, evaluated through the strong form
    const auto Kphi = op.apply(phi);
    double G = 0.0, W = 0.0, M = 0.0;
    for (std::size_t j = op.first(); j < N - 1; ++j) {
        const double w = std::exp(op.log_weight(j) - shift);
        G += w * phi[j] * Kphi[j];
        W += w * hardy_weight(p, alpha, j) * phi[j] * phi[j];
        M += w * phi[j] * phi[j];
    }
    if (G + M == 0.0) return 0.0;
    return (G - W) / (G + M);
}

HardyResult hardy_check(const SolitonProfile& p, double alpha, std::uint64_t seed, std::size_t count, double quadrature_tol) {
    check_hardy_pre(p, alpha);
    SeedStream seeds(seed);
    auto rng = seeds.split();
    const auto& r = p.r();
    HardyResult res;
    res.seed = seed;
    res.count = count;
    res.min_margin = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < count; ++t) {
        const auto s = random_bump_spec(rng, r[1], r[p.size() - 2]);
        const auto phi = bump(p.grid(), s.a, s.b, s.taper);
        res.min_margin = std::min(res.min_margin, hardy_margin(p, alpha, phi));
    }
    if (count == 0) res.min_margin = 0.0;
    res.pass = res.min_margin >= -quadrature_tol;
    return res;
}

double hardy_lower_bound(const SolitonProfile& p, std::size_t upto) {
    upto = std::min(upto, p.size());
    if (p.epsilon == 1) {
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < upto; ++i) m = std::min(m, hardy_weight(p, 0.0, i));
        return m;
    }
    double best = 0.0;
    for (int k = 1; k <= 1000; ++k) {
        const double alpha = k / 1000.0;
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < upto; ++i) m = std::min(m, alpha * alpha * p.curvature.R[i] + p.lambda_g * alpha * (1.0 - alpha));
        best = std::max(best, m);
    }
    return best;
}

double bochner_margin(const SolitonProfile& p, std::size_t upto) {
    if (p.epsilon != 1) return std::numeric_limits<double>::quiet_NaN();
    upto = std::min(upto, p.size());
    double infR = std::numeric_limits<double>::infinity(), rm = 0.0;
    for (std::size_t i = 0; i < upto; ++i) {
        infR = std::min(infR, p.curvature.R[i]);
        rm = std::max({rm, std::abs(p.curvature.a[i]), std::abs(p.curvature.b[i])});
    }
    return infR + 0.5 * p.n() - 2.0 * rm;
}

// ---------------------------------------------------------------------------
// Identities

namespace {

bool vanishes(const DiagonalTensorField& h, std::size_t i) { return h.u[i] == 0.0 && h.v[i] == 0.0; }

// e^{f - max f} times the lumped weight; ratios and relative residuals are unaffected.
std::vector<double> shifted_measure(const geometry::WarpedMetric& m, std::span<const double> f) {
    const double fmax = *std::max_element(f.begin(), f.end());
    std::vector<double> g(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) g[i] = f[i] - fmax;
    return geometry::WeightedMeasure::make(m, g).w;
}

double integrate(const std::vector<double>& w, const std::vector<double>& g) {
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * g[i];
    return acc;
}

} // namespace

double conjugate_schrodinger(const SolitonProfile& p, const DiagonalTensorField& h) {
    const std::size_t N = p.size();
    if (h.size() != N || h.v.size() != N) throw Error(ErrorKind::GridMismatch, "tensor field size differs from grid");
    if (!vanishes(h, 0) || !vanishes(h, 1) || !vanishes(h, N - 1))
        throw Error(ErrorKind::BoundarySupport, "h must vanish at the first two and the last node");
    const Window w{1, N - 1};
    ReducedOperator weighted(p.metric, p.f, &p.curvature, Sector::DiagonalTensor, w);
    const std::vector<double> zero(N, 0.0);
    ReducedOperator flat(p.metric, zero, &p.curvature, Sector::DiagonalTensor, w);

    auto damped = h;
    for (std::size_t i = 0; i < N; ++i) {
        const double e = std::exp(-0.5 * p.f[i]);
        damped.u[i] *= e;
        damped.v[i] *= e;
    }
    const auto left = weighted.apply(damped);
    const auto right = flat.apply(h);
    const auto lap = solitons::laplacian_f(p);
    const int n = p.n();
    double acc = 0.0;
    for (std::size_t j = 2; j + 1 < N; ++j) {
        const double fs = p.fp[j] / p.metric.xi[j];
        const double V = 0.5 * lap[j] + 0.25 * fs * fs;
        const double e = std::exp(0.5 * p.f[j]);
        const double du = e * left.u[j] - (right.u[j] + V * h.u[j]);
        const double dv = e * left.v[j] - (right.v[j] + V * h.v[j]);
        acc += std::exp(flat.log_weight(j)) * (du * du + (n - 1) * dv * dv);
    }
    return std::sqrt(acc);
}

KernelResidual kernel_oracle(const SolitonProfile& p) {
    const auto& m = p.metric;
    const std::size_t N = p.size();
    const int n = p.n();
    std::vector<double> fs(N);
    for (std::size_t i = 0; i < N; ++i) fs[i] = p.fp[i] / m.xi[i];
    const auto dfs = m.grid.d1(fs, Parity::Odd);
    const auto k = geometry::kappa(m);
    DiagonalTensorField lie = DiagonalTensorField::zeros(N);
    for (std::size_t i = 0; i < N; ++i) {
        lie.u[i] = 2.0 * dfs[i] / m.xi[i];
        lie.v[i] = (m.origin_regular && i == 0) ? lie.u[i] : 2.0 * k[i] * fs[i];
    }
    const bool closure = m.origin_regular && n >= 3;
    ReducedOperator op(m, p.f, &p.curvature, Sector::DiagonalTensor, Window{closure ? 0u : 1u, N - 1});
    const auto Lk = op.apply(lie);

    double shift = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 1; j + 1 < N; ++j) shift = std::max(shift, op.log_weight(j));
    KernelResidual res;
    double num = 0.0, den = 0.0;
    for (std::size_t j = std::max<std::size_t>(op.first(), 1); j + 1 < N; ++j) {
        const double w = std::exp(op.log_weight(j) - shift);
        const double r2 = Lk.u[j] * Lk.u[j] + (n - 1) * Lk.v[j] * Lk.v[j];
        num += w * r2;
        den += w * lie.norm2(j, n);
        res.sup = std::max(res.sup, std::sqrt(r2));
    }
    res.relative = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
    res.absolute = std::sqrt(num) * std::exp(0.5 * shift);
    return res;
}

IdentityResidual koiso_identity_residual(const SolitonProfile& p, const DiagonalTensorField& T) {
    if (p.epsilon != 1) throw Error(ErrorKind::Precondition, "the Koiso identity is stated for expanding solitons");
    const std::size_t N = p.size();
    if (T.size() != N || T.v.size() != N) throw Error(ErrorKind::GridMismatch, "tensor field size differs from grid");
    if (!vanishes(T, N - 1) || (!p.metric.origin_regular && !vanishes(T, 0)))
        throw Error(ErrorKind::BoundarySupport, "T must vanish at the grid ends");
    const auto& m = p.metric;
    const int n = p.n();
    const auto w = shifted_measure(m, p.f);
    const auto g2 = geometry::grad_norm2(T, m);
    const auto cod = geometry::codazzi_norm2(T, m);
    auto div = geometry::div_f(T, m, p.f);
    for (auto& x : div) x *= x;
    std::vector<double> t2(N);
    for (std::size_t i = 0; i < N; ++i) t2[i] = T.norm2(i, n);
    const auto rm = geometry::rm_pairing(p.curvature, T);
    const double G = integrate(w, g2), C = integrate(w, cod), D = integrate(w, div), M = integrate(w, t2),
                 P = integrate(w, rm);
    IdentityResidual res;
    res.residual = std::abs(2.0 * G - (C + 2.0 * D + M + 2.0 * P));
    res.scale = 2.0 * G + C + 2.0 * D + M + 2.0 * std::abs(P);
    return res;
}

IdentityResidual donnelly_garofalo_residual(const SolitonProfile& p, std::span<const double> psi) {
    const std::size_t N = p.size();
    if (psi.size() != N) throw Error(ErrorKind::GridMismatch, "scalar field size differs from grid");
    if (psi[N - 1] != 0.0 || (!p.metric.origin_regular && psi[0] != 0.0))
        throw Error(ErrorKind::BoundarySupport, "psi must vanish at the grid ends");
    const auto& m = p.metric;
    const int n = p.n();
    std::vector<double> fs(N), ps(N);
    const auto dpsi = m.grid.d1(psi, Parity::Even);
    for (std::size_t i = 0; i < N; ++i) {
        fs[i] = p.fp[i] / m.xi[i];
        ps[i] = dpsi[i] / m.xi[i];
    }
    const auto dfs = m.grid.d1(fs, Parity::Odd);
    const auto dps = m.grid.d1(ps, Parity::Odd);
    const auto k = geometry::kappa(m);
    const auto lapf = solitons::laplacian_f(p);
    std::vector<double> t1(N), t2(N), t3(N);
    for (std::size_t i = 0; i < N; ++i) {
        const bool origin = m.origin_regular && i == 0;
        const double pss = dps[i] / m.xi[i], fss = dfs[i] / m.xi[i];
        const double lap_psi = origin ? n * pss : pss + (n - 1) * k[i] * ps[i] + fs[i] * ps[i];
        const double lapf_f = lapf[i] + fs[i] * fs[i];
        t1[i] = 2.0 * fs[i] * ps[i] * lap_psi;
        t2[i] = 2.0 * fss * ps[i] * ps[i];
        t3[i] = -ps[i] * ps[i] * lapf_f;
    }
    const auto w = shifted_measure(m, p.f);
    const double I1 = integrate(w, t1), I2 = integrate(w, t2), I3 = integrate(w, t3);
    auto abs_int = [&](const std::vector<double>& t) {
        double acc = 0.0;
        for (std::size_t i = 0; i < N; ++i) acc += w[i] * std::abs(t[i]);
        return acc;
    };
    IdentityResidual res;
    res.residual = std::abs(I1 + I2 + I3);
    res.scale = abs_int(t1) + abs_int(t2) + abs_int(t3);
    return res;
}

// ---------------------------------------------------------------------------
// Agmon decay

AgmonResult agmon_decay_check(const SpectralResult& result, const SolitonProfile& p, double alpha) {
    AgmonResult out;
    double rate;
    if (p.epsilon == 1) {
        if (!(alpha >= 0.0 && alpha < 1.0)) throw Error(ErrorKind::Precondition, "expanding Agmon check needs alpha in [0, 1)");
        out.threshold = -alpha;
        rate = alpha;
    } else {
        const double ess = hardy_lower_bound(p, result.window.hi + 1);
        if (!(ess > 0.0)) throw Error(ErrorKind::Precondition, "steady Agmon check needs a positive lambda_ess proxy");
        out.alpha_eps = std::sqrt(std::max(ess - result.lambda_min - alpha, 0.0));
        out.threshold = -(out.alpha_eps + 0.5);
        rate = out.alpha_eps + 0.5;
    }
    const std::size_t N = p.size();
    const int n = p.n();
    auto mag = [&](std::size_t i) {
        if (result.sector == Sector::Scalar) return std::abs(result.scalar.at(i));
        return std::sqrt(result.tensor.norm2(i, n));
    };
    if (result.sector == Sector::Scalar ? result.scalar.size() != N : result.tensor.size() != N)
        throw Error(ErrorKind::GridMismatch, "eigenfield size differs from profile grid");
    const auto& r = p.r();
    const Window w = result.window;
    const double r_mid = 0.5 * (r[w.lo] + r[w.hi]);
    const double r_cut = r[w.lo] + 0.95 * (r[w.hi] - r[w.lo]);
    std::vector<double> x, y;
    for (std::size_t i = w.lo; i < w.hi; ++i) {
        if (r[i] < r_mid || r[i] > r_cut) continue;
        const double h = mag(i);
        if (!(h > 1e-300)) {
            out.beyond_range = true;
            continue;
        }
        x.push_back(p.f[i]);
        y.push_back(std::log(h));
        out.weighted_sup = std::max(out.weighted_sup, std::exp(rate * p.f[i] + std::log(h)));
    }
    if (out.beyond_range || x.size() < 4) {
        out.beyond_range = true;
        out.pass = true;
        return out;
    }
    out.slope = fit::median_slope(x, y).slope;
    out.pass = out.slope <= out.threshold;
    return out;
}

// ---------------------------------------------------------------------------
// Reports

SpectrumReport make_report(const SpectralResult& r, const SolitonProfile& p, std::uint64_t seed) {
    SpectrumReport rep;
    rep.sector = r.sector;
    rep.lambda_min = r.lambda_min;
    rep.residual = r.residual;
    rep.r_lo = p.r()[r.window.lo];
    rep.r_hi = p.r()[r.window.hi];
    rep.window_sensitivity = r.window_sensitivity;
    rep.hardy_lower_bound = hardy_lower_bound(p, r.window.hi + 1);
    rep.bochner_margin = bochner_margin(p, r.window.hi + 1);
    rep.seed = seed;
    return rep;
}

std::string to_json(const SpectrumReport& r) {
    auto num = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
    nlohmann::ordered_json j;
    j["sector"] = to_string(r.sector);
    j["lambda_min"] = num(r.lambda_min);
    j["residual"] = num(r.residual);
    j["window"] = {r.r_lo, r.r_hi};
    j["window_sensitivity"] = num(r.window_sensitivity);
    j["hardy_lower_bound"] = num(r.hardy_lower_bound);
    j["bochner_margin"] = num(r.bochner_margin);
    j["seed"] = r.seed;
    return j.dump(2);
}

} // namespace solstab::spectral
