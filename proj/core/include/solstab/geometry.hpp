#pragma once

// Warped metrics g = xi(r)^2 dr^2 + phi(r)^2 g_{S^{n-1}} sampled on a radial grid.
// Tensor components are taken in the orthonormal frame {d/ds, e_i}, ds = xi dr.
// See docs/conventions.md for signs and the reduced covariant-derivative formulas.

#include <cstddef>
#include <memory>
#include <span>
#include <utility>
#include <vector>

namespace solstab::geometry {

// Behaviour of a field under r -> -r; selects ghost values at a regular origin.
enum class Parity { None, Even, Odd };

class WarpedGrid {
public:
    WarpedGrid(int n, std::vector<double> r);
    static WarpedGrid uniform(int n, double r0, double r1, std::size_t N);

    int n() const { return n_; }
    std::size_t size() const { return r_.size(); }
    const std::vector<double>& r() const { return r_; }
    double operator[](std::size_t i) const { return r_[i]; }
    bool starts_at_origin() const { return r_.front() == 0.0; }

    // r[i+1] - r[i]
    double spacing(std::size_t i) const { return r_[i + 1] - r_[i]; }
    // dual cell width (trapezoid weight)
    double cell(std::size_t i) const;
    double max_spacing() const;

    // 9-point finite differences; eighth order on uniform grids, one-sided at the ends.
    std::vector<double> d1(std::span<const double> y, Parity p) const;
    std::vector<double> d2(std::span<const double> y, Parity p) const;

    bool same_nodes(const WarpedGrid& o) const { return n_ == o.n_ && r_ == o.r_; }

    struct Stencils;

private:
    int n_;
    std::vector<double> r_;
    std::shared_ptr<const Stencils> st_;
};

struct WarpedMetric {
    WarpedMetric(WarpedGrid g, std::vector<double> xi, std::vector<double> phi);

    WarpedGrid grid;
    std::vector<double> xi;
    std::vector<double> phi;
    bool origin_regular;

    int n() const { return grid.n(); }
    std::size_t size() const { return grid.size(); }
};

struct CurvatureData {
    int n = 0;
    std::vector<double> a, b, R, ric_r, ric_s;
};

struct Christoffels {
    std::vector<double> r_rr;     // xi'/xi
    std::vector<double> r_sphere; // -phi phi'/xi^2, coefficient of the round metric
    std::vector<double> t_rt;     // phi'/phi (infinite at a regular origin)
};

struct DiagonalTensorField {
    std::vector<double> u; // rr component
    std::vector<double> v; // each sphere direction

    DiagonalTensorField() = default;
    DiagonalTensorField(std::vector<double> u_, std::vector<double> v_) : u(std::move(u_)), v(std::move(v_)) {}
    static DiagonalTensorField zeros(std::size_t N) { return {std::vector<double>(N, 0.0), std::vector<double>(N, 0.0)}; }

    std::size_t size() const { return u.size(); }
    double norm2(std::size_t i, int n) const { return u[i] * u[i] + (n - 1) * v[i] * v[i]; }
    double trace(std::size_t i, int n) const { return u[i] + (n - 1) * v[i]; }
};

struct WeightedMeasure {
    std::vector<double> w;

    // w_i = e^{f_i} xi_i phi_i^{n-1} cell_i; at a regular origin the cell integral
    // e^{f_0} xi_0^n (dr/2)^n / n replaces the vanishing nodal value.
    static WeightedMeasure make(const WarpedMetric& m, std::span<const double> f);
    double integrate(std::span<const double> g) const;
};

CurvatureData curvature(const WarpedMetric& m);
Christoffels christoffels(const WarpedMetric& m);
DiagonalTensorField rm_action(const CurvatureData& c, const DiagonalTensorField& h);

// phi_s / phi with phi_s = phi'/xi; +inf at a regular origin.
std::vector<double> kappa(const WarpedMetric& m);

// Radial frame component of div_f h = div h + h(grad f).
std::vector<double> div_f(const DiagonalTensorField& h, const WarpedMetric& m, std::span<const double> f);

// Pointwise |grad h|^2 and |Cod h|^2 from the reduced covariant derivative.
std::vector<double> grad_norm2(const DiagonalTensorField& h, const WarpedMetric& m);
std::vector<double> codazzi_norm2(const DiagonalTensorField& h, const WarpedMetric& m);

// Pointwise <Rm * h, h>.
std::vector<double> rm_pairing(const CurvatureData& c, const DiagonalTensorField& h);

struct QuadraticForm {
    double gradient;  // int |grad h|^2 dmu_f
    double curvature; // int 2 Rm(h,h) dmu_f
};

// h must vanish at the outer node and, away from a regular origin, at the first node.
QuadraticForm quadratic_form(const DiagonalTensorField& h, const WarpedMetric& m, std::span<const double> f,
                             const CurvatureData& c);

// Even extrapolation to r = 0 from nodes 1..3 (Lagrange in r^2).
double even_limit_at_origin(const WarpedGrid& g, std::span<const double> y);

} // namespace solstab::geometry
