#pragma once

// Weighted operators on rotationally symmetric fields and their spectral bottoms.
//
// Discretization: the quadratic form is assembled edge by edge (3-point flux
// e^f phi^{n-1}/xi at midpoints) against the lumped measure of WeightedMeasure.
// The strong operator at node j is (K x)_j / w_j. Windows are inclusive node ranges
// [lo, hi]; node hi is Dirichlet, node lo is Dirichlet unless lo = 0 on a grid with
// a regular origin, where the origin cell closes the problem.

#include "solstab/geometry.hpp"
#include "solstab/solitons.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace solstab::spectral {

enum class Sector { Scalar, DiagonalTensor };

std::string to_string(Sector s);
Sector parse_sector(const std::string& s);

struct Window {
    std::size_t lo = 0;
    std::size_t hi = 0;
};

// [0, last node with r <= r_hi]
Window window_upto(const geometry::WarpedGrid& g, double r_hi);
// Same lo, radial extent scaled by `factor`.
Window scale_window(const geometry::WarpedGrid& g, Window w, double factor);

class ReducedOperator {
public:
    // Weighted -Delta_f (scalar) or L = -Delta_f - 2 Rm* (diagonal tensor) on the window.
    // With curvature == nullptr the tensor operator is the rough Laplacian -Delta_f alone.
    ReducedOperator(const geometry::WarpedMetric& m, std::span<const double> f, const geometry::CurvatureData* curvature,
                    Sector sector, Window window);

    Sector sector() const { return sector_; }
    Window window() const { return window_; }
    int n() const { return n_; }
    // First unknown: lo with origin closure, lo + 1 otherwise.
    std::size_t first() const { return first_; }
    std::size_t unknowns() const { return (window_.hi - first_) * block(); }
    int block() const { return sector_ == Sector::Scalar ? 1 : 2; }
    bool origin_closure() const { return first_ == window_.lo; }

    // Strong form on rows [first, hi-1] using the given nodal values, neighbours
    // included as they are; other entries of the result are zero.
    std::vector<double> apply(std::span<const double> x) const;
    geometry::DiagonalTensorField apply(const geometry::DiagonalTensorField& h) const;

    // log of the lumped weight w_j
    double log_weight(std::size_t j) const { return lw_[j]; }
    // Upper bound on the spectrum (Gershgorin on the symmetric form).
    double gershgorin_upper() const;
    double gershgorin_lower() const;

    // Symmetric form A = S^{-1} K S^{-1}, S^2 the mass: diagonal blocks and the
    // coupling s_j between unknown blocks j and j+1 (the off-diagonal block is -s_j I).
    struct Symmetric {
        int m = 1;
        std::vector<double> d11, d12, d22; // d12, d22 unused for m = 1
        std::vector<double> s;             // size blocks - 1
    };
    Symmetric symmetric() const;

    // Dense copy of the symmetric form, unknowns interleaved per node.
    std::vector<double> dense() const;

private:
    Sector sector_;
    Window window_;
    int n_;
    std::size_t first_;
    std::vector<double> lw_;        // log weight per node (full grid)
    std::vector<double> lflux_;     // log edge flux, edge j joins j and j+1
    std::vector<double> puu_, puv_, pvv_; // tensor potential per node, before mass scaling
};

struct SpectralProblem {
    solitons::SolitonProfile profile;
    Sector sector = Sector::Scalar;
    Window window;
    double tolerance = 1e-9;
};

enum class Method { Auto, Banded, Dense };

struct SpectralResult {
    Sector sector = Sector::Scalar;
    double lambda_min = 0.0;
    std::vector<double> scalar;          // scalar sector, full grid, zero outside the window
    geometry::DiagonalTensorField tensor; // tensor sector, full grid
    double residual = 0.0;               // ||(Op - lambda) h||_{L^2_f}
    double norm = 0.0;                   // ||h||_{L^2_f}
    double window_sensitivity = 0.0;     // |lambda(window) - lambda(0.8 window)|
    Window window;
    int iterations = 0;
    std::string method;
};

// Smallest eigenvalue of the symmetric form; exposed for the flow module and tests.
struct Eigenpair {
    double lambda = 0.0;
    std::vector<double> y; // unit Euclidean vector in the symmetric variables
    double residual = 0.0;
    int iterations = 0;
    std::string method;
};
Eigenpair lowest(const ReducedOperator& op, double tolerance, Method method = Method::Auto);
// Number of eigenvalues of the symmetric form below sigma.
std::size_t count_below(const ReducedOperator::Symmetric& a, double sigma);
// Top of the spectrum by inertia bisection, returned as an upper bracket within rel_tol.
double largest_eigenvalue(const ReducedOperator::Symmetric& a, double rel_tol = 1e-6);

SpectralResult bottom_scalar(const SpectralProblem& prob, Method method = Method::Auto);
SpectralResult bottom_lichnerowicz(const SpectralProblem& prob, Method method = Method::Auto);

// Seeded test fields. Support [a, b] with piecewise-cubic C^2 tapers on both sides.
std::vector<double> bump(const geometry::WarpedGrid& g, double a, double b, double taper);
struct BumpSpec {
    double a = 0.0, b = 0.0, taper = 0.0;
};
BumpSpec random_bump_spec(std::mt19937_64& rng, double r_lo, double r_hi);

double hardy_weight(const solitons::SolitonProfile& p, double alpha, std::size_t i);

struct HardyResult {
    double min_margin = 0.0;
    std::size_t count = 0;
    bool pass = false;
    std::uint64_t seed = 0;
};
// margin = int |grad phi|^2 dmu_f - int weight phi^2 dmu_f over seeded bumps scaled to unit H^1;
// weight alpha^2 R + lambda(g) alpha (1 - alpha) (steady) or R + n/2 (expanding).
HardyResult hardy_check(const solitons::SolitonProfile& p, double alpha, std::uint64_t seed, std::size_t count,
                        double quadrature_tol = 1e-8);
// Margin of a single test function, in the same discrete form.
double hardy_margin(const solitons::SolitonProfile& p, double alpha, std::span<const double> phi);

// Best Hardy lower bound over the first `upto` nodes: max over alpha of inf weight (steady),
// inf (R + n/2) (expanding).
double hardy_lower_bound(const solitons::SolitonProfile& p, std::size_t upto);
// inf R + n/2 - 2 max(|a|, |b|) over the first `upto` nodes.
double bochner_margin(const solitons::SolitonProfile& p, std::size_t upto);

// ||e^{f/2} L(e^{-f/2} h) - (-Delta h + V*h)||_{L^2(dmu)}, V = (Delta f + |grad f|^2 / 2)/2 - 2 Rm*.
double conjugate_schrodinger(const solitons::SolitonProfile& p, const geometry::DiagonalTensorField& h);

struct KernelResidual {
    double relative = 0.0; // ||L k||_{L^2_f} / ||k||_{L^2_f}
    double absolute = 0.0;
    double sup = 0.0;      // max over rows of |L k|
};
// k = Lie derivative of g along grad f; rows 1..N-2 (the origin and outer rows excluded).
KernelResidual kernel_oracle(const solitons::SolitonProfile& p);

struct IdentityResidual {
    double residual = 0.0; // |LHS - RHS|
    double scale = 0.0;    // sum of the absolute values of the terms
    double relative() const { return scale > 0.0 ? residual / scale : 0.0; }
};
// 2 int |grad T|^2 = int |Cod T|^2 + 2 int |div_f T|^2 + int |T|^2 + 2 int <Rm*T, T>, expanding only.
IdentityResidual koiso_identity_residual(const solitons::SolitonProfile& p, const geometry::DiagonalTensorField& T);
// int 2 <grad f, grad psi> Delta_f psi + 2 Hess f(grad psi, grad psi) - |grad psi|^2 Delta_f f dmu_f = 0.
IdentityResidual donnelly_garofalo_residual(const solitons::SolitonProfile& p, std::span<const double> psi);

struct AgmonResult {
    double weighted_sup = 0.0; // sup over the outer half of e^{rate f}|h|
    double slope = 0.0;        // fitted d log|h| / d f
    double threshold = 0.0;    // pass if slope <= threshold
    double alpha_eps = 0.0;    // steady only: estimate from the Hardy proxy of lambda_ess
    bool beyond_range = false; // eigenfield underflowed on the outer half
    bool pass = false;
};
// Expanding: alpha in [0, 1), threshold -alpha. Steady: alpha is the slack eps in
// alpha_eps^2 = lambda_ess - lambda - eps, threshold -(alpha_eps + 1/2).
AgmonResult agmon_decay_check(const SpectralResult& result, const solitons::SolitonProfile& p, double alpha);

struct SpectrumReport {
    Sector sector = Sector::Scalar;
    double lambda_min = 0.0;
    double residual = 0.0;
    double r_lo = 0.0, r_hi = 0.0;
    double window_sensitivity = 0.0;
    double hardy_lower_bound = 0.0;
    double bochner_margin = 0.0; // NaN for steady profiles
    std::uint64_t seed = 0;
};
SpectrumReport make_report(const SpectralResult& r, const solitons::SolitonProfile& p, std::uint64_t seed);
std::string to_json(const SpectrumReport& r);

} // namespace solstab::spectral
