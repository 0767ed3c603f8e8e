#pragma once

#include "solstab/geometry.hpp"

#include <limits>
#include <string>
#include <vector>

namespace solstab::solitons {

enum class Kind { Cigar, GaussianExpander, FlatSteady };

Kind parse_kind(const std::string& s);
std::string to_string(Kind k);

// Gradient soliton Hess f = Ric + (epsilon/2) g on a warped metric with xi = 1.
struct SolitonProfile {
    int epsilon = 0;
    geometry::WarpedMetric metric;
    std::vector<double> f;
    std::vector<double> fp;
    geometry::CurvatureData curvature;
    double lambda_g = std::numeric_limits<double>::quiet_NaN(); // steady
    double mu_g = std::numeric_limits<double>::quiet_NaN();     // expanding
    double cone_angle = std::numeric_limits<double>::quiet_NaN();
    std::string id;
    std::vector<std::string> flags;

    // shooting diagnostics
    double constraint_drift = 0.0;     // max drift of the first integral along the integration
    double normalization_tail = 0.0;   // estimate of the truncated part of the entropy integral

    int n() const { return metric.n(); }
    std::size_t size() const { return metric.size(); }
    const geometry::WarpedGrid& grid() const { return metric.grid; }
    const std::vector<double>& r() const { return metric.grid.r(); }
};

// Builds a profile from (phi, f, f') with xi = 1 and computes its curvature.
SolitonProfile make_profile(int epsilon, geometry::WarpedGrid grid, std::vector<double> phi, std::vector<double> f,
                            std::vector<double> fp, std::string id);

SolitonProfile closed_form(Kind kind, int n, const geometry::WarpedGrid& grid);

// Steady only: rescale g -> c^2 g with c^2 = lambda(g), so that lambda(g) = 1.
SolitonProfile normalize_steady(const SolitonProfile& p);

// Integrates the reduced soliton system from a regular origin with f''(0) = s.
// The profile is recorded on a uniform grid of N nodes over [0, r_max].
SolitonProfile shoot_soliton(int epsilon, int n, double s, double r_max, double ode_tol = 1e-9,
                             std::size_t N = 4000, bool normalize = true);

// Nodes r <= r_hi, for working windows.
SolitonProfile restrict_to(const SolitonProfile& p, double r_hi);

// Potential Laplacian Delta f, pointwise.
std::vector<double> laplacian_f(const SolitonProfile& p);

struct IdentityResiduals {
    double trace = 0.0;    // sup |Delta f - R - eps n/2|
    double hamilton = 0.0; // sup ||grad f|^2 + R - eps f - C|
    double bianchi = 0.0;  // sup |2 ric_r f_s + R_s|
    double constant = 0.0; // fitted C: lambda(g) or mu(g)
};

// Sup norms over the interior: the two outermost nodes are skipped, and the two
// innermost too unless the grid starts at a regular origin.
IdentityResiduals identity_residuals(const SolitonProfile& p);

struct Clause {
    std::string name;
    std::string status; // "pass", "fail" or "insufficient tail"
    double measured = 0.0;
};

struct HypothesisReport {
    std::vector<Clause> clauses;
    std::vector<std::string> notes;
    bool passed() const;
};

HypothesisReport check_hypothesis_H(const SolitonProfile& p);

struct GrowthFit {
    int power = 1;           // f ~ r (steady) or r^2 (expanding)
    double c1 = 0.0, c2 = 0.0; // lower envelope c1 r^p + c2 <= f
    double c3 = 0.0, c4 = 0.0; // upper envelope f <= c3 r^p + c4
    bool pass = false;
};

GrowthFit potential_growth_check(const SolitonProfile& p);

// CSV with header r,phi,f,fp,a,b,R.
std::string to_csv(const SolitonProfile& p);

// Minimum r_max accepted by the tail clauses of check_hypothesis_H.
inline constexpr double kMinTail = 5.0;

} // namespace solstab::solitons
