#pragma once

// Sufficient geometric criteria for strict stability, evaluated on computed profiles.
// A criterion that does not hold is "inconclusive", never "unstable". "fail" is reserved
// for inequalities that must hold (pointwise chains, maximum principles, cross-checks).

#include "solstab/geometry.hpp"
#include "solstab/solitons.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace solstab::stability {

struct CriteriaReport {
    std::string criterion;
    std::vector<std::pair<std::string, double>> measured;
    std::string status; // "pass", "inconclusive" or "fail"
    double margin = 0.0;
    std::vector<std::string> caveats;
    std::uint64_t seed = 0;
};

// R|h|^2 - 2Rm(h,h) - [2 sqrt(n-1)(sqrt(n-1) - 1) a |h|^2 + (n-2)(n-3) b sum_{i != r} h_ii^2]
// for one diagonal tensor h = (h_rr, h_11, ..., h_{n-1,n-1}).
double rotsym_margin(const geometry::CurvatureData& c, std::size_t i, std::span<const double> h);

struct RotsymResult {
    double min_margin = 0.0; // over unit-norm samples
    double r_at_min = 0.0;
    std::size_t samples = 0;
};
// `per_node` seeded Gaussian diagonal samples at each of the first `upto` nodes.
RotsymResult rotsym_pointwise_inequality(const solitons::SolitonProfile& p, std::uint64_t seed, std::size_t per_node,
                                         std::size_t upto);

// inf R + n/2 - 2 sup max(|a|, |b|) on the window; if positive, bottom_lichnerowicz on the same
// window must be positive.
CriteriaReport bochner_criterion(const solitons::SolitonProfile& p, double r_window);

struct AndersonChow {
    double max_ratio = 0.0; // max of |h|/R over {f <= t}
    double r_argmax = 0.0;
    double r_level = 0.0;   // radius of {f = t}
    bool on_boundary = false; // argmax within one cell of the level set
    std::string status;
};
// n = 3 only. lambda is the eigenvalue h belongs to; lambda > 1 leaves the theorem's hypothesis
// unmet and the status is "inconclusive" whatever the location of the maximum.
AndersonChow anderson_chow_check(const solitons::SolitonProfile& p, const geometry::DiagonalTensorField& h,
                                 double lambda, double t_level);

struct TailTrend {
    double slope = 0.0;    // median slope of log(e^{alpha f} Ric) against f over the outer half
    double exponent = 0.0; // fitted decay exponent of Ric against f (alpha = 0 slope, negated)
    double tail_min = 0.0; // min of e^{alpha f} Ric over the outer half
    std::string status;
};
// min(ric_r, ric_s) on {f = t}; steady profiles normalized to lambda(g) = 1.
TailTrend steady_curvature_gap(const solitons::SolitonProfile& p, double alpha);
// e^{alpha f} R, expanding profiles.
TailTrend expander_ricci_decay(const solitons::SolitonProfile& p, double alpha);

// Every criterion applicable to p, in a fixed order.
std::vector<CriteriaReport> evaluate_all(const solitons::SolitonProfile& p, double r_window, std::uint64_t seed);

std::string to_json(const std::vector<CriteriaReport>& reports);

} // namespace solstab::stability
