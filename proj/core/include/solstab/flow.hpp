#pragma once

// Linearized Lichnerowicz heat flow and the reduced (MRHF)/(MRF) flows on a
// Dirichlet window of a soliton background g0 = dr^2 + phi0^2 g_S.
//
// The evolving metric is g = xi^2 dr^2 + psi^2 g_S on the background grid; the
// perturbation h = g - g0 is recorded in the g0-orthonormal frame, u = xi^2 - 1,
// v = psi^2/phi0^2 - 1.

#include "solstab/geometry.hpp"
#include "solstab/solitons.hpp"
#include "solstab/spectral.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace solstab::flow {

enum class Shape { BumpPsi, BumpXi, RandomHighfreq };

Shape parse_shape(const std::string& s);
std::string to_string(Shape s);

struct Perturbation {
    double amplitude = 0.0; // sup-norm of h(0) in the g0 frame
    Shape shape = Shape::BumpPsi;
    double support_lo = 0.2; // support as fractions of the window radius
    double support_hi = 0.7;
    std::uint64_t seed = 0;
};

// Largest amplitude accepted as epsilon-close to g0.
inline constexpr double kMaxAmplitude = 0.1;

struct FlowConfig {
    solitons::SolitonProfile profile;
    double r_window = 8.0;  // Dirichlet ball {r <= r_window}
    double dt_safety = 0.4; // fraction of the explicit stability limit
    double horizon = 5.0;
    double sample_dt = 0.05; // trace sampling interval
    Perturbation perturbation;
    bool keep_snapshots = false; // store (xi, psi) or h at each sample
};

struct Snapshot {
    double t = 0.0;
    std::vector<double> xi, psi; // nonlinear flows
    geometry::DiagonalTensorField h; // linear flow
};

struct FlowTrace {
    std::string profile_id;
    double amplitude = 0.0;
    double dr = 0.0;
    double dt = 0.0;
    std::size_t steps = 0;
    std::vector<double> times, l2f_norm, sup_norm, divf_norm, grad_sup;
    // linear flow: ||div_f h(t) - omega(t)||_{L^2_f} / ||div_f h(0)||_{L^2_f}, omega evolved by the
    // 1-form equation (d_t - Delta_f + eps/2) omega = 0
    std::vector<double> divf_consistency;
    double stationarity_residual = 0.0; // sup |RHS(g0)|, nonlinear flows
    double peclet = 0.0;                // max |X0| dr / diffusion on the window
    geometry::DiagonalTensorField terminal; // h at the final time
    std::vector<Snapshot> snapshots;
    std::size_t window_hi = 0;
};

// Perturbation h(0) on the profile grid (zero outside the open window).
geometry::DiagonalTensorField initial_perturbation(const FlowConfig& cfg);

// Divergence-free tensor with rr-part u: v = u + (u_s + f_s u) / ((n-1) kappa).
geometry::DiagonalTensorField divergence_free(const solitons::SolitonProfile& p, std::span<const double> u);

// Lie derivative of g0 along grad f0, multiplied by a cutoff that tapers to zero over the
// outer fifth of [0, r_window].
geometry::DiagonalTensorField truncated_kernel_element(const solitons::SolitonProfile& p, double r_window);

FlowTrace run_linear_flow(const FlowConfig& cfg, const geometry::DiagonalTensorField& h0);

struct GronwallReport {
    bool pass = false;
    bool divergence_pass = false;
    bool energy_pass = false;
    double worst_divergence_ratio = 0.0; // max divf(t)^2 / (e^{-eps t} divf(0)^2)
    double worst_energy_ratio = 0.0;
    double consistency = 0.0;            // max of trace.divf_consistency
    double slack = 1.0;
};
GronwallReport gronwall_check(const FlowTrace& trace, int epsilon, double lambda);

struct DeTurck {
    std::vector<double> coordinate; // V^r from Christoffel differences
    std::vector<double> global;     // g^{-1}-contracted div_{g0} g - (1/2) d tr_{g0} g
    std::vector<double> linearized; // div_{g0} g - (1/2) grad tr_{g0} g with g0 traces
};
DeTurck deturck_field(const geometry::WarpedMetric& m, const geometry::WarpedMetric& background);

// (MRHF) with the DeTurck term, or (MRF) with V = 0.
FlowTrace run_mrhf(const FlowConfig& cfg);
FlowTrace run_mrf(const FlowConfig& cfg);

struct RateFit {
    double rate = 0.0; // -d/dt log(norm^2) for l2f, -d/dt log(norm) for sup
    std::size_t samples = 0;
    bool vacuous = false;
};
// Fits over t >= 0.2 T.
RateFit fit_l2f_rate(const FlowTrace& trace);
RateFit fit_sup_rate(const FlowTrace& trace);

struct LyapunovReport {
    RateFit fit;
    double band_lo = 0.0, band_hi = 0.0;
    bool pass = false;
};
// pass if the fitted rate of ||h||^2 lies in [0.5 * 2 lambda, 1.1 * 2 lambda].
LyapunovReport lyapunov_check(const FlowTrace& trace, double lambda);

struct SupDecayReport {
    double constant = 0.0;
    double worst_ratio = 0.0;
    bool pass = false;
};
SupDecayReport sup_decay_check(const FlowTrace& trace, double lambda_tilde, int n);

struct BlowupReport {
    double constant = 0.0; // max t * grad_sup(t) over t in (0, min(1, T)]
    double exponent = 0.0; // fitted p in grad_sup ~ t^{-p}
    bool pass = false;
};
BlowupReport derivative_blowup_check(const FlowTrace& trace);

struct EquivalenceReport {
    std::vector<double> times;
    std::vector<double> residual; // sup over the verification window of |d_t g~ + 2 Ric(g~)|
    double max_residual = 0.0;
    double r_verified = 0.0; // outer radius of the verification window
    bool reduced_window = false;
};
// g~(t) = (1 + t) phi_t^* g(ln(1 + t)), phi_t the flow of -X0/(1 + t); needs snapshots.
EquivalenceReport flow_equivalence_transform(const FlowTrace& mrf, const solitons::SolitonProfile& p,
                                             std::span<const double> t_samples);

std::string to_csv(const FlowTrace& trace);

struct FlowSummary {
    std::string profile_id;
    double amplitude = 0.0;
    double fitted_l2f_rate = 0.0;
    double fitted_sup_rate = 0.0;
    std::optional<bool> lyapunov_pass;
    std::optional<bool> gronwall_pass;
    double stationarity_residual = 0.0;
};
std::string to_json(const FlowSummary& s);

} // namespace solstab::flow
