#include "commands.hpp"

#include "solstab/error.hpp"
#include "solstab/flow.hpp"
#include "solstab/solitons.hpp"
#include "solstab/spectral.hpp"
#include "solstab/stability.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <thread>

namespace solstab::cli {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

void write_atomic(const std::string& path, const std::string& content) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    const fs::path tmp = p.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
        if (!out.flush()) throw std::runtime_error("cannot write " + tmp.string());
    }
    fs::rename(tmp, p);
}

int exit_code_for(const std::exception& e) {
    if (const auto* err = dynamic_cast<const Error*>(&e)) {
        switch (err->kind()) {
        case ErrorKind::InvalidConfig:
        case ErrorKind::Grid:
        case ErrorKind::GridMismatch:
        case ErrorKind::BoundarySupport:
        case ErrorKind::IncompatibleDimension:
        case ErrorKind::Precondition: return kInvalidConfig;
        case ErrorKind::InvalidMetric:
        case ErrorKind::ShootingFailure:
        case ErrorKind::NumericalFailure: return kNumericalFailure;
        }
    }
    return kNumericalFailure;
}

namespace {

// RFC 4180 quoting; empty stays empty
std::string csv_quote(const std::string& s) {
    if (s.empty()) return s;
    std::string out = "\"";
    for (char ch : s) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return out + "\"";
}

json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

std::string out_path(const RunConfig& cfg, const std::string& name) { return (fs::path(cfg.out) / name).string(); }

void stamp(json& j, const RunConfig& cfg) {
    j["config_hash"] = config_hash(cfg);
    j["seed"] = cfg.seed;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

struct Built {
    solitons::SolitonProfile profile;
    double lambda_unnormalized = std::numeric_limits<double>::quiet_NaN();
};

Built build_profile(const RunConfig& cfg) {
    const auto& s = cfg.soliton;
    if (s.kind == "shoot") return {solitons::shoot_soliton(s.epsilon, s.n, s.s, s.r_max, s.ode_tol, s.N, s.normalize)};
    const auto grid = geometry::WarpedGrid::uniform(s.n, 0.0, s.r_max, s.N);
    auto p = solitons::closed_form(solitons::parse_kind(s.kind), s.n, grid);
    // closed forms carry their own epsilon; the cigar is the only one with lambda(g) > 0
    if (p.epsilon == 0 && s.normalize && p.lambda_g > 0.0) {
        const double raw = p.lambda_g;
        return {solitons::normalize_steady(p), raw};
    }
    return {std::move(p)};
}

spectral::Window spectral_window(const RunConfig& cfg, const solitons::SolitonProfile& p) {
    return spectral::window_upto(p.grid(), cfg.spectral.r_window);
}

json identities_json(const solitons::IdentityResiduals& r) {
    return json{{"trace", num(r.trace)}, {"hamilton", num(r.hamilton)}, {"bianchi", num(r.bianchi)}, {"constant", num(r.constant)}};
}

bool positively_curved(const solitons::SolitonProfile& p, std::size_t hi) {
    for (std::size_t i = 0; i <= hi; ++i)
        if (p.curvature.a[i] < 0.0 || p.curvature.b[i] < 0.0) return false;
    return true;
}

flow::FlowConfig flow_config(const RunConfig& cfg, const solitons::SolitonProfile& p, bool snapshots) {
    const auto& f = cfg.flow;
    const flow::Perturbation pert{f.amplitude, flow::parse_shape(f.shape), f.support_lo, f.support_hi, cfg.seed};
    return flow::FlowConfig{p, f.r_window, f.dt_safety, f.horizon, f.sample_dt, pert, snapshots};
}

double fitted_or_nan(const flow::RateFit& f) { return f.vacuous ? std::numeric_limits<double>::quiet_NaN() : f.rate; }

} // namespace

int cmd_build(const RunConfig& cfg, const Options&) {
    const auto b = build_profile(cfg);
    const auto& p = b.profile;
    const auto id = solitons::identity_residuals(p);
    const auto H = solitons::check_hypothesis_H(p);
    const auto growth = solitons::potential_growth_check(p);
    json j;
    j["profile_id"] = p.id;
    j["kind"] = cfg.soliton.kind;
    j["epsilon"] = p.epsilon;
    j["n"] = p.n();
    j["N"] = p.size();
    j["r_max"] = p.r().back();
    j["lambda_g"] = num(p.lambda_g);
    if (std::isfinite(b.lambda_unnormalized)) j["lambda_g_unnormalized"] = b.lambda_unnormalized;
    j["mu_g"] = num(p.mu_g);
    j["cone_angle"] = num(p.cone_angle);
    j["constraint_drift"] = num(p.constraint_drift);
    j["normalization_tail"] = num(p.normalization_tail);
    j["identity_residuals"] = identities_json(id);
    json clauses = json::array();
    for (const auto& c : H.clauses) clauses.push_back({{"name", c.name}, {"status", c.status}, {"measured", num(c.measured)}});
    j["hypothesis_H"] = {{"passed", H.passed()}, {"clauses", clauses}, {"notes", H.notes}};
    j["potential_growth"] = {{"power", growth.power}, {"c1", num(growth.c1)}, {"c2", num(growth.c2)},
                             {"c3", num(growth.c3)},  {"c4", num(growth.c4)}, {"pass", growth.pass}};
    j["flags"] = p.flags;
    stamp(j, cfg);
    write_atomic(out_path(cfg, "profile.csv"), solitons::to_csv(p));
    write_atomic(out_path(cfg, "profile.json"), dump(j));
    return kOk;
}

int cmd_check_identities(const RunConfig& cfg, const Options& opt) {
    const auto p = build_profile(cfg).profile;
    const auto id = solitons::identity_residuals(p);
    const double tol = cfg.check.identity_tol;
    const bool ok = id.trace <= tol && id.hamilton <= tol && id.bianchi <= tol;
    json j;
    j["profile_id"] = p.id;
    j["identity_residuals"] = identities_json(id);
    j["tolerance"] = tol;
    j["pass"] = ok;
    if (p.n() >= 3 || !p.metric.origin_regular) {
        const auto k = spectral::kernel_oracle(p);
        j["kernel_oracle"] = {{"relative", num(k.relative)}, {"absolute", num(k.absolute)}, {"sup", num(k.sup)}};
    }
    stamp(j, cfg);
    write_atomic(out_path(cfg, "identities.json"), dump(j));
    return (opt.strict && !ok) ? kStrictViolation : kOk;
}

int cmd_spectrum(const RunConfig& cfg, const Options& opt) {
    const auto p = build_profile(cfg).profile;
    const auto w = spectral_window(cfg, p);
    const auto sector = spectral::parse_sector(cfg.spectral.sector);
    const spectral::SpectralProblem prob{p, sector, w, cfg.spectral.tolerance};
    const auto res = sector == spectral::Sector::Scalar ? spectral::bottom_scalar(prob) : spectral::bottom_lichnerowicz(prob);
    const auto rep = spectral::make_report(res, p, cfg.seed);
    json j = json::parse(spectral::to_json(rep));
    j["profile_id"] = p.id;
    j["method"] = res.method;
    // lower bounds guaranteed on this profile class
    std::string bound_name;
    double bound = std::numeric_limits<double>::quiet_NaN();
    if (sector == spectral::Sector::Scalar) {
        bound_name = p.epsilon == 1 ? "inf R + n/2" : "steady Hardy bound";
        bound = rep.hardy_lower_bound;
    } else if (p.epsilon == 1 && positively_curved(p, w.hi)) {
        bound_name = "n/2 (positive curvature)";
        bound = 0.5 * p.n();
    }
    bool violated = false;
    if (std::isfinite(bound)) {
        violated = res.lambda_min < bound - cfg.spectral.bound_tol;
        j["bound"] = {{"name", bound_name}, {"value", bound}, {"tolerance", cfg.spectral.bound_tol}, {"violated", violated}};
    } else {
        j["bound"] = nullptr;
    }
    stamp(j, cfg);
    write_atomic(out_path(cfg, "spectrum.json"), dump(j));
    return (opt.strict && violated) ? kStrictViolation : kOk;
}

int cmd_hardy(const RunConfig& cfg, const Options& opt) {
    const auto p = build_profile(cfg).profile;
    std::vector<double> alphas = p.epsilon == 1 ? std::vector<double>{0.0} : cfg.hardy.alpha;
    json runs = json::array();
    bool violated = false;
    for (std::size_t k = 0; k < alphas.size(); ++k) {
        const auto r = spectral::hardy_check(p, alphas[k], cfg.seed + k, cfg.hardy.count);
        violated = violated || r.min_margin < -1e-8;
        runs.push_back({{"alpha", alphas[k]}, {"min_margin", num(r.min_margin)}, {"count", r.count}, {"pass", r.pass}, {"seed", r.seed}});
    }
    json j;
    j["profile_id"] = p.id;
    j["weight"] = p.epsilon == 1 ? "R + n/2" : "alpha^2 R + lambda(g) alpha (1 - alpha)";
    j["runs"] = runs;
    stamp(j, cfg);
    write_atomic(out_path(cfg, "hardy.json"), dump(j));
    return (opt.strict && violated) ? kStrictViolation : kOk;
}

namespace {

// Fits need a few samples past the transient; short horizons report them as missing.
template <class F>
auto attempt(F&& f) -> std::optional<decltype(f())> {
    try {
        return f();
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::Precondition) throw;
        return std::nullopt;
    }
}

double lambda_on_flow_window(const RunConfig& cfg, const solitons::SolitonProfile& p) {
    const auto w = spectral::window_upto(p.grid(), cfg.flow.r_window);
    return spectral::bottom_lichnerowicz({p, spectral::Sector::DiagonalTensor, w, cfg.spectral.tolerance}).lambda_min;
}

json lyapunov_json(const std::optional<flow::LyapunovReport>& ly) {
    if (!ly) return nullptr;
    return {{"band", {ly->band_lo, ly->band_hi}}, {"samples", ly->fit.samples}};
}

} // namespace

int cmd_flow_linear(const RunConfig& cfg, const Options& opt) {
    const auto p = build_profile(cfg).profile;
    const auto fc = flow_config(cfg, p, false);
    const auto h0 = flow::initial_perturbation(fc);
    const auto tr = flow::run_linear_flow(fc, h0);
    const double lambda = lambda_on_flow_window(cfg, p);
    const auto gr = flow::gronwall_check(tr, p.epsilon, lambda);
    const auto ly = attempt([&] { return flow::lyapunov_check(tr, lambda); });
    const auto sup = attempt([&] { return flow::fit_sup_rate(tr); });

    const double nan = std::numeric_limits<double>::quiet_NaN();
    flow::FlowSummary s{p.id,
                        cfg.flow.amplitude,
                        ly ? fitted_or_nan(ly->fit) : nan,
                        sup ? fitted_or_nan(*sup) : nan,
                        ly && !ly->fit.vacuous ? std::optional<bool>(ly->pass) : std::nullopt,
                        gr.pass,
                        0.0};
    json j = json::parse(flow::to_json(s));
    j["flow"] = "linear";
    j["lambda"] = lambda;
    j["lyapunov"] = lyapunov_json(ly);
    j["gronwall"] = {{"divergence_pass", gr.divergence_pass}, {"energy_pass", gr.energy_pass},
                     {"worst_divergence_ratio", num(gr.worst_divergence_ratio)},
                     {"worst_energy_ratio", num(gr.worst_energy_ratio)}, {"slack", gr.slack},
                     {"divergence_consistency", num(gr.consistency)}};
    j["dt"] = tr.dt;
    j["steps"] = tr.steps;
    j["peclet"] = tr.peclet;
    j["vacuous"] = cfg.flow.amplitude == 0.0;
    stamp(j, cfg);
    write_atomic(out_path(cfg, "flow_trace.csv"), flow::to_csv(tr));
    write_atomic(out_path(cfg, "report.json"), dump(j));
    return (opt.strict && !gr.pass) ? kStrictViolation : kOk;
}

int cmd_flow_nonlinear(const RunConfig& cfg, const Options& opt) {
    const auto p = build_profile(cfg).profile;
    const auto fc = flow_config(cfg, p, false);
    const auto tr = cfg.flow.deturck ? flow::run_mrhf(fc) : flow::run_mrf(fc);
    const double lambda = lambda_on_flow_window(cfg, p);
    const auto ly = attempt([&] { return flow::lyapunov_check(tr, lambda); });
    const auto sup = attempt([&] { return flow::fit_sup_rate(tr); });
    const auto sd = attempt([&] { return flow::sup_decay_check(tr, lambda, p.n()); });
    const auto bl = attempt([&] { return flow::derivative_blowup_check(tr); });

    const double nan = std::numeric_limits<double>::quiet_NaN();
    flow::FlowSummary s{p.id,
                        cfg.flow.amplitude,
                        ly ? fitted_or_nan(ly->fit) : nan,
                        sup ? fitted_or_nan(*sup) : nan,
                        ly && !ly->fit.vacuous ? std::optional<bool>(ly->pass) : std::nullopt,
                        std::nullopt,
                        tr.stationarity_residual};
    json j = json::parse(flow::to_json(s));
    j["flow"] = cfg.flow.deturck ? "MRHF" : "MRF";
    j["lambda"] = lambda;
    j["lyapunov"] = lyapunov_json(ly);
    j["sup_decay"] = sd ? json{{"pass", sd->pass}, {"constant", num(sd->constant)}, {"worst_ratio", num(sd->worst_ratio)}}
                        : json(nullptr);
    j["derivative_estimate"] =
        bl ? json{{"pass", bl->pass}, {"constant", num(bl->constant)}, {"exponent", num(bl->exponent)}} : json(nullptr);
    j["terminal_sup"] = tr.sup_norm.back();
    j["dt"] = tr.dt;
    j["steps"] = tr.steps;
    j["peclet"] = tr.peclet;
    j["vacuous"] = cfg.flow.amplitude == 0.0;
    stamp(j, cfg);
    write_atomic(out_path(cfg, "flow_trace.csv"), flow::to_csv(tr));
    write_atomic(out_path(cfg, "report.json"), dump(j));
    const bool violated = (ly && !ly->pass) || (sd && !sd->pass) || (bl && !bl->pass);
    return (opt.strict && violated) ? kStrictViolation : kOk;
}

int cmd_criteria(const RunConfig& cfg, const Options& opt) {
    const auto p = build_profile(cfg).profile;
    const auto reports = stability::evaluate_all(p, cfg.spectral.r_window, cfg.seed);
    json arr = json::parse(stability::to_json(reports));
    for (auto& r : arr) {
        r["profile_id"] = p.id;
        r["config_hash"] = config_hash(cfg);
    }
    write_atomic(out_path(cfg, "criteria.json"), dump(arr));
    const bool failed = std::any_of(reports.begin(), reports.end(), [](const auto& r) { return r.status == "fail"; });
    return (opt.strict && failed) ? kStrictViolation : kOk;
}

namespace {

struct SweepRow {
    double value = 0.0;
    std::string profile_id, error;
    double lambda_min = std::numeric_limits<double>::quiet_NaN();
    double residual = std::numeric_limits<double>::quiet_NaN();
    double window_sensitivity = std::numeric_limits<double>::quiet_NaN();
    double hardy_lower_bound = std::numeric_limits<double>::quiet_NaN();
    double bochner_margin = std::numeric_limits<double>::quiet_NaN();
    double cone_angle = std::numeric_limits<double>::quiet_NaN();
};

SweepRow sweep_one(RunConfig cfg, const std::string& key, double value) {
    SweepRow row;
    row.value = value;
    try {
        apply_override(cfg, key, value);
        const auto p = build_profile(cfg).profile;
        const auto w = spectral_window(cfg, p);
        const auto sector = spectral::parse_sector(cfg.spectral.sector);
        const spectral::SpectralProblem prob{p, sector, w, cfg.spectral.tolerance};
        const auto res = sector == spectral::Sector::Scalar ? spectral::bottom_scalar(prob) : spectral::bottom_lichnerowicz(prob);
        const auto rep = spectral::make_report(res, p, cfg.seed);
        row.profile_id = p.id;
        row.lambda_min = rep.lambda_min;
        row.residual = rep.residual;
        row.window_sensitivity = rep.window_sensitivity;
        row.hardy_lower_bound = rep.hardy_lower_bound;
        row.bochner_margin = rep.bochner_margin;
        row.cone_angle = p.cone_angle;
    } catch (const std::exception& e) {
        row.error = e.what();
    }
    return row;
}

} // namespace

int cmd_sweep(const RunConfig& cfg, const SweepSpec& sweep, const Options&) {
    // validate the key once up front
    {
        RunConfig probe = cfg;
        apply_override(probe, sweep.key, sweep.values.front());
    }
    std::vector<SweepRow> rows(sweep.values.size());
    const std::size_t workers = std::max(1u, std::min(8u, std::thread::hardware_concurrency()));
    for (std::size_t start = 0; start < rows.size(); start += workers) {
        std::vector<std::future<SweepRow>> batch;
        for (std::size_t k = start; k < std::min(rows.size(), start + workers); ++k)
            batch.push_back(std::async(std::launch::async, sweep_one, cfg, sweep.key, sweep.values[k]));
        for (std::size_t k = 0; k < batch.size(); ++k) rows[start + k] = batch[k].get();
    }

    std::ostringstream csv;
    csv << sweep.key << ",profile_id,lambda_min,residual,window_sensitivity,hardy_lower_bound,bochner_margin,cone_angle,error\n"
        << std::setprecision(12);
    json runs = json::array();
    bool any_error = false;
    for (const auto& r : rows) {
        any_error = any_error || !r.error.empty();
        csv << r.value << ',' << r.profile_id << ',' << r.lambda_min << ',' << r.residual << ',' << r.window_sensitivity << ','
            << r.hardy_lower_bound << ',' << r.bochner_margin << ',' << r.cone_angle << ',' << csv_quote(r.error)
            << '\n';
        json jr{{"value", r.value},
                {"profile_id", r.profile_id},
                {"lambda_min", num(r.lambda_min)},
                {"residual", num(r.residual)},
                {"window_sensitivity", num(r.window_sensitivity)},
                {"hardy_lower_bound", num(r.hardy_lower_bound)},
                {"bochner_margin", num(r.bochner_margin)},
                {"cone_angle", num(r.cone_angle)}};
        if (!r.error.empty()) jr["error"] = r.error;
        runs.push_back(jr);
    }
    json j;
    j["key"] = sweep.key;
    j["sector"] = cfg.spectral.sector;
    j["runs"] = runs;
    stamp(j, cfg);
    write_atomic(out_path(cfg, "sweep.csv"), csv.str());
    write_atomic(out_path(cfg, "sweep.json"), dump(j));
    return any_error ? kNumericalFailure : kOk;
}

} // namespace solstab::cli
