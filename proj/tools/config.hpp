#pragma once

// Run configuration: INI text with sections, every key validated, unknown keys rejected.

#include <cstdint>
#include <string>
#include <vector>

namespace solstab::cli {

struct SolitonSpec {
    std::string kind = "shoot"; // shoot | cigar | gaussian_expander | flat_steady
    int epsilon = 1;
    int n = 3;
    double s = 0.7; // f''(0) for shooting
    double r_max = 12.0;
    double ode_tol = 1e-9;
    std::size_t N = 401;
    bool normalize = true; // steady: rescale to lambda(g) = 1
};

struct SpectralSpec {
    std::string sector = "tensor";
    double r_window = 10.0;
    double tolerance = 1e-9;
    double bound_tol = 1e-2; // slack for the strict-mode spectral bounds
};

struct HardySpec {
    std::vector<double> alpha{0.25, 0.5, 1.0}; // steady only
    std::size_t count = 100;
};

struct FlowSpec {
    double amplitude = 1e-2;
    std::string shape = "bump_psi";
    double dt_safety = 0.4;
    double horizon = 5.0;
    double sample_dt = 0.05;
    double r_window = 8.0;
    double support_lo = 0.2;
    double support_hi = 0.7;
    bool deturck = true; // false runs (MRF)
};

struct CheckSpec {
    double identity_tol = 1e-6;
};

struct RunConfig {
    SolitonSpec soliton;
    SpectralSpec spectral;
    HardySpec hardy;
    FlowSpec flow;
    CheckSpec check;
    std::uint64_t seed = 0;
    std::string out = "out";
};

// Throws Error(InvalidConfig) on unknown sections or keys, malformed values or out-of-range values.
RunConfig parse_config(const std::string& ini_text);
RunConfig load_config(const std::string& path);
void validate(const RunConfig& c);

// Canonical INI text of the resolved configuration (what --print-config shows).
std::string to_ini(const RunConfig& c);
// FNV-1a of the canonical text with run.out reset, as 16 hex digits.
std::string config_hash(const RunConfig& c);

// Sets `key` ("s", "soliton.s", "flow.amplitude", ...) to a numeric value.
void apply_override(RunConfig& c, const std::string& key, double value);

struct SweepSpec {
    std::string key;
    std::vector<double> values;
};
// "key=lo:hi:step", inclusive of hi up to rounding.
SweepSpec parse_sweep(const std::string& s);

} // namespace solstab::cli
