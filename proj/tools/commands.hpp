#pragma once

#include "config.hpp"

#include <string>

namespace solstab::cli {

enum ExitCode { kOk = 0, kInvalidConfig = 1, kNumericalFailure = 2, kStrictViolation = 3 };

struct Options {
    bool strict = false;
};

// Each command writes its files under cfg.out and returns an exit code; errors propagate
// as solstab::Error and are mapped by exit_code_for.
int cmd_build(const RunConfig& cfg, const Options& opt);
int cmd_check_identities(const RunConfig& cfg, const Options& opt);
int cmd_spectrum(const RunConfig& cfg, const Options& opt);
int cmd_hardy(const RunConfig& cfg, const Options& opt);
int cmd_flow_linear(const RunConfig& cfg, const Options& opt);
int cmd_flow_nonlinear(const RunConfig& cfg, const Options& opt);
int cmd_criteria(const RunConfig& cfg, const Options& opt);
int cmd_sweep(const RunConfig& cfg, const SweepSpec& sweep, const Options& opt);

int exit_code_for(const std::exception& e);

// Writes through a temporary file in the same directory, then renames.
void write_atomic(const std::string& path, const std::string& content);

} // namespace solstab::cli
