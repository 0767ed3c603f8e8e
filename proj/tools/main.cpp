#include "commands.hpp"
#include "config.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <optional>

using namespace solstab::cli;

int main(int argc, char** argv) {
    CLI::App app{"Rotationally symmetric Ricci solitons: profiles, spectra, flows and stability criteria"};
    app.fallthrough();

    std::string config_path, out, sweep;
    bool strict = false, print_config = false;
    std::optional<std::uint64_t> seed;
    app.add_option("--config", config_path, "INI configuration file")->check(CLI::ExistingFile);
    app.add_option("--out", out, "output directory (overrides run.out)");
    app.add_flag("--strict", strict, "exit 3 when a guaranteed inequality is violated");
    app.add_option("--seed", seed, "seed (overrides run.seed)");
    app.add_flag("--print-config", print_config, "print the resolved configuration");

    struct Sub {
        const char* name;
        const char* help;
    };
    const Sub subs[] = {
        {"build", "build a soliton profile: profile.csv, profile.json"},
        {"check-identities", "soliton identities and the kernel oracle: identities.json"},
        {"spectrum", "bottom of the spectrum: spectrum.json"},
        {"hardy", "seeded Hardy inequality checks: hardy.json"},
        {"flow-linear", "linearized flow: flow_trace.csv, report.json"},
        {"flow-nonlinear", "(MRHF) or (MRF): flow_trace.csv, report.json"},
        {"criteria", "stability criteria: criteria.json"},
        {"sweep", "parameter sweep of profile + spectrum: sweep.csv, sweep.json"},
    };
    for (const auto& s : subs) app.add_subcommand(s.name, s.help);
    app.get_subcommand("sweep")->add_option("--sweep", sweep, "key=lo:hi:step")->required();
    app.require_subcommand(0, 1);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kInvalidConfig;
    }

    try {
        RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
        if (!out.empty()) cfg.out = out;
        if (seed) cfg.seed = *seed;
        validate(cfg);
        if (print_config) std::cout << to_ini(cfg);

        const auto chosen = app.get_subcommands();
        if (chosen.empty()) {
            if (print_config) return kOk;
            std::cerr << app.help();
            return kInvalidConfig;
        }
        const std::string name = chosen.front()->get_name();
        const Options opt{strict};
        if (name == "build") return cmd_build(cfg, opt);
        if (name == "check-identities") return cmd_check_identities(cfg, opt);
        if (name == "spectrum") return cmd_spectrum(cfg, opt);
        if (name == "hardy") return cmd_hardy(cfg, opt);
        if (name == "flow-linear") return cmd_flow_linear(cfg, opt);
        if (name == "flow-nonlinear") return cmd_flow_nonlinear(cfg, opt);
        if (name == "criteria") return cmd_criteria(cfg, opt);
        if (name == "sweep") return cmd_sweep(cfg, parse_sweep(sweep), opt);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
    return kInvalidConfig;
}
