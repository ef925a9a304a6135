// dicke_dyn: command-line front end.  Exit codes: 0 success, 1 validate found
// violations, 2 configuration error, 3 degenerate analytic regime,
// 4 computation failed.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dicke/cli/commands.hpp"
#include "dicke/cli/config.hpp"
#include "dicke/cli/validate.hpp"
#include "dicke/error.hpp"

namespace {

using dicke::cli::Options;
using dicke::cli::RunConfig;

enum Exit : int { kOk = 0, kViolation = 1, kConfig = 2, kDegenerate = 3, kComputation = 4 };

std::optional<unsigned> threads_from_env() {
    const char* v = std::getenv("DICKE_DYN_THREADS");
    if (!v || !*v) return std::nullopt;
    const auto d = dicke::cli::parse_double(v);
    if (d < 1.0 || d != static_cast<double>(static_cast<unsigned>(d))) {
        throw dicke::ValidationError("DICKE_DYN_THREADS must be a positive integer");
    }
    return static_cast<unsigned>(d);
}

int run_validate(const std::filesystem::path& input) {
    const auto reports = dicke::cli::validate_path(input);
    if (reports.empty()) throw dicke::ValidationError("validate: no .csv or .json files in " + input.string());
    int failures = 0;
    for (const auto& r : reports) {
        if (r.ok()) {
            std::cout << "ok    " << r.file.string() << " (" << r.kind << ")\n";
            continue;
        }
        ++failures;
        std::cout << "FAIL  " << r.file.string() << " (" << r.kind << ")\n";
        for (const auto& v : r.violations) std::cout << "      " << v << "\n";
    }
    return failures ? kViolation : kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Classical dynamics of the anisotropic Dicke model"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::string format = "csv";
    app.add_option("--config", config_path, "INI configuration file")->check(CLI::ExistingFile);
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--seed", seed, "override [run] seed");
    app.add_option("--threads", threads, "worker threads (fallback: DICKE_DYN_THREADS)")->check(CLI::PositiveNumber);
    app.add_option("--format", format, "table format")->check(CLI::IsMember({"csv", "json"}));

    using Command = std::function<std::vector<std::filesystem::path>(const RunConfig&, const Options&)>;
    Command command;
    auto add = [&](const char* name, const char* help, Command fn) {
        app.add_subcommand(name, help)->callback([&command, fn] { command = fn; });
    };
    add("fixed-points", "fixed points, stability and order parameter (JSON)", dicke::cli::cmd_fixed_points);
    add("bound-luminosity", "analytic slaved orbit", dicke::cli::cmd_bound_luminosity);
    add("simulate", "integrate the full or slaved equations of motion", dicke::cli::cmd_simulate);
    add("poincare", "Poincare sections over a (g_ratio, energy) grid", dicke::cli::cmd_poincare);
    add("potential", "effective and quartic potentials with extremum markers", dicke::cli::cmd_potential);
    add("lyapunov", "largest Lyapunov exponent of one orbit", dicke::cli::cmd_lyapunov);
    std::string input;
    auto* validate = app.add_subcommand("validate", "re-check invariants of emitted files");
    validate->add_option("--input", input, "file or directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        if (validate->parsed()) return run_validate(input);

        RunConfig cfg = config_path.empty() ? RunConfig{} : dicke::cli::load_config(config_path);
        if (seed) cfg.seed = *seed;
        if (threads) {
            cfg.threads = *threads;
        } else if (const auto env = threads_from_env()) {
            cfg.threads = *env;
        }
        Options opt;
        opt.out = out_dir;
        opt.format = format == "json" ? dicke::cli::Format::json : dicke::cli::Format::csv;
        for (const auto& p : command(cfg, opt)) std::cout << p.string() << "\n";
        return kOk;
    } catch (const dicke::DegenerateError& e) {
        std::cerr << "degenerate: " << e.what() << "\n";
        return kDegenerate;
    } catch (const dicke::ComputationError& e) {
        std::cerr << "computation failed: " << e.what() << "\n";
        return kComputation;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const std::domain_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kComputation;
    }
}
