#include "esrsim/config.hpp"
#include "esrsim/error.hpp"
#include "esrsim/experiments.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;

namespace {

// Exit codes: 0 ok, 1 runtime/physics failure, 2 usage error.
constexpr int kFailure = 1;
constexpr int kUsage = 2;

std::string join_names() {
    std::string s;
    for (const auto& n : esrsim::experiment_names()) s += (s.empty() ? "" : ", ") + n;
    return s;
}

void write_error_json(const fs::path& dir, const std::string& experiment, const std::string& kind,
                      const std::string& message) {
    nlohmann::ordered_json j;
    j["status"] = "error";
    j["experiment"] = experiment;
    j["error_type"] = kind;
    j["message"] = message;
    std::error_code ec;
    fs::create_directories(dir, ec);
    std::ofstream os(dir / "error.json");
    if (os) os << j.dump(2) << '\n';
    std::cerr << j.dump(2) << '\n';
}

std::string error_kind(const esrsim::Error& e) {
    if (dynamic_cast<const esrsim::InvalidInput*>(&e)) return "InvalidInput";
    if (dynamic_cast<const esrsim::DomainError*>(&e)) return "DomainError";
    if (dynamic_cast<const esrsim::NumericError*>(&e)) return "NumericError";
    if (dynamic_cast<const esrsim::NotFound*>(&e)) return "NotFound";
    if (dynamic_cast<const esrsim::Ambiguity*>(&e)) return "Ambiguity";
    if (dynamic_cast<const esrsim::SolverFailure*>(&e)) return "SolverFailure";
    if (dynamic_cast<const esrsim::FitFailure*>(&e)) return "FitFailure";
    return "Error";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pulsed ESR spectrometer simulator"};
    app.require_subcommand(1);
    app.set_version_flag("--version", esrsim::kToolVersion);

    std::string experiment, config_path, out_dir;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> overrides;

    auto* run = app.add_subcommand("run", "Run a named experiment (" + join_names() + ")");
    run->add_option("experiment", experiment, "Experiment name")->required();
    run->add_option("--config", config_path, "YAML configuration")->required();
    run->add_option("--seed", seed, "Random seed (overrides the config)");
    run->add_option("--out", out_dir, "Output directory (overrides ESRSIM_OUT_DIR and the config)");
    run->add_option("--set", overrides, "Override key=value (dotted path, YAML value)")->take_all();

    std::string validate_path;
    auto* validate = app.add_subcommand("validate", "Check a configuration for invariant violations");
    validate->add_option("--config", validate_path, "YAML configuration")->required();

    std::string transitions_path;
    std::vector<std::string> transition_overrides;
    auto* transitions = app.add_subcommand("transitions", "Print crossing fields of the configured transitions");
    transitions->add_option("--config", transitions_path, "YAML configuration")->required();
    transitions->add_option("--set", transition_overrides, "Override key=value")->take_all();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kUsage;
    }

    if (*validate) {
        std::ifstream is(validate_path);
        if (!is) {
            std::cerr << "cannot open config '" << validate_path << "'\n";
            return kFailure;
        }
        std::stringstream ss;
        ss << is.rdbuf();
        const auto rep = esrsim::validate_config_text(ss.str());
        if (rep.ok()) {
            std::cout << validate_path << ": ok\n";
            return 0;
        }
        std::cout << rep.to_string();
        return kFailure;
    }

    if (*transitions) {
        try {
            const auto cfg = esrsim::load_config(transitions_path, transition_overrides);
            std::cout << esrsim::format_crossing_table(esrsim::crossing_table(cfg));
            return 0;
        } catch (const esrsim::Error& e) {
            std::cerr << error_kind(e) << ": " << e.what() << '\n';
            return kFailure;
        }
    }

    if (!esrsim::is_experiment(experiment)) {
        std::cerr << "unknown experiment '" << experiment << "'; expected one of: " << join_names() << '\n';
        return kUsage;
    }
    if (seed) overrides.push_back("seed=" + std::to_string(*seed));

    fs::path dir = out_dir;
    if (dir.empty())
        if (const char* env = std::getenv("ESRSIM_OUT_DIR"); env && *env) dir = env;
    try {
        const auto cfg = esrsim::load_config(config_path, overrides);
        if (dir.empty()) dir = cfg.output_dir;
        const auto manifest = esrsim::run_experiment(cfg, experiment, dir);
        std::cout << esrsim::manifest_json(manifest);
        return 0;
    } catch (const esrsim::Error& e) {
        if (dir.empty()) dir = ".";
        write_error_json(dir, experiment, error_kind(e), e.what());
        return kFailure;
    } catch (const std::exception& e) {
        if (dir.empty()) dir = ".";
        write_error_json(dir, experiment, "internal", e.what());
        return kFailure;
    }
}
