#pragma once

// Named end-to-end experiments driven by a RunConfig. Every file written
// carries the config hash, seed and units in its header.

#include "esrsim/config.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace esrsim {

inline constexpr const char* kToolVersion = "0.1.0";

struct RunManifest {
    std::string experiment;
    std::string config_hash;
    std::string tool_version = kToolVersion;
    std::uint64_t seed = 0;
    double wall_clock_s = 0.0;
    std::vector<std::string> files;  // relative to the output directory
};

const std::vector<std::string>& experiment_names();
bool is_experiment(const std::string& name);

/// Runs `experiment` and writes its outputs plus manifest.json into `out_dir`.
/// Throws InvalidInput for unknown names and esrsim::Error subclasses for physics failures.
RunManifest run_experiment(const RunConfig& config, const std::string& experiment,
                           const std::filesystem::path& out_dir);

std::string manifest_json(const RunManifest& manifest);

// Building blocks shared by the experiments and tests.
ImplantationProfile build_profile(const RunConfig& config);
CouplingDistribution build_coupling(const RunConfig& config, int bins);
/// Sub-ensembles for `line` with the config's ensemble parameters.
EnsembleState build_ensemble(const RunConfig& config, const CouplingDistribution& coupling,
                             const FrequencyDistribution& line, double gamma_perp);

/// Transition table at the crossing field of each listed transition, as rows of the CLI `transitions` command.
struct CrossingRow {
    Transition transition;
    double field = 0.0;  // T
};
std::vector<CrossingRow> crossing_table(const RunConfig& config, double b_max = 10e-3);
std::string format_crossing_table(const std::vector<CrossingRow>& rows);

}  // namespace esrsim
