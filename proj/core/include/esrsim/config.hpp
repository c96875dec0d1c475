#pragma once

// Run configuration: a YAML document with SI units spelled out in the key
// names (kappa1_per_s, width_m, ...). Overrides use dotted paths.

#include "esrsim/detection.hpp"
#include "esrsim/ensemble.hpp"
#include "esrsim/field_geometry.hpp"
#include "esrsim/observables.hpp"
#include "esrsim/pulse_sequence.hpp"
#include "esrsim/spin_model.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace esrsim {

struct ImplantationSpec {
    std::string kind = "skew_gaussian";  // skew_gaussian | uniform | csv
    double peak_depth = 100e-9;
    double sigma_shallow = 45e-9;
    double sigma_deep = 30e-9;
    double min_depth = 0.0;
    double max_depth = 250e-9;
    int samples = 251;
    std::string file;
};

struct PulseConfig {
    bool ideal = false;
    double pi_duration = 5e-6;       // s
    double pi_half_duration = 5e-6;  // s
    double pi_power_dBm = -85.23;    // about 3 pW
    double pi_half_power_dBm = -91.25;
    double eta = 1.0;                // multiplier on input power
};

struct SensitivityConfig {
    double g_hz = 55.0;
    double p = 1.0;
    double kappa_hz = 22e3;                // kappa / 2 pi
    std::optional<double> kappa2_hz;       // default kappa / 2
    std::optional<double> w_hz;            // default kappa
    std::optional<double> echo_time;       // s, default 1 / kappa
    double n = 1.0;
    double n_spins = 1.2e4;                // for the cooperativity report
    double n_syst_ratio = 36.0;            // n_syst / n for the gain curve
    std::vector<double> gains{1, 2, 5, 10, 20, 50, 100, 200, 500, 1000};
};

struct SpectrumConfig {
    double field_min = 4.5e-3;  // T
    double field_max = 7.5e-3;
    int points = 61;
    std::vector<SweepTransition> transitions;
    FrequencyDistribution line;
    int coupling_bins = 5;
};

struct CpmgConfig {
    double gamma_perp = 1.0 / 71e-3;  // 1/s
    int coupling_bins = 5;
    int line_bins = 150;
};

struct RunConfig {
    std::uint64_t seed = 1;
    bool seed_set = false;
    std::string output_dir = "out";
    int threads = 0;

    SpinSystem spin;
    Eigen::Vector3d field_direction = Eigen::Vector3d::UnitZ();
    CavityParams cavity;
    double quality = 3e5;

    StripGeometry geometry;
    CouplingRegion region;
    double theta = 0.0;
    int coupling_bins = 50;
    double coupling_sx = 0.47;
    ImplantationSpec implantation;

    FrequencyDistribution line;
    double n_total = 2e5;
    double repetition_rate = 1.0;  // Hz
    double gamma_perp = 1.0 / 8.9e-3;
    std::optional<double> gamma_par;
    bool purcell = true;

    PulseConfig pulses;
    SequenceParams sequence;
    std::vector<double> rabi_amplitudes;  // relative to the pi amplitude
    std::vector<double> t2_delays;        // 2 tau values, s
    std::vector<double> t1_waits;         // s
    bool phase_cycle = true;

    SolverConfig solver;
    NoiseModel noise;
    SensitivityConfig sensitivity;
    SpectrumConfig spectrum;
    CpmgConfig cpmg;

    std::string canonical;  // YAML after overrides
    std::uint64_t hash = 0;

    std::string hash_hex() const;
};

struct ConfigIssue {
    std::string path;  // dotted key, or the type it belongs to
    std::string message;
};

struct ConfigReport {
    std::vector<ConfigIssue> issues;
    bool ok() const { return issues.empty(); }
    std::string to_string() const;
};

/// Applies `key=value` overrides (value parsed as YAML) to the document text.
std::string apply_overrides(const std::string& yaml_text, const std::vector<std::string>& overrides);

/// Parses and validates; throws InvalidInput with every issue listed.
RunConfig parse_config(const std::string& yaml_text, const std::vector<std::string>& overrides = {});
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

/// Collects every parse and invariant problem instead of throwing on the first.
ConfigReport validate_config_text(const std::string& yaml_text, const std::vector<std::string>& overrides = {});

std::uint64_t fnv1a64(const std::string& text);

}  // namespace esrsim
