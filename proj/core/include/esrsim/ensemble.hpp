#pragma once

// Inhomogeneous spin ensemble coupled to a single cavity mode. The ensemble
// is split into sub-ensembles of identical detuning and coupling; their
// collective mean values are integrated together with the cavity field in
// the frame rotating at the cavity frequency.
//
// Conventions: S_- = sum_j sigma_-^(j), S_z = sum_j sigma_z^(j), so a fully
// polarized sub-ensemble of N spins has S_z = -N. Couplings stored on the
// ensemble are g / 2 pi in Hz; detunings are angular (rad/s).

#include "esrsim/field_geometry.hpp"
#include "esrsim/pulse_sequence.hpp"
#include "esrsim/time_trace.hpp"

#include <complex>
#include <optional>
#include <string>
#include <vector>

namespace esrsim {

struct CavityParams {
    double omega0 = constants::two_pi * 7.24e9;  // rad/s
    double kappa1 = 1.2e4;   // 1/s, input port
    double kappa2 = 5.6e4;   // 1/s, output port
    double kappaL = 8.36e4;  // 1/s, internal loss

    double kappa() const { return kappa1 + kappa2 + kappaL; }
    double quality() const { return omega0 / kappa(); }
    /// Throws InvalidInput; when `expected_q` is set the rates must reproduce it within 1 %.
    void validate(std::optional<double> expected_q = std::nullopt) const;
};

enum class LineShape { Lorentzian, Square, TiltedSquare, TwoPeak, Tabulated };

LineShape parse_line_shape(const std::string& name);
std::string to_string(LineShape shape);

/// Spin frequency density, expressed as offsets (Hz) from the line centre,
/// together with the bin grid on which it is sampled around the cavity.
struct FrequencyDistribution {
    LineShape kind = LineShape::TiltedSquare;
    double width = 3.25e6;         // Hz: FWHM (Lorentzian, each two-peak component) or full width (square)
    double tilt = 0.10;            // relative density change across the bin grid
    double splitting = 0.0;        // Hz, two-peak centre separation
    double second_peak_weight = 0.5;
    double center_offset = 0.0;    // Hz, line centre minus cavity frequency
    std::vector<double> table_offsets;  // Hz, tabulated kind
    std::vector<double> table_density;
    int bins = 450;
    double spacing = 1e3;          // Hz

    /// Probability density (1/Hz) at `offset` from the line centre.
    double density(double offset) const;
    /// Fraction of the line between two offsets from the line centre.
    double fraction(double lo, double hi) const;
    /// Detuning (Hz, relative to the cavity) of bin k.
    double bin_detuning(int k) const;
    void validate() const;
};

struct SubEnsemble {
    double count = 0.0;        // N_m
    double detuning = 0.0;     // Delta_m, rad/s
    double g = 0.0;            // Hz
    double gamma_perp = 0.0;   // 1/s
    double gamma_par = 0.0;    // 1/s
    double sx = 0.0;           // collective Bloch vector
    double sy = 0.0;
    double sz = 0.0;
};

/// Struct-of-arrays storage for the sub-ensembles.
struct SpinEnsemble {
    std::vector<double> count;
    std::vector<double> detuning;
    std::vector<double> g;
    std::vector<double> gamma_perp;
    std::vector<double> gamma_par;
    std::vector<complex> sminus;
    std::vector<double> sz;

    std::size_t size() const { return count.size(); }
    SubEnsemble at(std::size_t m) const;
    void push_back(const SubEnsemble& s);
    void append(const SpinEnsemble& other);
    double total_count() const;
    double total_sz() const;
    complex total_sminus() const;
    /// sx^2 + sy^2 + sz^2 of sub-ensemble m.
    double bloch_norm2(std::size_t m) const;
};

struct EnsembleState {
    complex cavity{0.0, 0.0};  // <a>, sqrt(photons)
    SpinEnsemble spins;
    double time = 0.0;         // s
};

struct DiscretizeOptions {
    double gamma_rep = 1.0;     // Hz, repetition rate
    double gamma_perp = 0.0;    // 1/s
    /// When set, every sub-ensemble relaxes at this rate instead of its Purcell rate.
    std::optional<double> gamma_par;
    /// Overall scale of all couplings (e.g. a transition's sx relative to the one used for the distribution).
    double coupling_scale = 1.0;
};

/// N_m = N_tot rho(g_k) w_f(bin); gamma_par from the Purcell rate
/// kappa g^2 / (Delta^2 + kappa^2/4); S_z(0) = -N_m (1 - exp(-gamma_par / gamma_rep)).
SpinEnsemble discretize_ensemble(const CouplingDistribution& coupling, const FrequencyDistribution& freq,
                                 double n_total, const CavityParams& cavity, const DiscretizeOptions& opts);

double purcell_rate(double g_hz, double detuning, double kappa);

struct SolverConfig {
    double rtol = 1e-8;
    double atol = 1e-10;
    double max_step = 1e-6;      // s
    double initial_step = 1e-9;  // s
    double min_step = 1e-15;     // s
    double sample_step = 1e-7;   // s, output grid
    long max_steps = 50'000'000;
    int threads = 0;             // 0: OpenMP default
    bool record_spins = true;    // sample S_z and S_- totals alongside <a>
    bool purcell_relaxation = true;  // gamma_par terms active in the equations of motion

    void validate() const;
};

struct IntegrationResult {
    TimeTrace trace;
    EnsembleState final_state;
    long accepted_steps = 0;
    long rejected_steps = 0;
};

/// Integrates the driven cavity and all sub-ensembles through `seq`:
///   da/dt   = sqrt(kappa1/2) beta - kappa/2 a - i sum_m g_m S-_m
///   dS-/dt  = -(i Delta + gamma_perp + gamma_par/2) S- + i g S_z a
///   dS_z/dt = -gamma_par (S_z + N) + 2 i g (a^* S- - a S+)
/// with g in rad/s. Uses an integrating-factor Dormand-Prince 5(4) scheme
/// that treats the diagonal linear part exactly. Throws SolverFailure.
IntegrationResult integrate(const EnsembleState& initial, const CavityParams& cavity, const PulseSequence& seq,
                            const SolverConfig& solver);

/// Instantaneous rotation of every sub-ensemble by `angle` about (cos phase, sin phase, 0).
void rotate_spins(SpinEnsemble& spins, double angle, double phase);

// Closed-form results for equal coupling and a Lorentzian line of FWHM w,
// all in angular units (g, w, kappa in rad/s).

/// Lorentzian detuning density f(Delta) = (w / 2 pi) / (Delta^2 + w^2 / 4).
double lorentzian_density(double detuning, double w);

/// <S_-(t)> about the echo at t = 0: -i p N / 2 exp(-w |t| / 2).
complex analytic_sminus(double p, double n, double w, double t);

/// <a_c(t)> about the echo at t = 0; switches to the kappa = w limit when |kappa - w| / kappa < 1e-6.
double analytic_echo(double g, double p, double n, double w, double kappa, double t);

/// Integral of kappa2 <a_c(t)>^2 over all t: 2 g^2 p^2 N^2 kappa2 (kappa + 2w) / ((kappa + w)^2 w kappa).
double analytic_echo_energy(double g, double p, double n, double w, double kappa, double kappa2);

/// C = 4 g^2 N / (kappa w).
double cooperativity(double g, double n, double kappa, double w);

}  // namespace esrsim
