#pragma once

// Amplification and demodulation chain, matched filtering and sensitivity
// formulas. Noise occupations are photons; traces are in sqrt(photons/s).

#include "esrsim/time_trace.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace esrsim {

enum class AmpMode { Off, Nondegenerate, Degenerate };

AmpMode parse_amp_mode(const std::string& name);
std::string to_string(AmpMode mode);

struct NoiseModel {
    double n_eq = 0.5;
    std::optional<double> n_amp;  // unset: 50 (off), 0.5 (nondegenerate), 0 (degenerate)
    double n_sp = 0.0;
    double n_syst = 0.0;          // noise of the following stage, referred to its own input
    AmpMode mode = AmpMode::Nondegenerate;
    double gain = 1.0;            // power gain G

    double amplifier_noise() const;
    /// Total noise of the X / Y quadrature referred to the chain input.
    double input_noise_x() const;
    double input_noise_y() const;
    double gain_x() const;
    double gain_y() const;
    void validate() const;
};

/// Amplified quadratures: X * sqrt(G_X), Y * sqrt(G_Y) plus Gaussian noise of
/// per-sample variance G_q n_q / (2 dt). Deterministic for a given seed.
TimeTrace amplify(const TimeTrace& trace, const NoiseModel& model, std::uint64_t seed);

/// Real template normalized to sum u^2 dt = 1, aligned to a trace by its t0.
struct MatchedFilter {
    double t0 = 0.0;
    double dt = 0.0;
    std::vector<double> u;

    /// Template from the I quadrature of `signal` over [t_start, t_end].
    static MatchedFilter from_signal(const TimeTrace& signal, double t_start, double t_end);
    static MatchedFilter from_samples(double t0, double dt, std::vector<double> u);
    double norm2() const;
    void validate() const;
};

/// sum X(t_k) u(t_k) dt over the overlap of trace and template.
double filter_output(const TimeTrace& trace, const MatchedFilter& filter);

/// |sum X u dt| / sqrt(n / 2); n is the noise of the trace's X quadrature in the trace's own units.
double snr_matched_filter(const TimeTrace& trace, const MatchedFilter& filter, double n);

struct MonteCarloSnr {
    double estimate = 0.0;        // mean / standard deviation of the filter output
    double standard_error = 0.0;
    double expected = 0.0;        // noiseless filter output / sqrt(n_out / 2)
    int trials = 0;
};

/// Filter outputs of `trials` independently seeded noisy copies of `signal`.
MonteCarloSnr monte_carlo_snr(const TimeTrace& signal, const MatchedFilter& filter, const NoiseModel& model,
                              int trials, std::uint64_t seed);

/// Optimal-template SNR of the Lorentzian echo: 2gpN/(kappa+w) sqrt(kappa2 (kappa+2w) / (w kappa n)).
double snr_lorentzian(double g, double p, double n_spins, double kappa, double kappa2, double w, double n);

/// (kappa + w)/(2 g p) sqrt(n w kappa / (kappa2 (kappa + 2w))).
double nmin(double g, double p, double kappa, double kappa2, double w, double n);
/// (1 / g p) sqrt(kappa n / T_E).
double nmin_conventional(double g, double p, double kappa, double n, double echo_time);

struct CpmgGain {
    double ratio = 0.0;
    bool valid = true;  // false when T >= T_cpmg
};

/// sqrt((T_cpmg / 2T)(1 - exp(-2 m T / T_cpmg))).
CpmgGain cpmg_snr_gain(int m, double period, double t_cpmg);

/// sqrt(G n / ((G - 1) n + n_syst)): SNR relative to its G -> infinity asymptote.
std::vector<double> snr_vs_gain(const std::vector<double>& gains, double n, double n_syst);

std::string snr_report_json(double snr, double n, const NoiseModel& model, std::uint64_t seed,
                            const std::string& template_id);

}  // namespace esrsim
