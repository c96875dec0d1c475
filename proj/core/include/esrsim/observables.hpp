#pragma once

// Reduction of simulated traces to echo observables, decay fits and swept
// spectra.

#include "esrsim/ensemble.hpp"
#include "esrsim/spin_model.hpp"

#include <functional>
#include <iosfwd>
#include <vector>

namespace esrsim {

struct EchoObservables {
    double X = 0.0;       // integral of the I quadrature over the window
    double Q = 0.0;       // integral of the Q quadrature
    double A = 0.0;       // integral of sqrt(I^2 + Q^2)
    double window = 0.0;  // T_E, s
};

/// Rectangle-rule areas over [centre - T_E/2, centre + T_E/2) of `window`.
EchoObservables echo_area(const TimeTrace& trace, const AcquisitionWindow& window);

struct DecayFit {
    double amplitude = 0.0;
    double time_constant = 0.0;
    double offset = 0.0;
    double amplitude_stderr = 0.0;
    double time_constant_stderr = 0.0;
    double offset_stderr = 0.0;
    double rms_residual = 0.0;
    int iterations = 0;
};

/// Levenberg-Marquardt fit of a exp(-t/T) + c (c fixed at 0 when `fit_offset` is false).
/// Needs >= 4 points with strictly increasing t; throws FitFailure on non-convergence.
DecayFit fit_decay(const std::vector<double>& t, const std::vector<double>& y, bool fit_offset = true);

struct SweepPoint {
    double value = 0.0;  // swept quantity (field in T, amplitude, ...)
    EchoObservables echo;
    double stderr = 0.0;
};

void write_sweep_csv(std::ostream& os, const std::vector<SweepPoint>& points, const CsvHeader& header = {});

struct SweepTransition {
    LevelLabel lower;
    LevelLabel upper;
};

/// Everything needed to simulate an echo-detected field sweep.
struct SpectroConfig {
    SpinSystem spin;
    CavityParams cavity;
    CouplingDistribution coupling;
    double coupling_sx = 0.47;  // matrix element the coupling distribution was computed with
    FrequencyDistribution line;  // centre offset is set per field point
    double n_total = 1e4;
    DiscretizeOptions discretize;
    SequenceParams sequence;
    SolverConfig solver;
    std::vector<SweepTransition> transitions;
    Eigen::Vector3d field_direction = Eigen::Vector3d::UnitZ();
};

/// Hahn-echo amplitude area of the output field versus B0. Each transition
/// contributes a copy of the line centred on its frequency at B0 with its
/// couplings scaled by sx(B0) / coupling_sx.
std::vector<SweepPoint> field_sweep(const SpectroConfig& config, const std::vector<double>& fields);

/// Echo areas of Rabi sequences, one per refocusing amplitude.
std::vector<SweepPoint> rabi_sweep(const EnsembleState& state, const CavityParams& cavity,
                                   const SequenceParams& params, const SolverConfig& solver,
                                   const std::vector<double>& amplitudes);

/// Maximizes f on [lo, hi] by golden-section search; returns the arg max.
double golden_section_maximize(const std::function<double(double)>& f, double lo, double hi, double tol);

/// pi-pulse amplitude (pi/2 driven at half of it, same duration) at the first
/// maximum of the Hahn echo amplitude area inside [lo, hi].
double calibrate_pi_amplitude(const EnsembleState& state, const CavityParams& cavity, const SequenceParams& params,
                              const SolverConfig& solver, double lo, double hi, double rel_tol = 1e-3);

}  // namespace esrsim
