#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace esrsim {

/// One piece of the drive waveform. A driven segment holds the cavity input
/// at beta = amplitude * exp(-i phase) for `duration`; an ideal segment is an
/// instantaneous spin rotation by `angle` about (cos phase, sin phase, 0) and
/// has zero duration. In both cases phase 0 rotates spins about +x and
/// phase pi/2 about +y.
struct PulseSegment {
    double duration = 0.0;   // s
    double amplitude = 0.0;  // sqrt(photons/s)
    double phase = 0.0;      // rad
    bool ideal = false;
    double angle = 0.0;      // rad, ideal segments only
    double max_step = 0.0;   // s, solver step limit for this segment; 0 keeps the solver's
    std::string label;

    bool is_pulse() const { return ideal || amplitude != 0.0; }
};

struct AcquisitionWindow {
    double t_start = 0.0;
    double t_end = 0.0;
    std::string label;

    double center() const { return 0.5 * (t_start + t_end); }
    double duration() const { return t_end - t_start; }
};

struct PulseSequence {
    std::vector<PulseSegment> segments;
    std::vector<AcquisitionWindow> windows;
    double repetition_rate = 1.0;  // Hz

    double total_duration() const;
    int pulse_count() const;
    /// Start time of segment k.
    double segment_start(std::size_t k) const;
    void validate() const;
};

enum class SequenceKind { Hahn, Cpmg, InversionRecovery, Rabi, Absorption };

SequenceKind parse_sequence_kind(std::string_view name);
std::string_view to_string(SequenceKind kind);

/// A rectangular or ideal pulse used by the sequence builders.
struct PulseSpec {
    double duration = 0.0;   // s; ignored when ideal
    double amplitude = 0.0;  // sqrt(photons/s)
    bool ideal = true;
};

struct SequenceParams {
    double tau = 200e-6;            // s, pi/2-to-pi centre spacing
    int echoes = 1;                 // number of pi pulses (CPMG m)
    PulseSpec pi_half;
    PulseSpec pi;
    double pi_half_phase = 0.0;     // rad (X)
    double pi_phase = 1.5707963267948966;  // rad (Y)
    double echo_window = 20e-6;     // T_E, s
    double tail = 0.0;              // s, free evolution after the last window
    double refocus_amplitude = -1.0;  // Rabi: A_pi override; < 0 keeps pi.amplitude
    double recovery_wait = 0.0;     // s, inversion recovery
    double probe_duration = 500e-6; // absorption
    double probe_amplitude = 0.0;
    double saturation_duration = 50e-6;
    double saturation_gain_db = 20.0;  // above the pi-pulse power
    double repetition_rate = 1.0;   // Hz
};

PulseSequence build_sequence(SequenceKind kind, const SequenceParams& params);

/// Drive amplitude sqrt(P / (hbar omega0)) for an input power in watts.
double drive_amplitude(double power_watts, double omega0);
double dbm_to_watts(double dbm);

std::string sequence_to_json(const PulseSequence& seq);
PulseSequence sequence_from_json(const std::string& text);

}  // namespace esrsim
