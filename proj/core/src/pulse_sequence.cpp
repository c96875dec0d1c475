#include "esrsim/pulse_sequence.hpp"

#include "esrsim/constants.hpp"
#include "esrsim/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace esrsim {

using constants::pi;

double PulseSequence::total_duration() const {
    double t = 0.0;
    for (const auto& s : segments) t += s.duration;
    return t;
}

int PulseSequence::pulse_count() const {
    return static_cast<int>(std::count_if(segments.begin(), segments.end(), [](const auto& s) { return s.is_pulse(); }));
}

double PulseSequence::segment_start(std::size_t k) const {
    if (k > segments.size()) throw InvalidInput("segment index out of range");
    double t = 0.0;
    for (std::size_t i = 0; i < k; ++i) t += segments[i].duration;
    return t;
}

void PulseSequence::validate() const {
    if (!(repetition_rate > 0.0)) throw InvalidInput("repetition rate must be positive");
    for (const auto& s : segments) {
        if (!(s.duration >= 0.0) || !std::isfinite(s.duration)) throw InvalidInput("segment duration must be >= 0");
        if (!std::isfinite(s.amplitude) || !std::isfinite(s.phase)) throw InvalidInput("segment drive must be finite");
        if (s.ideal && s.duration != 0.0) throw InvalidInput("ideal rotations must have zero duration");
        if (s.ideal && !std::isfinite(s.angle)) throw InvalidInput("ideal rotation angle must be finite");
        if (!(s.max_step >= 0.0)) throw InvalidInput("segment max_step must be >= 0");
    }
    const double total = total_duration();
    const double slack = 1e-12 * std::max(total, 1e-9);
    std::vector<AcquisitionWindow> w = windows;
    std::sort(w.begin(), w.end(), [](const auto& a, const auto& b) { return a.t_start < b.t_start; });
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (!(w[i].t_end > w[i].t_start)) throw InvalidInput("window '" + w[i].label + "' is empty");
        if (w[i].t_start < -slack || w[i].t_end > total + slack)
            throw InvalidInput("window '" + w[i].label + "' extends beyond the sequence");
        if (i > 0 && w[i].t_start < w[i - 1].t_end - slack)
            throw InvalidInput("windows '" + w[i - 1].label + "' and '" + w[i].label + "' overlap");
    }
}

SequenceKind parse_sequence_kind(std::string_view name) {
    if (name == "hahn") return SequenceKind::Hahn;
    if (name == "cpmg") return SequenceKind::Cpmg;
    if (name == "inversion_recovery") return SequenceKind::InversionRecovery;
    if (name == "rabi") return SequenceKind::Rabi;
    if (name == "absorption") return SequenceKind::Absorption;
    throw InvalidInput("unknown sequence '" + std::string(name) + "'");
}

std::string_view to_string(SequenceKind kind) {
    switch (kind) {
    case SequenceKind::Hahn: return "hahn";
    case SequenceKind::Cpmg: return "cpmg";
    case SequenceKind::InversionRecovery: return "inversion_recovery";
    case SequenceKind::Rabi: return "rabi";
    case SequenceKind::Absorption: return "absorption";
    }
    return "unknown";
}

namespace {

double width_of(const PulseSpec& p) { return p.ideal ? 0.0 : p.duration; }

PulseSegment pulse(const PulseSpec& p, double angle, double phase, std::string label) {
    PulseSegment s;
    s.phase = phase;
    s.label = std::move(label);
    if (p.ideal) {
        s.ideal = true;
        s.angle = angle;
    } else {
        s.duration = p.duration;
        s.amplitude = p.amplitude;
    }
    return s;
}

PulseSegment delay(double d, std::string label = "delay") {
    PulseSegment s;
    s.duration = d;
    s.label = std::move(label);
    return s;
}

void check_pulse(const PulseSpec& p, const char* name) {
    if (p.ideal) return;
    if (!(p.duration > 0.0)) throw InvalidInput(std::string(name) + " duration must be positive");
    if (!(p.amplitude >= 0.0)) throw InvalidInput(std::string(name) + " amplitude must be non-negative");
}

// Appends pi/2 - (tau - pi)^m with echo windows, starting at the current end of `seq`.
void append_echo_train(PulseSequence& seq, const SequenceParams& p, const PulseSpec& refocus) {
    const double d1 = width_of(p.pi_half);
    const double d2 = width_of(refocus);
    if (!(p.tau > 0.5 * (d1 + d2))) throw InvalidInput("tau must exceed the pulse durations");
    if (!(p.echo_window > 0.0)) throw InvalidInput("echo window must be positive");
    if (p.echoes < 1) throw InvalidInput("number of echoes must be >= 1");
    if (p.echoes > 1 && !(2.0 * p.tau > d2 + p.echo_window))
        throw InvalidInput("echo windows overlap the refocusing pulses");

    const double t0 = seq.total_duration();
    seq.segments.push_back(pulse(p.pi_half, 0.5 * pi, p.pi_half_phase, "pi_half"));
    seq.segments.push_back(delay(p.tau - 0.5 * (d1 + d2)));
    double centre = t0 + 0.5 * d1 + p.tau;  // first refocusing pulse
    for (int j = 1; j <= p.echoes; ++j) {
        seq.segments.push_back(pulse(refocus, pi, p.pi_phase, "pi_" + std::to_string(j)));
        const double echo = centre + p.tau;
        AcquisitionWindow w;
        w.t_start = echo - 0.5 * p.echo_window;
        w.t_end = echo + 0.5 * p.echo_window;
        w.label = p.echoes == 1 ? "echo" : "echo_" + std::to_string(j);
        seq.windows.push_back(w);
        if (j < p.echoes) {
            seq.segments.push_back(delay(2.0 * p.tau - d2));
            centre += 2.0 * p.tau;
        } else {
            const double end = w.t_end + p.tail;
            seq.segments.push_back(delay(end - (centre + 0.5 * d2)));
        }
    }
}

}  // namespace

PulseSequence build_sequence(SequenceKind kind, const SequenceParams& p) {
    check_pulse(p.pi_half, "pi/2 pulse");
    check_pulse(p.pi, "pi pulse");
    if (!(p.tail >= 0.0)) throw InvalidInput("tail must be non-negative");
    PulseSequence seq;
    seq.repetition_rate = p.repetition_rate;
    switch (kind) {
    case SequenceKind::Hahn: {
        SequenceParams q = p;
        q.echoes = 1;
        append_echo_train(seq, q, p.pi);
        break;
    }
    case SequenceKind::Cpmg: append_echo_train(seq, p, p.pi); break;
    case SequenceKind::Rabi: {
        SequenceParams q = p;
        q.echoes = 1;
        PulseSpec refocus = p.pi;
        if (p.refocus_amplitude >= 0.0) {
            if (refocus.ideal) throw InvalidInput("Rabi sequences need a finite-duration refocusing pulse");
            refocus.amplitude = p.refocus_amplitude;
        }
        append_echo_train(seq, q, refocus);
        break;
    }
    case SequenceKind::InversionRecovery: {
        if (!(p.recovery_wait >= 0.0)) throw InvalidInput("recovery wait must be non-negative");
        seq.segments.push_back(pulse(p.pi, pi, 0.0, "inversion"));
        PulseSegment wait = delay(p.recovery_wait, "recovery");
        wait.max_step = 1e-3;
        seq.segments.push_back(wait);
        SequenceParams q = p;
        q.echoes = 1;
        append_echo_train(seq, q, p.pi);
        break;
    }
    case SequenceKind::Absorption: {
        if (!(p.probe_duration > 0.0) || !(p.saturation_duration > 0.0))
            throw InvalidInput("absorption probe and saturation durations must be positive");
        if (!(p.probe_amplitude >= 0.0)) throw InvalidInput("probe amplitude must be non-negative");
        if (p.pi.ideal) throw InvalidInput("absorption sequences need a finite-duration pi pulse");
        PulseSegment probe;
        probe.duration = p.probe_duration;
        probe.amplitude = p.probe_amplitude;
        probe.label = "probe_unsaturated";
        seq.segments.push_back(probe);
        PulseSegment sat;
        sat.duration = p.saturation_duration;
        sat.amplitude = p.pi.amplitude * std::pow(10.0, p.saturation_gain_db / 20.0);
        sat.label = "saturation";
        seq.segments.push_back(sat);
        probe.label = "probe_saturated";
        seq.segments.push_back(probe);
        if (p.tail > 0.0) seq.segments.push_back(delay(p.tail));
        seq.windows.push_back({0.0, p.probe_duration, "probe_unsaturated"});
        const double s = p.probe_duration + p.saturation_duration;
        seq.windows.push_back({s, s + p.probe_duration, "probe_saturated"});
        break;
    }
    }
    seq.validate();
    return seq;
}

double drive_amplitude(double power_watts, double omega0) {
    if (!(power_watts >= 0.0) || !(omega0 > 0.0)) throw InvalidInput("power must be >= 0 and omega0 > 0");
    return std::sqrt(power_watts / (constants::hbar * omega0));
}

double dbm_to_watts(double dbm) { return 1e-3 * std::pow(10.0, dbm / 10.0); }

std::string sequence_to_json(const PulseSequence& seq) {
    nlohmann::ordered_json j;
    j["repetition_rate_Hz"] = seq.repetition_rate;
    j["segments"] = nlohmann::ordered_json::array();
    for (const auto& s : seq.segments) {
        nlohmann::ordered_json o;
        o["label"] = s.label;
        o["duration_s"] = s.duration;
        o["amplitude"] = s.amplitude;
        o["phase_rad"] = s.phase;
        o["ideal"] = s.ideal;
        if (s.ideal) o["angle_rad"] = s.angle;
        if (s.max_step > 0.0) o["max_step_s"] = s.max_step;
        j["segments"].push_back(o);
    }
    j["windows"] = nlohmann::ordered_json::array();
    for (const auto& w : seq.windows)
        j["windows"].push_back({{"label", w.label}, {"t_start_s", w.t_start}, {"t_end_s", w.t_end}});
    return j.dump(2);
}

PulseSequence sequence_from_json(const std::string& text) {
    PulseSequence seq;
    try {
        const auto j = nlohmann::json::parse(text);
        seq.repetition_rate = j.value("repetition_rate_Hz", 1.0);
        for (const auto& o : j.at("segments")) {
            PulseSegment s;
            s.label = o.value("label", "");
            s.duration = o.at("duration_s").get<double>();
            s.amplitude = o.value("amplitude", 0.0);
            s.phase = o.value("phase_rad", 0.0);
            s.ideal = o.value("ideal", false);
            s.angle = o.value("angle_rad", 0.0);
            s.max_step = o.value("max_step_s", 0.0);
            seq.segments.push_back(s);
        }
        if (j.contains("windows"))
            for (const auto& o : j.at("windows"))
                seq.windows.push_back(
                    {o.at("t_start_s").get<double>(), o.at("t_end_s").get<double>(), o.value("label", "")});
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("bad pulse sequence JSON: ") + e.what());
    }
    seq.validate();
    return seq;
}

}  // namespace esrsim
