#include "esrsim/detection.hpp"

#include "esrsim/error.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <random>

namespace esrsim {

AmpMode parse_amp_mode(const std::string& name) {
    if (name == "off") return AmpMode::Off;
    if (name == "nondegenerate") return AmpMode::Nondegenerate;
    if (name == "degenerate") return AmpMode::Degenerate;
    throw InvalidInput("unknown amplifier mode '" + name + "'");
}

std::string to_string(AmpMode mode) {
    switch (mode) {
    case AmpMode::Off: return "off";
    case AmpMode::Nondegenerate: return "nondegenerate";
    case AmpMode::Degenerate: return "degenerate";
    }
    return "unknown";
}

double NoiseModel::amplifier_noise() const {
    if (n_amp) return *n_amp;
    switch (mode) {
    case AmpMode::Off: return 50.0;
    case AmpMode::Nondegenerate: return 0.5;
    case AmpMode::Degenerate: return 0.0;
    }
    return 0.0;
}

double NoiseModel::gain_x() const { return gain; }
double NoiseModel::gain_y() const { return mode == AmpMode::Degenerate ? 1.0 / gain : gain; }

// Off: the signal reaches the following chain directly, whose noise is n_amp.
// Nondegenerate: the idler port adds (G - 1)/G n_amp referred to the input.
// Degenerate: the amplified quadrature receives no added noise.
double NoiseModel::input_noise_x() const {
    const double base = n_eq + n_sp;
    switch (mode) {
    case AmpMode::Off: return base + amplifier_noise() + n_syst;
    case AmpMode::Nondegenerate: return base + (gain - 1.0) / gain * amplifier_noise() + n_syst / gain;
    case AmpMode::Degenerate: return base + n_syst / gain;
    }
    return base;
}

double NoiseModel::input_noise_y() const {
    if (mode == AmpMode::Degenerate) return n_eq + n_sp + n_syst * gain;
    return input_noise_x();
}

void NoiseModel::validate() const {
    if (!(n_eq >= 0.0) || !(n_sp >= 0.0) || !(n_syst >= 0.0) || !(amplifier_noise() >= 0.0))
        throw InvalidInput("noise occupations must be non-negative");
    if (!(gain >= 1.0) || !std::isfinite(gain)) throw InvalidInput("amplifier gain must be >= 1");
    if (mode == AmpMode::Off && gain != 1.0) throw InvalidInput("amplifier mode 'off' requires G = 1");
}

TimeTrace amplify(const TimeTrace& trace, const NoiseModel& model, std::uint64_t seed) {
    model.validate();
    if (!(trace.dt > 0.0)) throw InvalidInput("trace sampling step must be positive");
    const double gx = model.gain_x(), gy = model.gain_y();
    const double sx = std::sqrt(gx * model.input_noise_x() / (2.0 * trace.dt));
    const double sy = std::sqrt(gy * model.input_noise_y() / (2.0 * trace.dt));
    const double ax = std::sqrt(gx), ay = std::sqrt(gy);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    TimeTrace out;
    out.t0 = trace.t0;
    out.dt = trace.dt;
    out.units = trace.units;
    out.seed = seed;
    out.samples.resize(trace.size());
    for (std::size_t k = 0; k < trace.size(); ++k) {
        const double nx = normal(rng);
        const double ny = normal(rng);
        out.samples[k] = complex(ax * trace.samples[k].real() + sx * nx, ay * trace.samples[k].imag() + sy * ny);
    }
    return out;
}

MatchedFilter MatchedFilter::from_signal(const TimeTrace& signal, double t_start, double t_end) {
    if (!(t_end > t_start)) throw InvalidInput("matched filter span is empty");
    MatchedFilter f;
    f.dt = signal.dt;
    const std::size_t k0 = signal.index_at(t_start);
    std::size_t k1 = k0;
    while (k1 < signal.size() && signal.time(k1) <= t_end + 1e-9 * signal.dt) ++k1;
    if (k1 == k0) throw InvalidInput("matched filter span holds no samples");
    f.t0 = signal.time(k0);
    f.u.reserve(k1 - k0);
    for (std::size_t k = k0; k < k1; ++k) f.u.push_back(signal.samples[k].real());
    const double n2 = f.norm2();
    if (!(n2 > 0.0)) throw InvalidInput("matched filter template has zero norm");
    const double s = 1.0 / std::sqrt(n2);
    for (double& v : f.u) v *= s;
    return f;
}

MatchedFilter MatchedFilter::from_samples(double t0, double dt, std::vector<double> u) {
    if (!(dt > 0.0)) throw InvalidInput("matched filter sampling step must be positive");
    MatchedFilter f;
    f.t0 = t0;
    f.dt = dt;
    f.u = std::move(u);
    const double n2 = f.norm2();
    if (!(n2 > 0.0)) throw InvalidInput("matched filter template has zero norm");
    const double s = 1.0 / std::sqrt(n2);
    for (double& v : f.u) v *= s;
    return f;
}

double MatchedFilter::norm2() const {
    double s = 0.0;
    for (double v : u) s += v * v;
    return s * dt;
}

void MatchedFilter::validate() const {
    if (!(dt > 0.0) || u.empty()) throw InvalidInput("matched filter is empty");
    if (std::abs(norm2() - 1.0) > 1e-9) throw InvalidInput("matched filter is not normalized");
}

double filter_output(const TimeTrace& trace, const MatchedFilter& filter) {
    filter.validate();
    if (std::abs(filter.dt - trace.dt) > 1e-9 * trace.dt)
        throw InvalidInput("matched filter and trace have different sampling steps");
    const double shift = (filter.t0 - trace.t0) / trace.dt;
    const long off = std::lround(shift);
    double acc = 0.0;
    for (std::size_t j = 0; j < filter.u.size(); ++j) {
        const long k = off + static_cast<long>(j);
        if (k < 0 || k >= static_cast<long>(trace.size())) continue;
        acc += trace.samples[static_cast<std::size_t>(k)].real() * filter.u[j];
    }
    return acc * trace.dt;
}

double snr_matched_filter(const TimeTrace& trace, const MatchedFilter& filter, double n) {
    if (!(n > 0.0)) throw InvalidInput("noise occupation must be positive");
    return std::abs(filter_output(trace, filter)) / std::sqrt(0.5 * n);
}

MonteCarloSnr monte_carlo_snr(const TimeTrace& signal, const MatchedFilter& filter, const NoiseModel& model,
                              int trials, std::uint64_t seed) {
    if (trials < 2) throw InvalidInput("Monte-Carlo SNR needs at least 2 trials");
    model.validate();
    filter.validate();
    std::vector<double> y(static_cast<std::size_t>(trials));
#pragma omp parallel for schedule(static)
    for (int i = 0; i < trials; ++i) {
        // independent stream per trial
        std::seed_seq ss{seed, static_cast<std::uint64_t>(i)};
        std::mt19937_64 gen(ss);
        y[static_cast<std::size_t>(i)] = filter_output(amplify(signal, model, gen()), filter);
    }
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= trials;
    double var = 0.0;
    for (double v : y) var += (v - mean) * (v - mean);
    var /= (trials - 1);
    MonteCarloSnr r;
    r.trials = trials;
    r.estimate = std::abs(mean) / std::sqrt(var);
    // delta-method standard error of mean/sd for Gaussian outputs
    r.standard_error = std::sqrt((1.0 + 0.5 * r.estimate * r.estimate) / trials);
    const double n_out = model.gain_x() * model.input_noise_x();
    TimeTrace clean = signal;
    for (auto& s : clean.samples) s = complex(std::sqrt(model.gain_x()) * s.real(), 0.0);
    r.expected = snr_matched_filter(clean, filter, n_out);
    return r;
}

double snr_lorentzian(double g, double p, double n_spins, double kappa, double kappa2, double w, double n) {
    return 2.0 * g * p * n_spins / (kappa + w) * std::sqrt(kappa2 * (kappa + 2.0 * w) / (w * kappa * n));
}

double nmin(double g, double p, double kappa, double kappa2, double w, double n) {
    if (!(g > 0.0) || !(p > 0.0) || p > 1.0 || !(kappa > 0.0) || !(kappa2 > 0.0) || !(w > 0.0) || !(n > 0.0))
        throw InvalidInput("nmin needs positive parameters and p in (0, 1]");
    return (kappa + w) / (2.0 * g * p) * std::sqrt(n * w * kappa / (kappa2 * (kappa + 2.0 * w)));
}

double nmin_conventional(double g, double p, double kappa, double n, double echo_time) {
    if (!(g > 0.0) || !(p > 0.0) || p > 1.0 || !(kappa > 0.0) || !(n > 0.0) || !(echo_time > 0.0))
        throw InvalidInput("nmin needs positive parameters and p in (0, 1]");
    return std::sqrt(kappa * n / echo_time) / (g * p);
}

CpmgGain cpmg_snr_gain(int m, double period, double t_cpmg) {
    if (m < 1 || !(period > 0.0) || !(t_cpmg > 0.0)) throw InvalidInput("cpmg gain needs m >= 1, T > 0, T_cpmg > 0");
    CpmgGain g;
    g.ratio = std::sqrt(t_cpmg / (2.0 * period) * -std::expm1(-2.0 * m * period / t_cpmg));
    g.valid = period < t_cpmg;
    return g;
}

std::vector<double> snr_vs_gain(const std::vector<double>& gains, double n, double n_syst) {
    if (!(n > 0.0) || !(n_syst >= 0.0)) throw InvalidInput("snr_vs_gain needs n > 0 and n_syst >= 0");
    std::vector<double> out;
    out.reserve(gains.size());
    for (double g : gains) {
        if (!(g >= 1.0)) throw InvalidInput("gain must be >= 1");
        out.push_back(std::sqrt(g * n / ((g - 1.0) * n + n_syst)));
    }
    return out;
}

std::string snr_report_json(double snr, double n, const NoiseModel& model, std::uint64_t seed,
                            const std::string& template_id) {
    nlohmann::ordered_json j;
    j["snr"] = snr;
    j["n"] = n;
    j["G"] = model.gain;
    j["mode"] = to_string(model.mode);
    j["seed"] = seed;
    j["template_id"] = template_id;
    return j.dump(2);
}

}  // namespace esrsim
