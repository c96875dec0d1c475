#include "esrsim/experiments.hpp"

#include "esrsim/error.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace esrsim {

using constants::pi;
using constants::two_pi;
using json = nlohmann::ordered_json;

const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names{"spectrum", "rabi",       "hahn",       "cpmg",
                                                "t1",       "t2",         "absorption", "sensitivity"};
    return names;
}

bool is_experiment(const std::string& name) {
    for (const auto& n : experiment_names())
        if (n == name) return true;
    return false;
}

ImplantationProfile build_profile(const RunConfig& c) {
    const auto& im = c.implantation;
    if (im.kind == "skew_gaussian")
        return ImplantationProfile::skew_gaussian(im.peak_depth, im.sigma_shallow, im.sigma_deep, im.max_depth,
                                                  im.samples);
    if (im.kind == "uniform") return ImplantationProfile::uniform(im.min_depth, im.max_depth);
    if (im.kind == "csv") {
        std::ifstream is(im.file);
        if (!is) throw InvalidInput("cannot open implantation file '" + im.file + "'");
        return read_implantation_csv(is);
    }
    throw InvalidInput("unknown implantation kind '" + im.kind + "'");
}

CouplingDistribution build_coupling(const RunConfig& c, int bins) {
    return coupling_distribution(c.geometry, build_profile(c), c.region, c.theta, c.coupling_sx, bins,
                                 c.spin.gamma_e);
}

EnsembleState build_ensemble(const RunConfig& c, const CouplingDistribution& coupling,
                             const FrequencyDistribution& line, double gamma_perp) {
    DiscretizeOptions opts;
    opts.gamma_rep = c.repetition_rate;
    opts.gamma_perp = gamma_perp;
    opts.gamma_par = c.gamma_par;
    EnsembleState st;
    st.spins = discretize_ensemble(coupling, line, c.n_total, c.cavity, opts);
    return st;
}

std::vector<CrossingRow> crossing_table(const RunConfig& c, double b_max) {
    const double f0 = c.cavity.omega0 / two_pi;
    std::vector<CrossingRow> rows;
    for (const auto& tr : c.spectrum.transitions) {
        const CrossingField cf = find_crossing_field(c.spin, tr.lower, tr.upper, f0, 0.0, b_max, c.field_direction);
        const EnergyLevels lv = eigensystem(c.spin, cf.field * c.field_direction);
        const int lo = lv.index_of(tr.lower), up = lv.index_of(tr.upper);
        CrossingRow r;
        r.field = cf.field;
        r.transition.lower = tr.lower;
        r.transition.upper = tr.upper;
        r.transition.frequency = lv.eigenvalues(up) - lv.eigenvalues(lo);
        r.transition.sx_element = sx_element(lv, c.spin, lo, up);
        r.transition.dfdB = cf.dfdB;
        rows.push_back(r);
    }
    return rows;
}

std::string format_crossing_table(const std::vector<CrossingRow>& rows) {
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-10s %-10s %14s %14s %16s %8s\n", "lower", "upper", "B_cross (mT)",
                  "f (GHz)", "df/dB (GHz/T)", "sx");
    os << buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-10s %-10s %14.4f %14.6f %16.3f %8.4f\n",
                      r.transition.lower.to_string().c_str(), r.transition.upper.to_string().c_str(),
                      r.field * 1e3, r.transition.frequency * 1e-9, r.transition.dfdB * 1e-9,
                      r.transition.sx_element);
        os << buf;
    }
    return os.str();
}

std::string manifest_json(const RunManifest& m) {
    json j;
    j["experiment"] = m.experiment;
    j["config_hash"] = m.config_hash;
    j["tool_version"] = m.tool_version;
    j["seed"] = m.seed;
    j["wall_clock_s"] = m.wall_clock_s;
    j["files"] = m.files;
    return j.dump(2) + "\n";
}

namespace {

class Output {
public:
    Output(const RunConfig& c, std::string experiment, std::filesystem::path dir)
        : config_(c), experiment_(std::move(experiment)), dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    CsvHeader header(const std::string& units) const {
        return {{"config_hash", config_.hash_hex()},
                {"experiment", experiment_},
                {"seed", std::to_string(config_.seed)},
                {"units", units},
                {"tool_version", kToolVersion}};
    }

    void trace(const std::string& name, TimeTrace tr) {
        tr.seed = config_.seed;  // seed and units are written from the trace itself
        CsvHeader h = header(tr.units);
        h.erase("seed");
        h.erase("units");
        std::ofstream os = open(name);
        write_trace_csv(os, tr, h);
    }

    void sweep(const std::string& name, const std::vector<SweepPoint>& pts, const std::string& units) {
        std::ofstream os = open(name);
        write_sweep_csv(os, pts, header(units));
    }

    /// CSV with arbitrary numeric columns.
    void table(const std::string& name, const std::vector<std::string>& cols,
               const std::vector<std::vector<double>>& rows, const std::string& units) {
        std::ofstream os = open(name);
        for (const auto& [k, v] : header(units)) os << "# " << k << '=' << v << '\n';
        for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
        os << '\n';
        for (const auto& r : rows) {
            for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << format_double(r[i]);
            os << '\n';
        }
    }

    void observables(const std::string& name, json body) {
        json j;
        j["config_hash"] = config_.hash_hex();
        j["experiment"] = experiment_;
        j["seed"] = config_.seed;
        j["tool_version"] = kToolVersion;
        for (auto& [k, v] : body.items()) j[k] = v;
        std::ofstream os = open(name);
        os << j.dump(2) << '\n';
    }

    void text(const std::string& name, const std::string& body) {
        std::ofstream os = open(name);
        os << body;
    }

    const std::vector<std::string>& files() const { return files_; }

private:
    std::ofstream open(const std::string& name) {
        std::ofstream os(dir_ / name, std::ios::binary);
        if (!os) throw Error("cannot write '" + (dir_ / name).string() + "'");
        files_.push_back(name);
        return os;
    }

    const RunConfig& config_;
    std::string experiment_;
    std::filesystem::path dir_;
    std::vector<std::string> files_;
};

json echo_json(const EchoObservables& e) {
    return json{{"X_e", e.X}, {"Q_e", e.Q}, {"A_e", e.A}, {"T_E_s", e.window}};
}

json fit_json(const DecayFit& f) {
    return json{{"amplitude", f.amplitude},
                {"time_constant_s", f.time_constant},
                {"offset", f.offset},
                {"amplitude_stderr", f.amplitude_stderr},
                {"time_constant_stderr_s", f.time_constant_stderr},
                {"offset_stderr", f.offset_stderr},
                {"rms_residual", f.rms_residual}};
}

struct EchoRun {
    TimeTrace output;  // sqrt(kappa2) <a>
    PulseSequence seq;
    long steps = 0;
};

EchoRun simulate(const RunConfig& c, const EnsembleState& st, SequenceKind kind, const SequenceParams& p,
                 bool cycle, bool record_spins) {
    EchoRun r;
    r.seq = build_sequence(kind, p);
    SolverConfig sc = c.solver;
    sc.record_spins = record_spins;
    sc.purcell_relaxation = c.purcell;
    IntegrationResult res = integrate(st, c.cavity, r.seq, sc);
    r.steps = res.accepted_steps;
    TimeTrace tr = std::move(res.trace);
    if (cycle) {
        SequenceParams q = p;
        q.pi_half_phase += pi;
        IntegrationResult res2 = integrate(st, c.cavity, build_sequence(kind, q), sc);
        r.steps += res2.accepted_steps;
        tr = phase_cycle(tr, res2.trace);
    }
    r.output = output_field(tr, c.cavity.kappa2);
    return r;
}

FrequencyDistribution resized_line(const FrequencyDistribution& line, int bins) {
    FrequencyDistribution l = line;
    if (l.kind == LineShape::TiltedSquare) l.tilt *= static_cast<double>(bins) / line.bins;  // same slope per Hz
    l.bins = bins;
    return l;
}

double mean_abs(const TimeTrace& tr, double t0, double t1) {
    double s = 0.0;
    int n = 0;
    for (std::size_t k = tr.index_at(t0); k < tr.size() && tr.time(k) < t1; ++k, ++n) s += std::abs(tr.samples[k]);
    return n ? s / n : 0.0;
}

void run_hahn(const RunConfig& c, Output& out) {
    if (!c.seed_set) throw InvalidInput("hahn adds detection noise and needs an explicit seed (config 'seed' or --seed)");
    const auto coupling = build_coupling(c, c.coupling_bins);
    const auto st = build_ensemble(c, coupling, c.line, c.gamma_perp);
    const EchoRun run = simulate(c, st, SequenceKind::Hahn, c.sequence, c.phase_cycle, !c.phase_cycle);
    const auto& win = run.seq.windows.front();
    const EchoObservables echo = echo_area(run.output, win);

    const TimeTrace measured = amplify(run.output, c.noise, c.seed);
    const MatchedFilter filter = MatchedFilter::from_signal(run.output, win.t_start, win.t_end);
    const double n_in = c.noise.input_noise_x();
    const double snr_expected = snr_matched_filter(run.output, filter, n_in);
    const double snr_measured = snr_matched_filter(measured, filter, c.noise.gain_x() * n_in);

    out.trace("hahn_trace.csv", run.output);
    out.trace("hahn_measured.csv", measured);
    json j;
    j["echo"] = echo_json(echo);
    j["echo_measured"] = echo_json(echo_area(measured, win));
    j["snr_expected"] = snr_expected;
    j["snr_single_shot"] = snr_measured;
    j["noise_n"] = n_in;
    j["amplifier"] = json{{"mode", to_string(c.noise.mode)}, {"G", c.noise.gain}};
    j["spins_in_grid"] = st.spins.total_count();
    j["mean_coupling_Hz"] = coupling.mean();
    j["phase_cycled"] = c.phase_cycle;
    j["solver_steps"] = run.steps;
    out.observables("hahn.json", j);
}

void run_rabi(const RunConfig& c, Output& out) {
    if (c.pulses.ideal) throw InvalidInput("rabi needs finite-duration pulses (pulses.ideal = false)");
    const auto coupling = build_coupling(c, c.coupling_bins);
    const auto st = build_ensemble(c, coupling, c.line, c.gamma_perp);
    std::vector<double> amps;
    for (double r : c.rabi_amplitudes) amps.push_back(r * c.sequence.pi.amplitude);
    SolverConfig sc = c.solver;
    sc.purcell_relaxation = c.purcell;
    const auto pts = rabi_sweep(st, c.cavity, c.sequence, sc, amps);
    out.sweep("rabi.csv", pts, "sweep_value=sqrt_photons_per_s;areas=sqrt_photons");
    std::size_t best = 0;
    for (std::size_t i = 1; i < pts.size(); ++i)
        if (pts[i].echo.A > pts[best].echo.A) best = i;
    json j;
    j["pi_amplitude_configured"] = c.sequence.pi.amplitude;
    j["max_echo_amplitude"] = pts.empty() ? 0.0 : pts[best].value;
    j["max_echo_A_e"] = pts.empty() ? 0.0 : pts[best].echo.A;
    out.observables("rabi.json", j);
}

void run_t2(const RunConfig& c, Output& out) {
    const auto coupling = build_coupling(c, c.coupling_bins);
    const auto st = build_ensemble(c, coupling, c.line, c.gamma_perp);
    std::vector<SweepPoint> pts;
    std::vector<double> t, a;
    for (double d : c.t2_delays) {
        SequenceParams p = c.sequence;
        p.tau = 0.5 * d;
        const EchoRun run = simulate(c, st, SequenceKind::Hahn, p, false, false);
        SweepPoint sp;
        sp.value = d;
        sp.echo = echo_area(run.output, run.seq.windows.front());
        pts.push_back(sp);
        t.push_back(d);
        a.push_back(sp.echo.A);
    }
    out.sweep("t2.csv", pts, "sweep_value=s;areas=sqrt_photons");
    json j;
    if (t.size() >= 4) {
        const DecayFit f = fit_decay(t, a, false);
        j["T2_s"] = f.time_constant;
        j["fit"] = fit_json(f);
    }
    out.observables("t2.json", j);
}

void run_t1(const RunConfig& c, Output& out) {
    const auto coupling = build_coupling(c, c.coupling_bins);
    const auto st = build_ensemble(c, coupling, c.line, c.gamma_perp);
    std::vector<SweepPoint> pts;
    std::vector<double> t, x;
    for (double w : c.t1_waits) {
        SequenceParams p = c.sequence;
        p.recovery_wait = w;
        const EchoRun run = simulate(c, st, SequenceKind::InversionRecovery, p, false, false);
        SweepPoint sp;
        sp.value = w;
        sp.echo = echo_area(run.output, run.seq.windows.front());
        pts.push_back(sp);
        t.push_back(w);
        x.push_back(sp.echo.X);
    }
    out.sweep("t1.csv", pts, "sweep_value=s;areas=sqrt_photons");
    json j;
    if (t.size() >= 4) {
        const DecayFit f = fit_decay(t, x, true);
        j["T1_s"] = f.time_constant;
        j["fit"] = fit_json(f);
    }
    out.observables("t1.json", j);
}

void run_cpmg(const RunConfig& c, Output& out) {
    const auto coupling = build_coupling(c, c.cpmg.coupling_bins);
    const auto line = resized_line(c.line, c.cpmg.line_bins);
    const auto st = build_ensemble(c, coupling, line, c.cpmg.gamma_perp);
    const EchoRun run = simulate(c, st, SequenceKind::Cpmg, c.sequence, false, false);
    const auto& tr = run.output;
    const double period = 2.0 * c.sequence.tau;

    std::vector<double> t, area, energy;
    std::vector<EchoObservables> echoes;
    for (const auto& w : run.seq.windows) {
        echoes.push_back(echo_area(tr, w));
        double e = 0.0;
        for (std::size_t k = tr.index_at(w.t_start); k < tr.size() && tr.time(k) < w.t_end; ++k)
            e += tr.samples[k].real() * tr.samples[k].real();
        energy.push_back(e * tr.dt);
        t.push_back(w.center());
        area.push_back(echoes.back().A);
    }
    json j;
    double t_cpmg = 1.0 / std::max(c.cpmg.gamma_perp, 1e-300);
    if (t.size() >= 4) {
        const DecayFit f = fit_decay(t, area, false);
        t_cpmg = f.time_constant;
        j["T_CPMG_s"] = f.time_constant;
        j["fit"] = fit_json(f);
    }
    std::vector<std::vector<double>> rows;
    double cum = 0.0;
    for (std::size_t i = 0; i < echoes.size(); ++i) {
        cum += energy[i];
        const double gain = energy[0] > 0.0 ? std::sqrt(cum / energy[0]) : 0.0;
        const double formula = cpmg_snr_gain(static_cast<int>(i + 1), period, t_cpmg).ratio;
        rows.push_back({static_cast<double>(i + 1), t[i], echoes[i].A, echoes[i].X, echoes[i].Q, energy[i], gain,
                        formula});
    }
    out.table("cpmg.csv", {"echo_index", "t_echo_s", "A_e", "X_e", "Q_e", "energy", "gain_sim", "gain_formula"},
              rows, "areas=sqrt_photons;energy=photons");
    j["echoes"] = echoes.size();
    j["period_s"] = period;
    if (!rows.empty()) {
        j["snr_gain_sim"] = rows.back()[6];
        j["snr_gain_formula"] = rows.back()[7];
        j["formula_valid"] = cpmg_snr_gain(static_cast<int>(rows.size()), period, t_cpmg).valid;
    }
    out.observables("cpmg.json", j);
}

void run_absorption(const RunConfig& c, Output& out) {
    if (c.pulses.ideal) throw InvalidInput("absorption needs finite-duration pulses (pulses.ideal = false)");
    const auto coupling = build_coupling(c, c.coupling_bins);
    const auto st = build_ensemble(c, coupling, c.line, c.gamma_perp);
    const EchoRun run = simulate(c, st, SequenceKind::Absorption, c.sequence, false, true);
    out.trace("absorption_trace.csv", run.output);
    json j;
    for (const auto& w : run.seq.windows) {
        // steady-state transmitted amplitude over the last fifth of each probe
        const double t0 = w.t_end - 0.2 * w.duration();
        j[w.label + "_mean_abs"] = mean_abs(run.output, t0, w.t_end);
    }
    const double u = j["probe_unsaturated_mean_abs"].get<double>();
    const double s = j["probe_saturated_mean_abs"].get<double>();
    j["saturated_over_unsaturated"] = u > 0.0 ? s / u : 0.0;
    out.observables("absorption.json", j);
}

void run_spectrum(const RunConfig& c, Output& out) {
    SpectroConfig sc;
    sc.spin = c.spin;
    sc.cavity = c.cavity;
    sc.coupling = build_coupling(c, c.spectrum.coupling_bins);
    sc.coupling_sx = c.coupling_sx;
    sc.line = c.spectrum.line;
    sc.n_total = c.n_total;
    sc.discretize.gamma_rep = c.repetition_rate;
    sc.discretize.gamma_perp = c.gamma_perp;
    sc.discretize.gamma_par = c.gamma_par;
    sc.sequence = c.sequence;
    sc.solver = c.solver;
    sc.solver.purcell_relaxation = c.purcell;
    sc.transitions = c.spectrum.transitions;
    sc.field_direction = c.field_direction;
    std::vector<double> fields;
    const int n = c.spectrum.points;
    for (int i = 0; i < n; ++i)
        fields.push_back(n == 1 ? c.spectrum.field_min
                                : c.spectrum.field_min + (c.spectrum.field_max - c.spectrum.field_min) * i / (n - 1));
    const auto pts = field_sweep(sc, fields);
    out.sweep("spectrum.csv", pts, "sweep_value=T;areas=sqrt_photons");
    std::size_t best = 0;
    for (std::size_t i = 1; i < pts.size(); ++i)
        if (pts[i].echo.A > pts[best].echo.A) best = i;
    json j;
    j["peak_field_T"] = pts[best].value;
    j["peak_A_e"] = pts[best].echo.A;
    json cross = json::array();
    for (const auto& r : crossing_table(c))
        cross.push_back({{"lower", r.transition.lower.to_string()},
                         {"upper", r.transition.upper.to_string()},
                         {"field_T", r.field},
                         {"dfdB_Hz_per_T", r.transition.dfdB},
                         {"sx", r.transition.sx_element}});
    j["crossings"] = cross;
    out.observables("spectrum.json", j);
}

void run_sensitivity(const RunConfig& c, Output& out) {
    const auto& s = c.sensitivity;
    const double g = two_pi * s.g_hz;
    const double kappa = two_pi * s.kappa_hz;
    const double kappa2 = s.kappa2_hz ? two_pi * *s.kappa2_hz : 0.5 * kappa;
    const double w = s.w_hz ? two_pi * *s.w_hz : kappa;
    const double te = s.echo_time ? *s.echo_time : 1.0 / kappa;
    json j;
    j["N_min_conventional"] = nmin_conventional(g, s.p, kappa, s.n, te);
    j["N_min"] = nmin(g, s.p, kappa, kappa2, w, s.n);
    j["cooperativity"] = cooperativity(g, s.n_spins, kappa, w);
    j["snr_single_echo_per_spin"] = snr_lorentzian(g, s.p, 1.0, kappa, kappa2, w, s.n);
    const auto curve = snr_vs_gain(s.gains, s.n, s.n_syst_ratio * s.n);
    j["jpa_improvement"] = 1.0 / snr_vs_gain({1.0}, s.n, s.n_syst_ratio * s.n).front();
    const auto gain = cpmg_snr_gain(c.sequence.echoes, 2.0 * c.sequence.tau, 1.0 / c.cpmg.gamma_perp);
    j["cpmg_snr_gain"] = gain.ratio;
    j["cpmg_gain_valid"] = gain.valid;
    j["inputs"] = json{{"g_rad_per_s", g},   {"kappa_per_s", kappa}, {"kappa2_per_s", kappa2},
                       {"w_per_s", w},       {"echo_time_s", te},    {"n", s.n},
                       {"p", s.p}};
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < curve.size(); ++i) rows.push_back({s.gains[i], curve[i]});
    out.table("snr_vs_gain.csv", {"G", "snr_relative"}, rows, "snr_relative=fraction_of_high_gain_limit");
    out.observables("sensitivity.json", j);
}

}  // namespace

RunManifest run_experiment(const RunConfig& config, const std::string& experiment,
                           const std::filesystem::path& out_dir) {
    if (!is_experiment(experiment)) throw InvalidInput("unknown experiment '" + experiment + "'");
    const auto start = std::chrono::steady_clock::now();
    Output out(config, experiment, out_dir);
    out.text("config.yaml", "# config_hash=" + config.hash_hex() + "\n" + config.canonical);
    if (experiment == "hahn") run_hahn(config, out);
    else if (experiment == "rabi") run_rabi(config, out);
    else if (experiment == "t2") run_t2(config, out);
    else if (experiment == "t1") run_t1(config, out);
    else if (experiment == "cpmg") run_cpmg(config, out);
    else if (experiment == "absorption") run_absorption(config, out);
    else if (experiment == "spectrum") run_spectrum(config, out);
    else if (experiment == "sensitivity") run_sensitivity(config, out);

    RunManifest m;
    m.experiment = experiment;
    m.config_hash = config.hash_hex();
    m.seed = config.seed;
    m.files = out.files();
    m.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ofstream os(out_dir / "manifest.json", std::ios::binary);
    os << manifest_json(m);
    return m;
}

}  // namespace esrsim
