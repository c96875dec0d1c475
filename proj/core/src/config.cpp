#include "esrsim/config.hpp"

#include "esrsim/error.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace esrsim {

using constants::two_pi;

std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string RunConfig::hash_hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

std::string ConfigReport::to_string() const {
    std::string s;
    for (const auto& i : issues) s += i.path + ": " + i.message + "\n";
    return s;
}

namespace {

std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> parts;
    std::stringstream ss(path);
    std::string p;
    while (std::getline(ss, p, '.')) parts.push_back(p);
    return parts;
}

YAML::Node lookup(const YAML::Node& root, const std::string& path) {
    YAML::Node cur;
    cur.reset(root);
    for (const auto& k : split_path(path)) {
        if (!cur.IsMap()) return YAML::Node(YAML::NodeType::Undefined);
        const YAML::Node& c = cur;
        YAML::Node next = c[k];
        if (!next) return YAML::Node(YAML::NodeType::Undefined);
        cur.reset(next);
    }
    return cur;
}

std::string mark_of(const YAML::Node& n) {
    const auto m = n.Mark();
    if (m.line < 0) return "";
    return " (line " + std::to_string(m.line + 1) + ")";
}

class Reader {
public:
    Reader(const YAML::Node& root, std::vector<ConfigIssue>& issues) : issues_(issues) { root_.reset(root); }

    bool has(const std::string& path) {
        seen_.insert(path);
        return static_cast<bool>(lookup(root_, path));
    }

    template <class T>
    void get(const std::string& path, T& out) {
        seen_.insert(path);
        const YAML::Node n = lookup(root_, path);
        if (!n) return;
        try {
            out = n.as<T>();
        } catch (const YAML::Exception&) {
            issues_.push_back({path, "cannot convert value '" + scalar(n) + "'" + mark_of(n)});
        }
    }

    template <class T>
    void get(const std::string& path, std::optional<T>& out) {
        seen_.insert(path);
        const YAML::Node n = lookup(root_, path);
        if (!n || n.IsNull()) return;
        T v{};
        get(path, v);
        out = v;
    }

    void get_list(const std::string& path, std::vector<double>& out) {
        seen_.insert(path);
        const YAML::Node n = lookup(root_, path);
        if (!n) return;
        try {
            out = n.as<std::vector<double>>();
        } catch (const YAML::Exception&) {
            issues_.push_back({path, "expected a list of numbers" + mark_of(n)});
        }
    }

    void get_transitions(const std::string& path, std::vector<SweepTransition>& out) {
        seen_.insert(path);
        const YAML::Node n = lookup(root_, path);
        if (!n) return;
        try {
            out.clear();
            for (const auto& t : n) {
                const auto v = t.as<std::vector<double>>();
                if (v.size() != 4) throw YAML::Exception(t.Mark(), "need four numbers");
                out.push_back({label(v[0], v[1]), label(v[2], v[3])});
            }
        } catch (const YAML::Exception&) {
            issues_.push_back({path, "expected a list of [F, mF, F', mF'] entries" + mark_of(n)});
        }
    }

    void check_unknown() { walk(root_, ""); }

private:
    static std::string scalar(const YAML::Node& n) { return n.IsScalar() ? n.Scalar() : "<non-scalar>"; }

    void walk(const YAML::Node& n, const std::string& prefix) {
        if (!n.IsMap()) {
            if (!prefix.empty() && !seen_.count(prefix)) issues_.push_back({prefix, "unknown key" + mark_of(n)});
            return;
        }
        for (const auto& kv : n) {
            const std::string key = prefix.empty() ? kv.first.as<std::string>() : prefix + "." + kv.first.as<std::string>();
            if (seen_.count(key)) continue;
            walk(kv.second, key);
        }
    }

    YAML::Node root_;
    std::vector<ConfigIssue>& issues_;
    std::set<std::string> seen_;
};

void read_line(Reader& r, const std::string& base, FrequencyDistribution& line, std::vector<ConfigIssue>& issues) {
    std::string kind = to_string(line.kind);
    r.get(base + ".kind", kind);
    try {
        line.kind = parse_line_shape(kind);
    } catch (const InvalidInput& e) {
        issues.push_back({base + ".kind", e.what()});
    }
    r.get(base + ".width_Hz", line.width);
    r.get(base + ".tilt", line.tilt);
    r.get(base + ".splitting_Hz", line.splitting);
    r.get(base + ".second_peak_weight", line.second_peak_weight);
    r.get(base + ".center_offset_Hz", line.center_offset);
    r.get(base + ".bins", line.bins);
    r.get(base + ".spacing_Hz", line.spacing);
    std::string table;
    r.get(base + ".table_file", table);
    if (!table.empty()) {
        std::ifstream is(table);
        if (!is) {
            issues.push_back({base + ".table_file", "cannot open '" + table + "'"});
        } else {
            line.table_offsets.clear();
            line.table_density.clear();
            std::string row;
            while (std::getline(is, row)) {
                if (row.empty() || row[0] == '#' || !(std::isdigit(static_cast<unsigned char>(row[0])) ||
                                                       row[0] == '-' || row[0] == '+' || row[0] == '.'))
                    continue;
                double x = 0, y = 0;
                if (std::sscanf(row.c_str(), "%lf,%lf", &x, &y) == 2) {
                    line.table_offsets.push_back(x);
                    line.table_density.push_back(y);
                }
            }
        }
    }
}

template <class F>
void check(std::vector<ConfigIssue>& issues, const std::string& path, F&& f) {
    try {
        f();
    } catch (const Error& e) {
        issues.push_back({path, e.what()});
    }
}

RunConfig read_config(const YAML::Node& root, std::vector<ConfigIssue>& issues) {
    RunConfig c;
    c.spectrum.transitions = {{label(4, -4), label(5, -5)}, {label(4, -3), label(5, -4)}};
    c.spectrum.line.kind = LineShape::TwoPeak;
    c.spectrum.line.width = 2e6;
    c.spectrum.line.splitting = 4e6;
    c.spectrum.line.bins = 150;
    c.rabi_amplitudes = {0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0};
    c.t2_delays = {0.5e-3, 1.5e-3, 2.5e-3, 4.5e-3, 6.5e-3, 9.5e-3, 13.5e-3, 18.5e-3};
    c.t1_waits = {1e-3, 0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0, 1.5};
    c.sequence.probe_amplitude = 0.0;

    if (!root.IsMap()) {
        issues.push_back({"<root>", "configuration must be a mapping"});
        return c;
    }
    Reader r(root, issues);

    c.seed_set = r.has("seed");
    r.get("seed", c.seed);
    r.get("output_dir", c.output_dir);
    r.get("threads", c.threads);

    r.get("spin.gamma_e_Hz_per_T", c.spin.gamma_e);
    r.get("spin.gamma_n_Hz_per_T", c.spin.gamma_n);
    r.get("spin.A_Hz", c.spin.A);
    r.get("spin.S", c.spin.S);
    r.get("spin.I", c.spin.I);
    std::vector<double> dir;
    r.get_list("spin.field_direction", dir);
    if (!dir.empty()) {
        if (dir.size() != 3 || !(Eigen::Vector3d(dir[0], dir[1], dir[2]).norm() > 0.0))
            issues.push_back({"spin.field_direction", "expected a non-zero 3-vector"});
        else
            c.field_direction = Eigen::Vector3d(dir[0], dir[1], dir[2]).normalized();
    }

    double f0 = c.cavity.omega0 / two_pi;
    r.get("cavity.f0_Hz", f0);
    c.cavity.omega0 = two_pi * f0;
    r.get("cavity.kappa1_per_s", c.cavity.kappa1);
    r.get("cavity.kappa2_per_s", c.cavity.kappa2);
    r.get("cavity.kappaL_per_s", c.cavity.kappaL);
    r.get("cavity.Q", c.quality);
    c.geometry.omega0 = c.cavity.omega0;

    r.get("geometry.width_m", c.geometry.width);
    r.get("geometry.thickness_m", c.geometry.thickness);
    r.get("geometry.penetration_depth_m", c.geometry.penetration_depth);
    r.get("geometry.impedance_Ohm", c.geometry.impedance);
    r.get("geometry.filaments_x", c.geometry.filaments_x);
    r.get("geometry.filaments_y", c.geometry.filaments_y);
    r.get("geometry.theta_rad", c.theta);
    r.get("geometry.x_min_m", c.region.x_min);
    r.get("geometry.x_max_m", c.region.x_max);
    r.get("geometry.x_samples", c.region.x_samples);
    r.get("geometry.depth_samples", c.region.depth_samples);
    r.get("geometry.coupling_bins", c.coupling_bins);
    r.get("geometry.sx", c.coupling_sx);

    r.get("implantation.kind", c.implantation.kind);
    r.get("implantation.peak_depth_m", c.implantation.peak_depth);
    r.get("implantation.sigma_shallow_m", c.implantation.sigma_shallow);
    r.get("implantation.sigma_deep_m", c.implantation.sigma_deep);
    r.get("implantation.min_depth_m", c.implantation.min_depth);
    r.get("implantation.max_depth_m", c.implantation.max_depth);
    r.get("implantation.samples", c.implantation.samples);
    r.get("implantation.file", c.implantation.file);

    read_line(r, "line", c.line, issues);

    r.get("ensemble.n_total", c.n_total);
    r.get("ensemble.repetition_rate_Hz", c.repetition_rate);
    r.get("ensemble.gamma_perp_per_s", c.gamma_perp);
    r.get("ensemble.gamma_par_per_s", c.gamma_par);
    r.get("ensemble.purcell", c.purcell);

    r.get("pulses.ideal", c.pulses.ideal);
    r.get("pulses.pi_duration_s", c.pulses.pi_duration);
    r.get("pulses.pi_half_duration_s", c.pulses.pi_half_duration);
    r.get("pulses.pi_power_dBm", c.pulses.pi_power_dBm);
    r.get("pulses.pi_half_power_dBm", c.pulses.pi_half_power_dBm);
    r.get("pulses.eta", c.pulses.eta);

    auto& s = c.sequence;
    r.get("sequence.tau_s", s.tau);
    r.get("sequence.echoes", s.echoes);
    r.get("sequence.echo_window_s", s.echo_window);
    r.get("sequence.tail_s", s.tail);
    r.get("sequence.recovery_wait_s", s.recovery_wait);
    r.get("sequence.probe_duration_s", s.probe_duration);
    std::optional<double> probe_dbm;
    r.get("sequence.probe_power_dBm", probe_dbm);
    r.get("sequence.saturation_duration_s", s.saturation_duration);
    r.get("sequence.saturation_gain_dB", s.saturation_gain_db);
    r.get("sequence.pi_half_phase_rad", s.pi_half_phase);
    r.get("sequence.pi_phase_rad", s.pi_phase);
    r.get("sequence.phase_cycle", c.phase_cycle);
    r.get_list("sequence.rabi_amplitudes", c.rabi_amplitudes);
    r.get_list("sequence.t2_delays_s", c.t2_delays);
    r.get_list("sequence.t1_waits_s", c.t1_waits);

    r.get("solver.rtol", c.solver.rtol);
    r.get("solver.atol", c.solver.atol);
    r.get("solver.max_step_s", c.solver.max_step);
    r.get("solver.initial_step_s", c.solver.initial_step);
    r.get("solver.min_step_s", c.solver.min_step);
    r.get("solver.sample_step_s", c.solver.sample_step);
    r.get("solver.max_steps", c.solver.max_steps);
    r.get("solver.record_spins", c.solver.record_spins);

    std::string mode = to_string(c.noise.mode);
    r.get("detection.mode", mode);
    check(issues, "detection.mode", [&] { c.noise.mode = parse_amp_mode(mode); });
    r.get("detection.gain", c.noise.gain);
    std::optional<double> gain_db;
    r.get("detection.gain_dB", gain_db);
    if (gain_db) c.noise.gain = std::pow(10.0, *gain_db / 10.0);
    r.get("detection.n_eq", c.noise.n_eq);
    r.get("detection.n_amp", c.noise.n_amp);
    r.get("detection.n_sp", c.noise.n_sp);
    r.get("detection.n_syst", c.noise.n_syst);

    auto& sn = c.sensitivity;
    r.get("sensitivity.g_Hz", sn.g_hz);
    r.get("sensitivity.p", sn.p);
    r.get("sensitivity.kappa_Hz", sn.kappa_hz);
    r.get("sensitivity.kappa2_Hz", sn.kappa2_hz);
    r.get("sensitivity.w_Hz", sn.w_hz);
    r.get("sensitivity.echo_time_s", sn.echo_time);
    r.get("sensitivity.n", sn.n);
    r.get("sensitivity.n_spins", sn.n_spins);
    r.get("sensitivity.n_syst_ratio", sn.n_syst_ratio);
    r.get_list("sensitivity.gains", sn.gains);

    r.get("spectrum.field_min_T", c.spectrum.field_min);
    r.get("spectrum.field_max_T", c.spectrum.field_max);
    r.get("spectrum.points", c.spectrum.points);
    r.get_transitions("spectrum.transitions", c.spectrum.transitions);
    r.get("spectrum.coupling_bins", c.spectrum.coupling_bins);
    read_line(r, "spectrum.line", c.spectrum.line, issues);

    r.get("cpmg.gamma_perp_per_s", c.cpmg.gamma_perp);
    r.get("cpmg.coupling_bins", c.cpmg.coupling_bins);
    r.get("cpmg.line_bins", c.cpmg.line_bins);

    r.check_unknown();

    // drive amplitudes
    check(issues, "pulses", [&] {
        s.pi.ideal = s.pi_half.ideal = c.pulses.ideal;
        if (!(c.pulses.eta > 0.0)) throw InvalidInput("eta must be positive");
        s.pi.duration = c.pulses.pi_duration;
        s.pi_half.duration = c.pulses.pi_half_duration;
        s.pi.amplitude = drive_amplitude(c.pulses.eta * dbm_to_watts(c.pulses.pi_power_dBm), c.cavity.omega0);
        s.pi_half.amplitude =
            drive_amplitude(c.pulses.eta * dbm_to_watts(c.pulses.pi_half_power_dBm), c.cavity.omega0);
        if (!c.pulses.ideal && (!(c.pulses.pi_duration > 0.0) || !(c.pulses.pi_half_duration > 0.0)))
            throw InvalidInput("pulse durations must be positive");
    });
    if (probe_dbm)
        s.probe_amplitude = drive_amplitude(c.pulses.eta * dbm_to_watts(*probe_dbm), c.cavity.omega0);
    s.repetition_rate = c.repetition_rate;

    // invariants
    check(issues, "spin (SpinSystem)", [&] { c.spin.validate(); });
    check(issues, "cavity (CavityParams)", [&] { c.cavity.validate(c.quality); });
    check(issues, "geometry (StripGeometry)", [&] { c.geometry.validate(); });
    check(issues, "geometry (CouplingRegion)", [&] {
        if (!(c.region.x_max > c.region.x_min)) throw InvalidInput("x_max_m must exceed x_min_m");
        if (c.region.x_samples < 1 || c.region.depth_samples < 1) throw InvalidInput("sample counts must be >= 1");
        if (c.coupling_bins < 1) throw InvalidInput("coupling_bins must be >= 1");
        if (!(c.coupling_sx > 0.0 && c.coupling_sx <= 0.5)) throw InvalidInput("sx must lie in (0, 1/2]");
    });
    check(issues, "implantation (ImplantationProfile)", [&] {
        const auto& im = c.implantation;
        if (im.kind == "skew_gaussian")
            (void)ImplantationProfile::skew_gaussian(im.peak_depth, im.sigma_shallow, im.sigma_deep, im.max_depth,
                                                     im.samples);
        else if (im.kind == "uniform")
            (void)ImplantationProfile::uniform(im.min_depth, im.max_depth);
        else if (im.kind == "csv") {
            std::ifstream is(im.file);
            if (!is) throw InvalidInput("cannot open implantation file '" + im.file + "'");
            (void)read_implantation_csv(is);
        } else
            throw InvalidInput("unknown implantation kind '" + im.kind + "'");
    });
    check(issues, "line (FrequencyDistribution)", [&] { c.line.validate(); });
    check(issues, "ensemble (SubEnsemble)", [&] {
        if (!(c.n_total > 0.0)) throw InvalidInput("n_total must be positive");
        if (!(c.repetition_rate > 0.0)) throw InvalidInput("repetition_rate_Hz must be positive");
        if (!(c.gamma_perp >= 0.0)) throw InvalidInput("gamma_perp_per_s must be non-negative");
        if (c.gamma_par && !(*c.gamma_par >= 0.0)) throw InvalidInput("gamma_par_per_s must be non-negative");
    });
    check(issues, "sequence (PulseSequence)", [&] {
        (void)build_sequence(SequenceKind::Hahn, s);
        if (s.echoes < 1) throw InvalidInput("echoes must be >= 1");
        for (double d : c.t2_delays)
            if (!(d > 0.0)) throw InvalidInput("t2 delays must be positive");
        for (double w : c.t1_waits)
            if (!(w >= 0.0)) throw InvalidInput("t1 waits must be non-negative");
    });
    check(issues, "solver (SolverConfig)", [&] { c.solver.validate(); });
    check(issues, "detection (NoiseModel)", [&] { c.noise.validate(); });
    check(issues, "sensitivity", [&] {
        const auto& q = c.sensitivity;
        if (!(q.g_hz > 0.0) || !(q.kappa_hz > 0.0) || !(q.n > 0.0) || !(q.p > 0.0 && q.p <= 1.0))
            throw InvalidInput("g_Hz, kappa_Hz, n must be positive and p in (0, 1]");
    });
    check(issues, "spectrum (FrequencyDistribution)", [&] { c.spectrum.line.validate(); });
    check(issues, "spectrum", [&] {
        if (c.spectrum.points < 1) throw InvalidInput("points must be >= 1");
        if (!(c.spectrum.field_max >= c.spectrum.field_min)) throw InvalidInput("field_max_T < field_min_T");
        if (c.spectrum.transitions.empty()) throw InvalidInput("at least one transition is required");
        if (c.spectrum.coupling_bins < 1) throw InvalidInput("coupling_bins must be >= 1");
    });
    check(issues, "cpmg", [&] {
        if (!(c.cpmg.gamma_perp >= 0.0)) throw InvalidInput("gamma_perp_per_s must be non-negative");
        if (c.cpmg.coupling_bins < 1 || c.cpmg.line_bins < 1) throw InvalidInput("bin counts must be >= 1");
    });
    if (c.threads < 0) issues.push_back({"threads", "must be >= 0"});
    c.solver.threads = c.threads;
    return c;
}

YAML::Node parse_yaml(const std::string& text) {
    try {
        return YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw InvalidInput("config parse error at line " + std::to_string(e.mark.line + 1) + ", column " +
                           std::to_string(e.mark.column + 1) + ": " + e.msg);
    }
}

std::string emit(const YAML::Node& n) {
    YAML::Emitter out;
    out.SetDoublePrecision(17);
    out << n;
    return std::string(out.c_str()) + "\n";
}

}  // namespace

std::string apply_overrides(const std::string& yaml_text, const std::vector<std::string>& overrides) {
    YAML::Node root = parse_yaml(yaml_text);
    if (!root || root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
    for (const auto& ov : overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos || eq == 0) throw InvalidInput("override '" + ov + "' is not key=value");
        const auto parts = split_path(ov.substr(0, eq));
        YAML::Node value;
        try {
            value = YAML::Load(ov.substr(eq + 1));
        } catch (const YAML::Exception& e) {
            throw InvalidInput("override '" + ov + "': " + e.msg);
        }
        YAML::Node cur;
        cur.reset(root);
        for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
            YAML::Node next = cur[parts[i]];
            if (!next.IsMap()) {
                cur[parts[i]] = YAML::Node(YAML::NodeType::Map);
                next.reset(cur[parts[i]]);
            }
            cur.reset(next);
        }
        cur[parts.back()] = value;
    }
    return emit(root);
}

ConfigReport validate_config_text(const std::string& yaml_text, const std::vector<std::string>& overrides) {
    ConfigReport rep;
    try {
        const std::string text = apply_overrides(yaml_text, overrides);
        (void)read_config(parse_yaml(text), rep.issues);
    } catch (const InvalidInput& e) {
        rep.issues.push_back({"<parse>", e.what()});
    }
    return rep;
}

RunConfig parse_config(const std::string& yaml_text, const std::vector<std::string>& overrides) {
    const std::string text = apply_overrides(yaml_text, overrides);
    std::vector<ConfigIssue> issues;
    RunConfig c = read_config(parse_yaml(text), issues);
    if (!issues.empty()) {
        ConfigReport rep{issues};
        throw InvalidInput("invalid configuration:\n" + rep.to_string());
    }
    c.canonical = text;
    c.hash = fnv1a64(text);
    return c;
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    std::ifstream is(path);
    if (!is) throw InvalidInput("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str(), overrides);
}

}  // namespace esrsim
