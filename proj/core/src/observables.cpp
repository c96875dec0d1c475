#include "esrsim/observables.hpp"

#include "esrsim/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <ostream>

namespace esrsim {

EchoObservables echo_area(const TimeTrace& trace, const AcquisitionWindow& window) {
    if (!(window.t_end > window.t_start)) throw InvalidInput("empty acquisition window '" + window.label + "'");
    if (trace.size() == 0 || !(trace.dt > 0.0)) throw InvalidInput("trace is empty");
    const double slack = 1e-9 * trace.dt;
    if (window.t_start < trace.t0 - slack || window.t_end > trace.end_time() + trace.dt + slack)
        throw InvalidInput("window '" + window.label + "' lies outside the trace");
    EchoObservables out;
    out.window = window.duration();
    const double half = 0.5 * out.window;
    const double lo = window.center() - half, hi = window.center() + half;
    for (std::size_t k = trace.index_at(lo - slack); k < trace.size(); ++k) {
        const double t = trace.time(k);
        if (t >= hi - slack) break;
        const complex s = trace.samples[k];
        out.X += s.real();
        out.Q += s.imag();
        out.A += std::abs(s);
    }
    out.X *= trace.dt;
    out.Q *= trace.dt;
    out.A *= trace.dt;
    return out;
}

DecayFit fit_decay(const std::vector<double>& t, const std::vector<double>& y, bool fit_offset) {
    const std::size_t n = t.size();
    if (n != y.size()) throw InvalidInput("fit_decay: t and y differ in length");
    if (n < 4) throw InvalidInput("fit_decay needs at least 4 points");
    for (std::size_t i = 1; i < n; ++i)
        if (!(t[i] > t[i - 1])) throw InvalidInput("fit_decay: t must be strictly increasing");
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(t[i]) || !std::isfinite(y[i])) throw InvalidInput("fit_decay: non-finite data");

    const int np = fit_offset ? 3 : 2;
    const double span = t.back() - t.front();
    double min_dt = span;
    for (std::size_t i = 1; i < n; ++i) min_dt = std::min(min_dt, t[i] - t[i - 1]);

    // Linear least squares for (a, c) at fixed T.
    auto linear = [&](double T, double& a, double& c) {
        Eigen::MatrixXd M(n, np - 1);
        Eigen::VectorXd b(n);
        for (std::size_t i = 0; i < n; ++i) {
            M(static_cast<Eigen::Index>(i), 0) = std::exp(-(t[i] - t.front()) / T);
            if (fit_offset) M(static_cast<Eigen::Index>(i), 1) = 1.0;
            b(static_cast<Eigen::Index>(i)) = y[i];
        }
        Eigen::VectorXd s = M.colPivHouseholderQr().solve(b);
        a = s(0);
        c = fit_offset ? s(1) : 0.0;
        return (M * s - b).squaredNorm();
    };

    // Coarse log grid for the initial time constant; amplitude is referred to t.front() during the search.
    double best_T = span, best_sse = std::numeric_limits<double>::infinity(), a0 = 0.0, c0 = 0.0;
    const double lo = std::log(0.1 * min_dt), hi = std::log(100.0 * span);
    for (int k = 0; k <= 200; ++k) {
        const double T = std::exp(lo + (hi - lo) * k / 200.0);
        double a, c;
        const double sse = linear(T, a, c);
        if (sse < best_sse) {
            best_sse = sse;
            best_T = T;
            a0 = a;
            c0 = c;
        }
    }

    // Parameters (a', T, c) with model a' exp(-(t - t0)/T) + c; converted back at the end.
    Eigen::Vector3d p(a0, best_T, c0);
    auto residuals = [&](const Eigen::Vector3d& q, Eigen::VectorXd& r, Eigen::MatrixXd* J) {
        r.resize(static_cast<Eigen::Index>(n));
        if (J) J->resize(static_cast<Eigen::Index>(n), np);
        for (std::size_t i = 0; i < n; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            const double tau = t[i] - t.front();
            const double e = std::exp(-tau / q(1));
            r(ii) = q(0) * e + (fit_offset ? q(2) : 0.0) - y[i];
            if (J) {
                (*J)(ii, 0) = e;
                (*J)(ii, 1) = q(0) * tau / (q(1) * q(1)) * e;
                if (fit_offset) (*J)(ii, 2) = 1.0;
            }
        }
    };

    Eigen::VectorXd r;
    Eigen::MatrixXd J;
    residuals(p, r, &J);
    double sse = r.squaredNorm();
    double lambda = 1e-3;
    int it = 0;
    bool converged = false;
    const double scale = std::max(1.0, Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(n))
                                           .cwiseAbs()
                                           .maxCoeff());
    for (; it < 500; ++it) {
        const Eigen::MatrixXd JtJ = J.transpose() * J;
        const Eigen::VectorXd g = J.transpose() * r;
        if (g.cwiseAbs().maxCoeff() <= 1e-30 * scale * scale || sse <= 1e-300) {
            converged = true;
            break;
        }
        Eigen::MatrixXd Aug = JtJ;
        for (int k = 0; k < np; ++k) Aug(k, k) += lambda * std::max(JtJ(k, k), 1e-300);
        const Eigen::VectorXd step = Aug.ldlt().solve(-g);
        Eigen::Vector3d trial = p;
        for (int k = 0; k < np; ++k) trial(k) += step(k);
        if (!(trial(1) > 0.0) || !step.allFinite()) {
            lambda *= 10.0;
            if (lambda > 1e20) break;
            continue;
        }
        Eigen::VectorXd rt;
        Eigen::MatrixXd Jt;
        residuals(trial, rt, &Jt);
        const double sse_t = rt.squaredNorm();
        if (sse_t <= sse) {
            const double rel = std::abs(sse - sse_t) / std::max(sse, 1e-300);
            double dp = 0.0;
            for (int k = 0; k < np; ++k)
                dp = std::max(dp, std::abs(step(k)) / std::max(std::abs(trial(k)), 1e-300));
            p = trial;
            r = rt;
            J = Jt;
            sse = sse_t;
            lambda = std::max(lambda / 10.0, 1e-15);
            if (dp < 1e-13 || rel < 1e-15) {
                converged = true;
                ++it;
                break;
            }
        } else {
            lambda *= 10.0;
            if (lambda > 1e20) {
                converged = true;  // no further decrease possible: at the minimum to machine precision
                break;
            }
        }
    }
    if (!converged || !p.allFinite()) {
        std::vector<double> res(r.data(), r.data() + r.size());
        throw FitFailure("exponential fit did not converge", res);
    }

    DecayFit fit;
    // a' exp(-(t - t0)/T) = a exp(-t/T) with a = a' exp(t0/T)
    const double shift = std::exp(t.front() / p(1));
    fit.amplitude = p(0) * shift;
    fit.time_constant = p(1);
    fit.offset = fit_offset ? p(2) : 0.0;
    fit.iterations = it;
    fit.rms_residual = std::sqrt(sse / static_cast<double>(n));
    const double dof = static_cast<double>(n) - np;
    if (dof > 0) {
        const double s2 = sse / dof;
        const Eigen::MatrixXd cov = s2 * (J.transpose() * J).inverse();
        if (cov.allFinite()) {
            fit.amplitude_stderr = std::sqrt(std::max(0.0, cov(0, 0))) * shift;
            fit.time_constant_stderr = std::sqrt(std::max(0.0, cov(1, 1)));
            if (fit_offset) fit.offset_stderr = std::sqrt(std::max(0.0, cov(2, 2)));
        }
    }
    return fit;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepPoint>& points, const CsvHeader& header) {
    for (const auto& [k, v] : header) os << "# " << k << '=' << v << '\n';
    os << "sweep_value,A_e,X_e,Q_e,stderr\n";
    for (const auto& p : points)
        os << format_double(p.value) << ',' << format_double(p.echo.A) << ',' << format_double(p.echo.X) << ','
           << format_double(p.echo.Q) << ',' << format_double(p.stderr) << '\n';
}

namespace {

EchoObservables run_echo(const EnsembleState& state, const CavityParams& cavity, SequenceKind kind,
                         const SequenceParams& params, const SolverConfig& solver) {
    const PulseSequence seq = build_sequence(kind, params);
    SolverConfig s = solver;
    s.record_spins = false;
    const auto res = integrate(state, cavity, seq, s);
    const TimeTrace out = output_field(res.trace, cavity.kappa2);
    return echo_area(out, seq.windows.front());
}

}  // namespace

std::vector<SweepPoint> field_sweep(const SpectroConfig& cfg, const std::vector<double>& fields) {
    cfg.spin.validate();
    if (cfg.transitions.empty()) throw InvalidInput("field sweep needs at least one transition");
    if (!(cfg.coupling_sx > 0.0)) throw InvalidInput("coupling_sx must be positive");
    const double f0 = cfg.cavity.omega0 / constants::two_pi;
    const Eigen::Vector3d dir = cfg.field_direction.normalized();
    std::vector<SweepPoint> out;
    out.reserve(fields.size());
    for (double b : fields) {
        if (!std::isfinite(b) || std::abs(b) > 10e-3) throw DomainError("sweep field outside the 10 mT model range");
        const EnergyLevels levels = eigensystem(cfg.spin, b * dir);
        EnsembleState state;
        for (const auto& tr : cfg.transitions) {
            const int lo = levels.index_of(tr.lower), up = levels.index_of(tr.upper);
            const double f = levels.eigenvalues(up) - levels.eigenvalues(lo);
            FrequencyDistribution line = cfg.line;
            line.center_offset = f - f0;
            DiscretizeOptions opts = cfg.discretize;
            opts.coupling_scale = sx_element(levels, cfg.spin, lo, up) / cfg.coupling_sx;
            state.spins.append(discretize_ensemble(cfg.coupling, line, cfg.n_total, cfg.cavity, opts));
        }
        SweepPoint p;
        p.value = b;
        if (state.spins.total_count() > 1e-9 * cfg.n_total) {
            p.echo = run_echo(state, cfg.cavity, SequenceKind::Hahn, cfg.sequence, cfg.solver);
        } else {
            p.echo.window = cfg.sequence.echo_window;
        }
        out.push_back(p);
    }
    return out;
}

std::vector<SweepPoint> rabi_sweep(const EnsembleState& state, const CavityParams& cavity,
                                   const SequenceParams& params, const SolverConfig& solver,
                                   const std::vector<double>& amplitudes) {
    std::vector<SweepPoint> out;
    out.reserve(amplitudes.size());
    for (double amp : amplitudes) {
        SequenceParams p = params;
        p.refocus_amplitude = amp;
        SweepPoint pt;
        pt.value = amp;
        pt.echo = run_echo(state, cavity, SequenceKind::Rabi, p, solver);
        out.push_back(pt);
    }
    return out;
}

double golden_section_maximize(const std::function<double(double)>& f, double lo, double hi, double tol) {
    if (!(hi > lo)) throw InvalidInput("golden-section bracket must satisfy lo < hi");
    if (!(tol > 0.0)) throw InvalidInput("golden-section tolerance must be positive");
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = lo, b = hi;
    double x1 = b - r * (b - a), x2 = a + r * (b - a);
    double f1 = f(x1), f2 = f(x2);
    while (b - a > tol) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        }
    }
    return 0.5 * (a + b);
}

double calibrate_pi_amplitude(const EnsembleState& state, const CavityParams& cavity, const SequenceParams& params,
                              const SolverConfig& solver, double lo, double hi, double rel_tol) {
    if (params.pi.ideal || params.pi_half.ideal)
        throw InvalidInput("pi-pulse calibration needs finite-duration pulses");
    auto area = [&](double amp) {
        SequenceParams p = params;
        p.pi.amplitude = amp;
        p.pi_half.amplitude = 0.5 * amp;
        p.pi_half.duration = params.pi.duration;
        return run_echo(state, cavity, SequenceKind::Hahn, p, solver).A;
    };
    return golden_section_maximize(area, lo, hi, rel_tol * hi);
}

}  // namespace esrsim
