#include "esrsim/ensemble.hpp"
#include "esrsim/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace esrsim {

namespace {

using constants::two_pi;

// Dormand-Prince 5(4)
constexpr int kStages = 7;
constexpr std::array<double, kStages> kC{0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
constexpr double kA[kStages][kStages] = {
    {0, 0, 0, 0, 0, 0, 0},
    {1.0 / 5, 0, 0, 0, 0, 0, 0},
    {3.0 / 40, 9.0 / 40, 0, 0, 0, 0, 0},
    {44.0 / 45, -56.0 / 15, 32.0 / 9, 0, 0, 0, 0},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729, 0, 0, 0},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656, 0, 0},
    {35.0 / 384, 0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84, 0}};
constexpr std::array<double, kStages> kE{71.0 / 57600,   0.0,          -71.0 / 16695, 71.0 / 1920,
                                         -17253.0 / 339200, 22.0 / 525, -1.0 / 40};
constexpr std::array<double, kStages> kD{-12715105075.0 / 11282082432.0, 0.0,
                                         87487479700.0 / 32700410799.0,  -10690763975.0 / 1880347072.0,
                                         701980252875.0 / 199316789632.0, -1453857185.0 / 822651844.0,
                                         69997945.0 / 29380423.0};

// Stages 1..6 use exp(-L c h) for c in {1/5, 3/10, 4/5, 8/9, 1}; all are multiples of h/90.
constexpr std::array<int, kStages> kTable{-1, 0, 1, 2, 3, 4, 4};
constexpr int kTables = 5;

constexpr std::size_t kChunk = 512;

template <class T>
std::array<T, kTables> powers90(T b) {
    const T b2 = b * b, b4 = b2 * b2, b8 = b4 * b4, b9 = b8 * b;
    const T b18 = b9 * b9, b27 = b18 * b9, b36 = b18 * b18, b72 = b36 * b36;
    return {b18, b27, b72, b72 * b8, b72 * b18};
}

class LawsonSolver {
public:
    LawsonSolver(const EnsembleState& init, const CavityParams& cavity, const SolverConfig& cfg)
        : cfg_(cfg), m_(init.spins.size()), a_(init.cavity), t_(init.time) {
        kappa_half_ = 0.5 * cavity.kappa();
        drive_gain_ = std::sqrt(0.5 * cavity.kappa1);
        const auto& sp = init.spins;
        g_.resize(m_);
        n_.resize(m_);
        gpar_.resize(m_);
        lin_.resize(m_);
        for (std::size_t m = 0; m < m_; ++m) {
            g_[m] = two_pi * sp.g[m];
            n_[m] = sp.count[m];
            gpar_[m] = cfg.purcell_relaxation ? sp.gamma_par[m] : 0.0;
            lin_[m] = complex(sp.gamma_perp[m] + 0.5 * gpar_[m], sp.detuning[m]);
        }
        s_ = sp.sminus;
        z_ = sp.sz;
        s_new_.resize(m_);
        z_new_.resize(m_);
        ns7_.resize(m_);
        nz7_.resize(m_);
        for (int i = 0; i < kStages; ++i) {
            ks_[i].resize(m_);
            kz_[i].resize(m_);
        }
        for (int i = 0; i < kTables; ++i) {
            e_[i].resize(m_);
            einv_[i].resize(m_);
            f_[i].resize(m_);
            finv_[i].resize(m_);
        }
        chunks_ = (m_ + kChunk - 1) / kChunk;
        part_sum_.resize(chunks_);
        part_err_.resize(chunks_);
        h_ = cfg.initial_step;
        threads_ = cfg.threads;
    }

    void set_spins(const SpinEnsemble& sp) {
        s_ = sp.sminus;
        z_ = sp.sz;
        fsal_ = false;
    }

    void rotate(double angle, double phase) {
        SpinEnsemble tmp;
        tmp.sminus = std::move(s_);
        tmp.sz = std::move(z_);
        tmp.count.resize(tmp.sz.size());
        rotate_spins(tmp, angle, phase);
        s_ = std::move(tmp.sminus);
        z_ = std::move(tmp.sz);
        fsal_ = false;
    }

    double time() const { return t_; }
    complex cavity() const { return a_; }
    long accepted() const { return accepted_; }
    long rejected() const { return rejected_; }

    void write_state(EnsembleState& out) const {
        out.cavity = a_;
        out.time = t_;
        out.spins.sminus = s_;
        out.spins.sz = z_;
    }

    double total_sz() const { return chunked_sum([&](std::size_t m) { return z_[m]; }); }
    complex total_s() const { return chunked_csum([&](std::size_t m) { return s_[m]; }); }

    /// Advances to t_end with constant drive beta; calls sample(t, a, sz, s) for each grid time in (t, t_end].
    template <class Sampler>
    void advance(double t_end, complex beta, double max_step, Sampler&& sample) {
        drive_ = drive_gain_ * beta;
        fsal_ = false;
        while (t_end - t_ > 0.0) {
            const double remaining = t_end - t_;
            if (remaining < cfg_.min_step) {  // rounding sliver
                t_ = t_end;
                break;
            }
            double h = std::min({h_, max_step, remaining});
            if (remaining - h < cfg_.min_step) h = remaining;
            if (h < cfg_.min_step) throw SolverFailure("step size underflow", t_);
            if (accepted_ + rejected_ >= cfg_.max_steps) throw SolverFailure("maximum number of steps exceeded", t_);

            const double err = attempt(h);
            if (!std::isfinite(err)) {
                ++rejected_;
                h_ = 0.2 * h;
                if (h_ < cfg_.min_step) throw SolverFailure("non-finite state", t_);
                continue;
            }
            if (err > 1.0) {
                ++rejected_;
                h_ = h * std::max(0.2, 0.9 * std::pow(err, -0.2));
                if (h_ < cfg_.min_step) throw SolverFailure("step size underflow", t_);
                continue;
            }
            ++accepted_;
            const double t_next = (h == remaining) ? t_end : t_ + h;
            sample_step(t_next, h, sample);
            accept(t_next);
            const double fac = err > 0.0 ? std::min(10.0, std::max(0.2, 0.9 * std::pow(err, -0.2))) : 10.0;
            if (h == remaining && h < h_) {
                // keep the unconstrained step for the next segment
            } else {
                h_ = h * fac;
            }
        }
    }

private:
    template <class F>
    double chunked_sum(F&& f) const {
        std::vector<double> part(chunks_, 0.0);
#pragma omp parallel for schedule(static) num_threads(nthreads())
        for (std::size_t c = 0; c < chunks_; ++c) {
            double acc = 0.0;
            const std::size_t end = std::min(m_, (c + 1) * kChunk);
            for (std::size_t m = c * kChunk; m < end; ++m) acc += f(m);
            part[c] = acc;
        }
        double total = 0.0;
        for (double p : part) total += p;
        return total;
    }

    template <class F>
    complex chunked_csum(F&& f) const {
        std::vector<complex> part(chunks_);
#pragma omp parallel for schedule(static) num_threads(nthreads())
        for (std::size_t c = 0; c < chunks_; ++c) {
            complex acc = 0.0;
            const std::size_t end = std::min(m_, (c + 1) * kChunk);
            for (std::size_t m = c * kChunk; m < end; ++m) acc += f(m);
            part[c] = acc;
        }
        complex total = 0.0;
        for (const complex& p : part) total += p;
        return total;
    }

    int nthreads() const {
#ifdef _OPENMP
        return threads_ > 0 ? threads_ : omp_get_max_threads();
#else
        return 1;
#endif
    }

    void build_tables(double h) {
        if (h == table_h_) return;
        table_h_ = h;
        const double d = h / 90.0;
#pragma omp parallel for schedule(static) num_threads(nthreads())
        for (std::size_t m = 0; m < m_; ++m) {
            const complex b = std::exp(-lin_[m] * d);
            const auto pe = powers90(b);
            const auto pi = powers90(1.0 / b);
            const double fb = std::exp(-gpar_[m] * d);
            const auto pf = powers90(fb);
            const auto pfi = powers90(1.0 / fb);
            for (int k = 0; k < kTables; ++k) {
                e_[k][m] = pe[k];
                einv_[k][m] = pi[k];
                f_[k][m] = pf[k];
                finv_[k][m] = pfi[k];
            }
        }
    }

    // Physical nonlinear part for the spins of sub-ensemble m.
    complex ns(std::size_t m, complex s, double z, complex a) const {
        (void)s;
        return complex(0.0, g_[m] * z) * a;
    }
    double nz(std::size_t m, complex s, double z, complex a) const {
        (void)z;
        return -gpar_[m] * n_[m] - 4.0 * g_[m] * std::imag(std::conj(a) * s);
    }

    complex na(complex gs_sum) const { return drive_ - complex(0.0, 1.0) * gs_sum; }

    // One trial step of size h; returns the scaled error norm.
    double attempt(double h) {
        build_tables(h);
        if (!fsal_) {
            // stage 1 at the current state
            const complex sum = chunked_csum([&](std::size_t m) { return g_[m] * s_[m]; });
#pragma omp parallel for schedule(static) num_threads(nthreads())
            for (std::size_t m = 0; m < m_; ++m) {
                ks_[0][m] = ns(m, s_[m], z_[m], a_);
                kz_[0][m] = nz(m, s_[m], z_[m], a_);
            }
            ka_[0] = na(sum);
            fsal_ = true;
        }
        for (int i = 1; i < kStages; ++i) {
            const int tab = kTable[static_cast<std::size_t>(i)];
            const double ci = kC[static_cast<std::size_t>(i)];
            complex av = a_;
            for (int j = 0; j < i; ++j) av += h * kA[i][j] * ka_[j];
            const double ea = std::exp(-kappa_half_ * ci * h);
            const complex a_stage = ea * av;
            const bool last = (i == kStages - 1);

#pragma omp parallel for schedule(static) num_threads(nthreads())
            for (std::size_t c = 0; c < chunks_; ++c) {
                complex acc = 0.0;
                double emax = 0.0;
                const std::size_t end = std::min(m_, (c + 1) * kChunk);
                for (std::size_t m = c * kChunk; m < end; ++m) {
                    complex sv = s_[m];
                    double zv = z_[m];
                    for (int j = 0; j < i; ++j) {
                        sv += h * kA[i][j] * ks_[j][m];
                        zv += h * kA[i][j] * kz_[j][m];
                    }
                    const complex s_stage = e_[tab][m] * sv;
                    const double z_stage = f_[tab][m] * zv;
                    const complex nsv = ns(m, s_stage, z_stage, a_stage);
                    const double nzv = nz(m, s_stage, z_stage, a_stage);
                    ks_[i][m] = einv_[tab][m] * nsv;
                    kz_[i][m] = finv_[tab][m] * nzv;
                    acc += g_[m] * s_stage;
                    if (last) {
                        s_new_[m] = s_stage;
                        z_new_[m] = z_stage;
                        ns7_[m] = nsv;
                        nz7_[m] = nzv;
                        complex es = 0.0;
                        double ez = 0.0;
                        for (int j = 0; j < kStages; ++j) {
                            es += kE[static_cast<std::size_t>(j)] * ks_[j][m];
                            ez += kE[static_cast<std::size_t>(j)] * kz_[j][m];
                        }
                        es *= h * e_[tab][m];
                        ez *= h * f_[tab][m];
                        const double sc_s = cfg_.atol + cfg_.rtol * std::max(std::abs(s_[m]), std::abs(s_stage));
                        const double sc_z = cfg_.atol + cfg_.rtol * std::max(std::abs(z_[m]), std::abs(z_stage));
                        emax = std::max({emax, std::abs(es) / sc_s, std::abs(ez) / sc_z});
                        if (!std::isfinite(es.real()) || !std::isfinite(es.imag()) || !std::isfinite(ez))
                            emax = std::numeric_limits<double>::infinity();
                    }
                }
                part_sum_[c] = acc;
                part_err_[c] = emax;
            }
            complex sum = 0.0;
            for (const complex& p : part_sum_) sum += p;
            const complex na_v = na(sum);
            ka_[i] = na_v / ea;
            if (last) {
                a_new_ = a_stage;
                na7_ = na_v;
            }
        }
        complex ea_err = 0.0;
        for (int j = 0; j < kStages; ++j) ea_err += kE[static_cast<std::size_t>(j)] * ka_[j];
        ea_err *= h * std::exp(-kappa_half_ * h);
        double err = std::abs(ea_err) / (cfg_.atol + cfg_.rtol * std::max(std::abs(a_), std::abs(a_new_)));
        if (!std::isfinite(std::abs(a_new_))) err = std::numeric_limits<double>::infinity();
        for (double e : part_err_) err = std::max(err, e);
        if (std::isnan(err)) err = std::numeric_limits<double>::infinity();
        return err;
    }

    template <class Sampler>
    void sample_step(double t_next, double h, Sampler& sample) {
        sample.for_each_in(t_, t_next, [&](double ts) {
            const double th = (ts - t_) / h;
            const double th1 = 1.0 - th;
            auto dense = [&](auto y0, auto v1, auto k1, auto k7, auto r5) {
                auto r2 = v1 - y0;
                auto r3 = h * k1 - r2;
                auto r4 = r2 - h * k7 - r3;
                return y0 + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5)));
            };
            auto r5a = complex(0.0);
            for (int j = 0; j < kStages; ++j) r5a += kD[static_cast<std::size_t>(j)] * ka_[j];
            r5a *= h;
            const complex v1a = a_new_ * std::exp(kappa_half_ * h);
            const complex a_s = std::exp(-kappa_half_ * th * h) * dense(a_, v1a, ka_[0], ka_[6], r5a);
            if (!sample.wants_spins()) {
                sample.put(ts, a_s, 0.0, complex(0.0));
                return;
            }
            std::vector<double> pz(chunks_);
            std::vector<complex> ps(chunks_);
#pragma omp parallel for schedule(static) num_threads(nthreads())
            for (std::size_t c = 0; c < chunks_; ++c) {
                double accz = 0.0;
                complex accs = 0.0;
                const std::size_t end = std::min(m_, (c + 1) * kChunk);
                for (std::size_t m = c * kChunk; m < end; ++m) {
                    complex r5s = 0.0;
                    double r5z = 0.0;
                    for (int j = 0; j < kStages; ++j) {
                        r5s += kD[static_cast<std::size_t>(j)] * ks_[j][m];
                        r5z += kD[static_cast<std::size_t>(j)] * kz_[j][m];
                    }
                    r5s *= h;
                    r5z *= h;
                    const complex v1s = s_new_[m] * einv_[kTables - 1][m];
                    const double v1z = z_new_[m] * finv_[kTables - 1][m];
                    accs += std::exp(-lin_[m] * (th * h)) * dense(s_[m], v1s, ks_[0][m], ks_[6][m], r5s);
                    accz += std::exp(-gpar_[m] * (th * h)) * dense(z_[m], v1z, kz_[0][m], kz_[6][m], r5z);
                }
                pz[c] = accz;
                ps[c] = accs;
            }
            double sz = 0.0;
            complex sm = 0.0;
            for (std::size_t c = 0; c < chunks_; ++c) {
                sz += pz[c];
                sm += ps[c];
            }
            sample.put(ts, a_s, sz, sm);
        });
    }

    void accept(double t_next) {
        a_ = a_new_;
        std::swap(s_, s_new_);
        std::swap(z_, z_new_);
        std::swap(ks_[0], ns7_);
        std::swap(kz_[0], nz7_);
        ka_[0] = na7_;
        fsal_ = true;
        t_ = t_next;
    }

    SolverConfig cfg_;
    std::size_t m_;
    complex a_;
    double t_;
    double kappa_half_ = 0.0;
    double drive_gain_ = 0.0;
    complex drive_{0.0, 0.0};
    std::vector<double> g_, n_, gpar_;
    std::vector<complex> lin_;
    std::vector<complex> s_, s_new_, ns7_;
    std::vector<double> z_, z_new_, nz7_;
    std::array<std::vector<complex>, kStages> ks_;
    std::array<std::vector<double>, kStages> kz_;
    std::array<complex, kStages> ka_{};
    std::array<std::vector<complex>, kTables> e_, einv_;
    std::array<std::vector<double>, kTables> f_, finv_;
    complex a_new_{0.0, 0.0}, na7_{0.0, 0.0};
    std::size_t chunks_ = 0;
    std::vector<complex> part_sum_;
    std::vector<double> part_err_;
    double h_ = 0.0;
    double table_h_ = -1.0;
    bool fsal_ = false;
    long accepted_ = 0, rejected_ = 0;
    int threads_ = 0;
};

// Uniform output grid t_k = k dt, k = 0..n-1.
struct GridSampler {
    TimeTrace* trace;
    bool spins;
    std::size_t next = 0;

    bool wants_spins() const { return spins; }

    template <class F>
    void for_each_in(double t0, double t1, F&& f) {
        while (next < trace->samples.size()) {
            const double ts = trace->time(next);
            if (ts > t1) break;
            if (ts > t0) f(ts);
            else ++next;  // already covered
        }
    }

    void put(double, complex a, double sz, complex sm) {
        trace->samples[next] = a;
        if (spins) {
            trace->sz_total[next] = sz;
            trace->sminus_total[next] = sm;
        }
        ++next;
    }
};

}  // namespace

IntegrationResult integrate(const EnsembleState& initial, const CavityParams& cavity, const PulseSequence& seq,
                            const SolverConfig& solver) {
    solver.validate();
    cavity.validate();
    seq.validate();
    const auto& sp = initial.spins;
    const std::size_t m = sp.size();
    if (sp.detuning.size() != m || sp.g.size() != m || sp.gamma_perp.size() != m || sp.gamma_par.size() != m ||
        sp.sminus.size() != m || sp.sz.size() != m)
        throw InvalidInput("sub-ensemble arrays have inconsistent sizes");
    for (std::size_t k = 0; k < m; ++k) {
        if (!(sp.count[k] >= 0.0) || !(sp.gamma_perp[k] >= 0.0) || !(sp.gamma_par[k] >= 0.0))
            throw InvalidInput("sub-ensemble counts and rates must be non-negative");
        if (!std::isfinite(sp.detuning[k]) || !std::isfinite(sp.g[k]))
            throw InvalidInput("sub-ensemble detuning and coupling must be finite");
    }

    const double total = seq.total_duration();
    IntegrationResult res;
    TimeTrace& tr = res.trace;
    tr.t0 = initial.time;
    tr.dt = solver.sample_step;
    const auto n_samples = static_cast<std::size_t>(std::floor(total / solver.sample_step * (1.0 + 1e-12))) + 1;
    tr.samples.assign(n_samples, complex(0.0));
    if (solver.record_spins) {
        tr.sz_total.assign(n_samples, 0.0);
        tr.sminus_total.assign(n_samples, complex(0.0));
    }

    LawsonSolver ode(initial, cavity, solver);
    GridSampler sampler{&tr, solver.record_spins};
    sampler.put(tr.t0, ode.cavity(), solver.record_spins ? ode.total_sz() : 0.0,
                solver.record_spins ? ode.total_s() : complex(0.0));

    double t = initial.time;
    for (const auto& seg : seq.segments) {
        if (seg.ideal) {
            ode.rotate(seg.angle, seg.phase);
            continue;
        }
        if (seg.duration <= 0.0) continue;
        t += seg.duration;
        const complex beta = seg.amplitude * std::exp(complex(0.0, -seg.phase));
        ode.advance(t, beta, seg.max_step > 0.0 ? seg.max_step : solver.max_step, sampler);
    }
    // samples beyond the final time (rounding) repeat the final state
    while (sampler.next < tr.samples.size())
        sampler.put(0.0, ode.cavity(), solver.record_spins ? ode.total_sz() : 0.0,
                    solver.record_spins ? ode.total_s() : complex(0.0));

    res.final_state = initial;
    ode.write_state(res.final_state);
    res.accepted_steps = ode.accepted();
    res.rejected_steps = ode.rejected();
    return res;
}

}  // namespace esrsim
