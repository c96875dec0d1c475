#include "esrsim/ensemble.hpp"

#include "esrsim/constants.hpp"
#include "esrsim/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace esrsim {

using constants::pi;
using constants::two_pi;

void CavityParams::validate(std::optional<double> expected_q) const {
    if (!(omega0 > 0.0)) throw InvalidInput("cavity omega0 must be positive");
    if (!(kappa1 >= 0.0) || !(kappa2 >= 0.0) || !(kappaL >= 0.0))
        throw InvalidInput("cavity loss rates must be non-negative");
    if (!(kappa() > 0.0)) throw InvalidInput("total cavity loss rate must be positive");
    if (expected_q) {
        const double q = quality();
        if (std::abs(q - *expected_q) > 0.01 * *expected_q)
            throw InvalidInput("kappa1 + kappa2 + kappaL gives Q = " + std::to_string(q) + ", expected " +
                               std::to_string(*expected_q));
    }
}

LineShape parse_line_shape(const std::string& name) {
    if (name == "lorentzian") return LineShape::Lorentzian;
    if (name == "square") return LineShape::Square;
    if (name == "tilted_square") return LineShape::TiltedSquare;
    if (name == "two_peak") return LineShape::TwoPeak;
    if (name == "tabulated") return LineShape::Tabulated;
    throw InvalidInput("unknown line shape '" + name + "'");
}

std::string to_string(LineShape shape) {
    switch (shape) {
    case LineShape::Lorentzian: return "lorentzian";
    case LineShape::Square: return "square";
    case LineShape::TiltedSquare: return "tilted_square";
    case LineShape::TwoPeak: return "two_peak";
    case LineShape::Tabulated: return "tabulated";
    }
    return "unknown";
}

namespace {

double lorentz_cdf(double x, double fwhm) { return 0.5 + std::atan(2.0 * x / fwhm) / pi; }

double lorentz_pdf(double x, double fwhm) { return (fwhm / two_pi) / (x * x + 0.25 * fwhm * fwhm); }

// Integral over [lo, hi] of the linear interpolant through (x0, y0), (x1, y1).
double linear_piece(double x0, double x1, double y0, double y1, double lo, double hi) {
    const double a = std::max(lo, x0);
    const double b = std::min(hi, x1);
    if (b <= a) return 0.0;
    const double slope = (y1 - y0) / (x1 - x0);
    const double ya = y0 + slope * (a - x0);
    const double yb = y0 + slope * (b - x0);
    return 0.5 * (ya + yb) * (b - a);
}

double table_integral(const FrequencyDistribution& f, double lo, double hi) {
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < f.table_offsets.size(); ++i)
        s += linear_piece(f.table_offsets[i], f.table_offsets[i + 1], f.table_density[i], f.table_density[i + 1],
                          lo, hi);
    return s;
}

}  // namespace

double FrequencyDistribution::density(double x) const {
    switch (kind) {
    case LineShape::Lorentzian: return lorentz_pdf(x, width);
    case LineShape::Square: return std::abs(x) <= 0.5 * width ? 1.0 / width : 0.0;
    case LineShape::TiltedSquare: {
        if (std::abs(x) > 0.5 * width) return 0.0;
        const double slope = tilt / (bins * spacing);
        return (1.0 + slope * x) / width;
    }
    case LineShape::TwoPeak:
        return (1.0 - second_peak_weight) * lorentz_pdf(x + 0.5 * splitting, width) +
               second_peak_weight * lorentz_pdf(x - 0.5 * splitting, width);
    case LineShape::Tabulated: {
        const auto& xs = table_offsets;
        if (x < xs.front() || x > xs.back()) return 0.0;
        auto it = std::upper_bound(xs.begin(), xs.end(), x);
        std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(it - xs.begin()), xs.size() - 1);
        if (i == 0) i = 1;
        const double t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
        const double total = table_integral(*this, xs.front(), xs.back());
        return ((1.0 - t) * table_density[i - 1] + t * table_density[i]) / total;
    }
    }
    return 0.0;
}

double FrequencyDistribution::fraction(double lo, double hi) const {
    if (hi < lo) std::swap(lo, hi);
    switch (kind) {
    case LineShape::Lorentzian: return lorentz_cdf(hi, width) - lorentz_cdf(lo, width);
    case LineShape::Square: {
        const double a = std::clamp(lo, -0.5 * width, 0.5 * width);
        const double b = std::clamp(hi, -0.5 * width, 0.5 * width);
        return (b - a) / width;
    }
    case LineShape::TiltedSquare: {
        const double a = std::clamp(lo, -0.5 * width, 0.5 * width);
        const double b = std::clamp(hi, -0.5 * width, 0.5 * width);
        const double slope = tilt / (bins * spacing);
        return ((b - a) + 0.5 * slope * (b * b - a * a)) / width;
    }
    case LineShape::TwoPeak: {
        const double h = 0.5 * splitting;
        return (1.0 - second_peak_weight) * (lorentz_cdf(hi + h, width) - lorentz_cdf(lo + h, width)) +
               second_peak_weight * (lorentz_cdf(hi - h, width) - lorentz_cdf(lo - h, width));
    }
    case LineShape::Tabulated:
        return table_integral(*this, lo, hi) / table_integral(*this, table_offsets.front(), table_offsets.back());
    }
    return 0.0;
}

double FrequencyDistribution::bin_detuning(int k) const { return (k - 0.5 * (bins - 1)) * spacing; }

void FrequencyDistribution::validate() const {
    if (bins < 1) throw InvalidInput("frequency bins must be >= 1");
    if (!(spacing > 0.0)) throw InvalidInput("frequency bin spacing must be positive");
    if (!std::isfinite(center_offset)) throw InvalidInput("frequency center offset must be finite");
    switch (kind) {
    case LineShape::Lorentzian:
    case LineShape::Square:
        if (!(width > 0.0)) throw InvalidInput("line width must be positive");
        break;
    case LineShape::TiltedSquare:
        if (!(width > 0.0)) throw InvalidInput("line width must be positive");
        if (std::abs(tilt) * width / (2.0 * bins * spacing) > 1.0)
            throw InvalidInput("tilt makes the line density negative");
        break;
    case LineShape::TwoPeak:
        if (!(width > 0.0)) throw InvalidInput("line width must be positive");
        if (!(splitting >= 0.0)) throw InvalidInput("two-peak splitting must be non-negative");
        if (!(second_peak_weight >= 0.0 && second_peak_weight <= 1.0))
            throw InvalidInput("second peak weight must lie in [0, 1]");
        break;
    case LineShape::Tabulated: {
        if (table_offsets.size() < 2 || table_offsets.size() != table_density.size())
            throw InvalidInput("tabulated line needs >= 2 (offset, density) pairs");
        for (std::size_t i = 1; i < table_offsets.size(); ++i)
            if (!(table_offsets[i] > table_offsets[i - 1]))
                throw InvalidInput("tabulated offsets must be strictly increasing");
        for (double d : table_density)
            if (!(d >= 0.0)) throw InvalidInput("tabulated density must be non-negative");
        if (!(table_integral(*this, table_offsets.front(), table_offsets.back()) > 0.0))
            throw InvalidInput("tabulated density integrates to zero");
        break;
    }
    }
}

SubEnsemble SpinEnsemble::at(std::size_t m) const {
    SubEnsemble s;
    s.count = count[m];
    s.detuning = detuning[m];
    s.g = g[m];
    s.gamma_perp = gamma_perp[m];
    s.gamma_par = gamma_par[m];
    s.sx = 2.0 * sminus[m].real();
    s.sy = -2.0 * sminus[m].imag();
    s.sz = sz[m];
    return s;
}

void SpinEnsemble::push_back(const SubEnsemble& s) {
    count.push_back(s.count);
    detuning.push_back(s.detuning);
    g.push_back(s.g);
    gamma_perp.push_back(s.gamma_perp);
    gamma_par.push_back(s.gamma_par);
    sminus.emplace_back(0.5 * s.sx, -0.5 * s.sy);
    sz.push_back(s.sz);
}

void SpinEnsemble::append(const SpinEnsemble& o) {
    count.insert(count.end(), o.count.begin(), o.count.end());
    detuning.insert(detuning.end(), o.detuning.begin(), o.detuning.end());
    g.insert(g.end(), o.g.begin(), o.g.end());
    gamma_perp.insert(gamma_perp.end(), o.gamma_perp.begin(), o.gamma_perp.end());
    gamma_par.insert(gamma_par.end(), o.gamma_par.begin(), o.gamma_par.end());
    sminus.insert(sminus.end(), o.sminus.begin(), o.sminus.end());
    sz.insert(sz.end(), o.sz.begin(), o.sz.end());
}

double SpinEnsemble::total_count() const { return std::accumulate(count.begin(), count.end(), 0.0); }
double SpinEnsemble::total_sz() const { return std::accumulate(sz.begin(), sz.end(), 0.0); }
complex SpinEnsemble::total_sminus() const { return std::accumulate(sminus.begin(), sminus.end(), complex{}); }

double SpinEnsemble::bloch_norm2(std::size_t m) const { return 4.0 * std::norm(sminus[m]) + sz[m] * sz[m]; }

double purcell_rate(double g_hz, double detuning, double kappa) {
    const double g = two_pi * g_hz;
    return kappa * g * g / (detuning * detuning + 0.25 * kappa * kappa);
}

SpinEnsemble discretize_ensemble(const CouplingDistribution& coupling, const FrequencyDistribution& freq,
                                 double n_total, const CavityParams& cavity, const DiscretizeOptions& opts) {
    coupling.validate();
    freq.validate();
    cavity.validate();
    if (!(n_total >= 0.0)) throw InvalidInput("spin number must be non-negative");
    if (!(opts.gamma_rep > 0.0)) throw InvalidInput("repetition rate must be positive");
    if (!(opts.gamma_perp >= 0.0)) throw InvalidInput("gamma_perp must be non-negative");
    if (opts.gamma_par && !(*opts.gamma_par >= 0.0)) throw InvalidInput("gamma_par must be non-negative");

    std::vector<double> wf(static_cast<std::size_t>(freq.bins));
    for (int k = 0; k < freq.bins; ++k) {
        const double x = freq.bin_detuning(k) - freq.center_offset;
        wf[static_cast<std::size_t>(k)] = freq.fraction(x - 0.5 * freq.spacing, x + 0.5 * freq.spacing);
    }

    SpinEnsemble out;
    const std::size_t total = static_cast<std::size_t>(coupling.bins()) * wf.size();
    out.count.reserve(total);
    out.detuning.reserve(total);
    out.g.reserve(total);
    out.gamma_perp.reserve(total);
    out.gamma_par.reserve(total);
    out.sminus.reserve(total);
    out.sz.reserve(total);
    for (int i = 0; i < coupling.bins(); ++i) {
        const double g = coupling.g[static_cast<std::size_t>(i)] * opts.coupling_scale;
        for (int k = 0; k < freq.bins; ++k) {
            const double n = n_total * coupling.weight[static_cast<std::size_t>(i)] * wf[static_cast<std::size_t>(k)];
            const double delta = two_pi * freq.bin_detuning(k);
            const double gpar = opts.gamma_par ? *opts.gamma_par : purcell_rate(g, delta, cavity.kappa());
            out.count.push_back(n);
            out.detuning.push_back(delta);
            out.g.push_back(g);
            out.gamma_perp.push_back(opts.gamma_perp);
            out.gamma_par.push_back(gpar);
            out.sminus.emplace_back(0.0, 0.0);
            out.sz.push_back(-n * (1.0 - std::exp(-gpar / opts.gamma_rep)));
        }
    }
    return out;
}

void rotate_spins(SpinEnsemble& spins, double angle, double phase) {
    const double nx = std::cos(phase), ny = std::sin(phase);
    const double c = std::cos(angle), s = std::sin(angle);
    for (std::size_t m = 0; m < spins.size(); ++m) {
        const double x = 2.0 * spins.sminus[m].real();
        const double y = -2.0 * spins.sminus[m].imag();
        const double z = spins.sz[m];
        const double dot = nx * x + ny * y;
        // v cos + (n x v) sin + n (n.v)(1 - cos), with n = (nx, ny, 0)
        const double xr = x * c + (ny * z) * s + nx * dot * (1.0 - c);
        const double yr = y * c + (-nx * z) * s + ny * dot * (1.0 - c);
        const double zr = z * c + (nx * y - ny * x) * s;
        spins.sminus[m] = complex(0.5 * xr, -0.5 * yr);
        spins.sz[m] = zr;
    }
}

double lorentzian_density(double detuning, double w) {
    return (w / two_pi) / (detuning * detuning + 0.25 * w * w);
}

complex analytic_sminus(double p, double n, double w, double t) {
    return complex(0.0, -0.5 * p * n * std::exp(-0.5 * w * std::abs(t)));
}

double analytic_echo(double g, double p, double n, double w, double kappa, double t) {
    if (t < 0.0) return -g * p * n / (kappa + w) * std::exp(0.5 * w * t);
    if (std::abs(kappa - w) < 1e-6 * kappa)
        return -g * p * n / (2.0 * w) * std::exp(-0.5 * w * t) * (1.0 + w * t);
    const double pref = -g * p * n / (kappa + w);
    return pref * ((kappa + w) / (kappa - w) * std::exp(-0.5 * w * t) -
                   2.0 * w / (kappa - w) * std::exp(-0.5 * kappa * t));
}

double analytic_echo_energy(double g, double p, double n, double w, double kappa, double kappa2) {
    const double gpn = g * p * n;
    return 2.0 * gpn * gpn * kappa2 * (kappa + 2.0 * w) / ((kappa + w) * (kappa + w) * w * kappa);
}

double cooperativity(double g, double n, double kappa, double w) { return 4.0 * g * g * n / (kappa * w); }

void SolverConfig::validate() const {
    if (!(rtol > 0.0) || !(atol > 0.0)) throw InvalidInput("solver tolerances must be positive");
    if (!(max_step > 0.0)) throw InvalidInput("solver max_step must be positive");
    if (!(initial_step > 0.0)) throw InvalidInput("solver initial_step must be positive");
    if (!(min_step > 0.0) || min_step >= max_step) throw InvalidInput("solver min_step must be in (0, max_step)");
    if (!(sample_step > 0.0)) throw InvalidInput("solver sample_step must be positive");
    if (max_steps < 1) throw InvalidInput("solver max_steps must be >= 1");
    if (threads < 0) throw InvalidInput("solver threads must be >= 0");
}

}  // namespace esrsim
