#include "esrsim/field_geometry.hpp"

#include "esrsim/constants.hpp"
#include "esrsim/error.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace esrsim {
namespace {

// Ratio J(w/2) / J(0) of the strip current profile.
double edge_ratio(const StripGeometry& g) {
    return (1.165 / g.penetration_depth) * std::sqrt(g.width * g.thickness);
}

double bulk_limit(const StripGeometry& g) { return std::abs(0.5 * g.width - g.edge_length()); }

// Integral of the unnormalized profile from 0 to x, odd in x.
double profile_primitive(double x, const StripGeometry& g) {
    const double s = x < 0.0 ? -1.0 : 1.0;
    const double ax = std::min(std::abs(x), 0.5 * g.width);
    const double half_w = 0.5 * g.width;
    const double xb = bulk_limit(g);
    if (ax <= xb) return s * half_w * std::asin(ax / half_w);
    const double decay = g.penetration_depth * g.penetration_depth / g.thickness;
    const double bulk = half_w * std::asin(xb / half_w);
    const double edge = edge_ratio(g) * decay *
                        (std::exp(-(half_w - ax) / decay) - std::exp(-(half_w - xb) / decay));
    return s * (bulk + edge);
}

double profile_shape(double x, const StripGeometry& g) {
    const double half_w = 0.5 * g.width;
    const double ax = std::abs(x);
    if (ax >= half_w) return edge_ratio(g);
    if (ax <= bulk_limit(g)) return 1.0 / std::sqrt(1.0 - (ax / half_w) * (ax / half_w));
    const double decay = g.penetration_depth * g.penetration_depth / g.thickness;
    return edge_ratio(g) * std::exp(-(half_w - ax) / decay);
}

double profile_norm(const StripGeometry& g) { return 2.0 * profile_primitive(0.5 * g.width, g); }

bool inside_film(double x, double y, const StripGeometry& g) {
    return std::abs(x) <= 0.5 * g.width && y >= 0.0 && y <= g.thickness;
}

}  // namespace

double StripGeometry::edge_length() const {
    return penetration_depth * penetration_depth / (2.0 * thickness);
}

void StripGeometry::validate() const {
    if (!(width > 0.0 && thickness > 0.0 && penetration_depth > 0.0))
        throw InvalidInput("StripGeometry: width, thickness and penetration depth must be > 0");
    if (!(edge_length() < 0.5 * width))
        throw InvalidInput("StripGeometry: lambda^2/(2b) must be smaller than w/2");
    if (!(impedance > 0.0)) throw InvalidInput("StripGeometry: Z0 must be > 0");
    if (!(omega0 >= 0.0) || !std::isfinite(omega0)) throw InvalidInput("StripGeometry: omega0 must be >= 0");
    if (filaments_x < 1 || filaments_y < 1) throw InvalidInput("StripGeometry: filament counts must be >= 1");
}

ImplantationProfile::ImplantationProfile(std::vector<double> depths, std::vector<double> densities)
    : depths_(std::move(depths)), densities_(std::move(densities)) {
    if (depths_.size() != densities_.size() || depths_.empty())
        throw InvalidInput("ImplantationProfile: depth and density columns must be non-empty and equal length");
    for (std::size_t k = 0; k < depths_.size(); ++k) {
        if (!std::isfinite(depths_[k]) || !std::isfinite(densities_[k]))
            throw InvalidInput("ImplantationProfile: non-finite entry");
        if (densities_[k] < 0.0) throw InvalidInput("ImplantationProfile: negative density");
        if (depths_[k] < 0.0) throw InvalidInput("ImplantationProfile: negative depth");
        if (k > 0 && !(depths_[k] > depths_[k - 1]))
            throw InvalidInput("ImplantationProfile: depths must be strictly increasing");
    }
}

ImplantationProfile ImplantationProfile::skew_gaussian(double peak_depth, double sigma_shallow,
                                                       double sigma_deep, double max_depth, int samples) {
    if (samples < 2 || !(max_depth > 0.0)) throw InvalidInput("skew_gaussian: bad sampling");
    std::vector<double> d(samples), rho(samples);
    for (int k = 0; k < samples; ++k) {
        d[k] = max_depth * k / (samples - 1);
        const double s = d[k] < peak_depth ? sigma_shallow : sigma_deep;
        const double u = (d[k] - peak_depth) / s;
        rho[k] = std::exp(-0.5 * u * u);
    }
    return ImplantationProfile(std::move(d), std::move(rho));
}

ImplantationProfile ImplantationProfile::uniform(double min_depth, double max_depth) {
    if (!(max_depth > min_depth)) throw InvalidInput("uniform profile: max_depth must exceed min_depth");
    return ImplantationProfile({min_depth, max_depth}, {1.0, 1.0});
}

double ImplantationProfile::density(double depth) const {
    if (depths_.size() == 1) return depth == depths_.front() ? densities_.front() : 0.0;
    if (depth < depths_.front() || depth > depths_.back()) return 0.0;
    const auto it = std::upper_bound(depths_.begin(), depths_.end(), depth);
    if (it == depths_.end()) return densities_.back();
    const std::size_t k = static_cast<std::size_t>(it - depths_.begin());
    const double t = (depth - depths_[k - 1]) / (depths_[k] - depths_[k - 1]);
    return densities_[k - 1] + t * (densities_[k] - densities_[k - 1]);
}

double ImplantationProfile::total_dose() const {
    double sum = 0.0;
    for (std::size_t k = 1; k < depths_.size(); ++k)
        sum += 0.5 * (densities_[k] + densities_[k - 1]) * (depths_[k] - depths_[k - 1]);
    return sum;
}

ImplantationProfile read_implantation_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw InvalidInput("implantation CSV: missing header");
    if (line.find("depth") == std::string::npos)
        throw InvalidInput("implantation CSV: header must name depth_m,density_per_m");
    std::vector<double> d, rho;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        double a = 0.0, b = 0.0;
        if (!(ls >> a >> b))
            throw InvalidInput("implantation CSV: cannot parse line " + std::to_string(lineno));
        d.push_back(a);
        rho.push_back(b);
    }
    return ImplantationProfile(std::move(d), std::move(rho));
}

void write_implantation_csv(std::ostream& os, const ImplantationProfile& profile) {
    os << "depth_m,density_per_m\n";
    const auto old = os.precision(17);
    for (std::size_t k = 0; k < profile.depths().size(); ++k)
        os << profile.depths()[k] << ',' << profile.densities()[k] << '\n';
    os.precision(old);
}

double CouplingDistribution::mode() const {
    if (g.empty()) throw InvalidInput("CouplingDistribution: empty");
    const auto it = std::max_element(weight.begin(), weight.end());
    return g[static_cast<std::size_t>(it - weight.begin())];
}

double CouplingDistribution::mean() const {
    return std::inner_product(g.begin(), g.end(), weight.begin(), 0.0);
}

void CouplingDistribution::validate() const {
    if (g.empty() || g.size() != weight.size()) throw InvalidInput("CouplingDistribution: malformed bins");
    double sum = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
        if (!(g[k] > 0.0)) throw InvalidInput("CouplingDistribution: bin centres must be > 0");
        if (weight[k] < 0.0) throw InvalidInput("CouplingDistribution: negative weight");
        sum += weight[k];
    }
    if (std::abs(sum - 1.0) > 1e-9) throw InvalidInput("CouplingDistribution: weights must sum to 1");
}

void write_coupling_csv(std::ostream& os, const CouplingDistribution& dist) {
    os << "g_Hz,weight\n";
    const auto old = os.precision(17);
    for (std::size_t k = 0; k < dist.g.size(); ++k) os << dist.g[k] << ',' << dist.weight[k] << '\n';
    os.precision(old);
}

CouplingDistribution read_coupling_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.find("g_Hz") == std::string::npos)
        throw InvalidInput("coupling CSV: header must be g_Hz,weight");
    CouplingDistribution out;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        double g = 0.0, w = 0.0;
        if (!(ls >> g >> w)) throw InvalidInput("coupling CSV: malformed row '" + line + "'");
        out.g.push_back(g);
        out.weight.push_back(w);
    }
    out.validate();
    return out;
}

double vacuum_current(const StripGeometry& geom) {
    return geom.omega0 * std::sqrt(constants::hbar / (2.0 * geom.impedance));
}

double current_density(double x, const StripGeometry& geom, double total_current) {
    if (std::abs(x) > 0.5 * geom.width) throw DomainError("current_density: |x| exceeds w/2");
    return total_current * profile_shape(x, geom) / profile_norm(geom);
}

double current_between(double x0, double x1, const StripGeometry& geom, double total_current) {
    return total_current * (profile_primitive(x1, geom) - profile_primitive(x0, geom)) / profile_norm(geom);
}

FieldXY vacuum_field(double x, double y, const StripGeometry& geom) {
    geom.validate();
    if (inside_film(x, y, geom)) throw DomainError("vacuum_field: point lies inside the superconducting film");
    const double di = vacuum_current(geom);
    const double dx = geom.width / geom.filaments_x;
    const double dy = geom.thickness / geom.filaments_y;
    const double k = constants::mu0 / (2.0 * constants::pi);
    FieldXY out;
    for (int i = 0; i < geom.filaments_x; ++i) {
        const double x0 = -0.5 * geom.width + i * dx;
        const double current = current_between(x0, x0 + dx, geom, di) / geom.filaments_y;
        const double rx = x - (x0 + 0.5 * dx);
        for (int j = 0; j < geom.filaments_y; ++j) {
            const double ry = y - (j + 0.5) * dy;
            const double r2 = rx * rx + ry * ry;
            out.bx -= k * current * ry / r2;
            out.by += k * current * rx / r2;
        }
    }
    return out;
}

double coupling_constant(const FieldXY& db, double theta, double sx_element, double gamma_e) {
    if (sx_element < 0.0 || sx_element > 0.5 + 1e-12)
        throw InvalidInput("coupling_constant: sx_element must lie in [0, 1/2]");
    const double c = std::cos(theta);
    return sx_element * gamma_e * std::sqrt(db.by * db.by + c * c * db.bx * db.bx);
}

CouplingDistribution coupling_distribution(const StripGeometry& geom, const ImplantationProfile& profile,
                                           const CouplingRegion& region, double theta, double sx_element,
                                           int bins, double gamma_e) {
    geom.validate();
    if (bins < 2) throw InvalidInput("coupling_distribution: need at least 2 bins");
    if (region.x_samples < 1 || region.depth_samples < 1 || region.x_max < region.x_min)
        throw InvalidInput("coupling_distribution: empty region");
    const double reach = 0.5 * geom.width + 10.0 * geom.width;
    if (region.x_min < -reach || region.x_max > reach)
        throw InvalidInput("coupling_distribution: region extends beyond w/2 + 10 w");

    const int nx = region.x_min == region.x_max ? 1 : region.x_samples;
    const int nd = region.depth_samples;
    const double hx = nx == 1 ? 1.0 : (region.x_max - region.x_min) / nx;
    const double d0 = profile.min_depth();
    const double hd = nd == 1 ? 1.0 : (profile.max_depth() - d0) / nd;

    std::vector<double> g(static_cast<std::size_t>(nx) * nd, 0.0);
    std::vector<double> w(g.size(), 0.0);

#pragma omp parallel for schedule(static)
    for (int i = 0; i < nx; ++i) {
        const double x = nx == 1 ? region.x_min : region.x_min + (i + 0.5) * hx;
        for (int j = 0; j < nd; ++j) {
            const double depth = nd == 1 ? 0.5 * (d0 + profile.max_depth()) : d0 + (j + 0.5) * hd;
            const std::size_t idx = static_cast<std::size_t>(i) * nd + j;
            const double rho = profile.density(depth);
            if (rho <= 0.0 || depth <= 0.0) continue;
            w[idx] = rho * hx * hd;
            g[idx] = coupling_constant(vacuum_field(x, -depth, geom), theta, sx_element, gamma_e);
        }
    }

    std::vector<std::size_t> order;
    double total = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
        if (w[k] > 0.0 && g[k] > 0.0) {
            order.push_back(k);
            total += w[k];
        }
    }
    if (order.empty() || !(total > 0.0))
        throw InvalidInput("coupling_distribution: region carries zero weight or zero coupling");

    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return g[a] < g[b]; });
    auto quantile = [&](double q) {
        double acc = 0.0;
        for (std::size_t k : order) {
            acc += w[k];
            if (acc >= q * total) return g[k];
        }
        return g[order.back()];
    };
    const double lo = quantile(1e-3);
    const double hi = quantile(1.0 - 1e-3);

    CouplingDistribution out;
    if (!(hi - lo > 1e-12 * hi)) {
        out.g = {lo};
        out.weight = {1.0};
        return out;
    }
    const double width = (hi - lo) / bins;
    out.g.resize(bins);
    out.weight.assign(bins, 0.0);
    for (int b = 0; b < bins; ++b) out.g[b] = lo + (b + 0.5) * width;
    for (std::size_t k : order) {
        const int b = std::clamp(static_cast<int>(std::floor((g[k] - lo) / width)), 0, bins - 1);
        out.weight[b] += w[k];
    }
    for (double& v : out.weight) v /= total;
    return out;
}

}  // namespace esrsim
