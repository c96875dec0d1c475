#pragma once

// Vacuum-fluctuation current and magnetic field of a thin superconducting
// strip, the resulting single-spin coupling constant, and the coupling
// distribution of an implanted donor layer.
//
// Coordinates: the strip occupies |x| <= w/2, 0 <= y <= b and carries current
// along +z. Donors sit in the substrate at y = -depth.

#include "esrsim/constants.hpp"

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace esrsim {

struct StripGeometry {
    double width = 5e-6;              // w, m
    double thickness = 50e-9;         // b, m
    double penetration_depth = 90e-9; // lambda, m
    double impedance = 44.0;          // Z0, Ohm
    double omega0 = constants::two_pi * 7.24e9;  // rad/s
    int filaments_x = 2000;
    int filaments_y = 4;

    /// lambda^2 / (2 b): width of the exponential edge region.
    double edge_length() const;
    void validate() const;
};

/// Linear interpolation over (depth, density) samples.
class ImplantationProfile {
public:
    ImplantationProfile() = default;
    ImplantationProfile(std::vector<double> depths, std::vector<double> densities);

    /// Skewed (two-piece) Gaussian with mode at `peak_depth` and
    /// different widths above and below it, sampled on `samples` points.
    static ImplantationProfile skew_gaussian(double peak_depth = 100e-9, double sigma_shallow = 45e-9,
                                             double sigma_deep = 30e-9, double max_depth = 250e-9,
                                             int samples = 251);
    static ImplantationProfile uniform(double min_depth, double max_depth);

    double density(double depth) const;  // 1/m, zero outside the table
    double total_dose() const;           // integral of density
    double min_depth() const { return depths_.front(); }
    double max_depth() const { return depths_.back(); }
    const std::vector<double>& depths() const { return depths_; }
    const std::vector<double>& densities() const { return densities_; }

private:
    std::vector<double> depths_;
    std::vector<double> densities_;
};

ImplantationProfile read_implantation_csv(std::istream& is);
void write_implantation_csv(std::ostream& os, const ImplantationProfile& profile);

struct CouplingDistribution {
    std::vector<double> g;       // bin centres, Hz (g / 2 pi)
    std::vector<double> weight;  // sums to 1

    int bins() const { return static_cast<int>(g.size()); }
    /// Centre of the heaviest bin.
    double mode() const;
    double mean() const;
    void validate() const;
};

void write_coupling_csv(std::ostream& os, const CouplingDistribution& dist);
CouplingDistribution read_coupling_csv(std::istream& is);

/// delta_i = omega0 sqrt(hbar / (2 Z0)), amperes.
double vacuum_current(const StripGeometry& geom);

/// Sheet current density (A/m) across the strip, normalized so that its
/// integral over the width equals `total_current`. Throws DomainError for |x| > w/2.
double current_density(double x, const StripGeometry& geom, double total_current);

/// Current carried by the slice [x0, x1] of the strip, exact for the piecewise profile.
double current_between(double x0, double x1, const StripGeometry& geom, double total_current);

struct FieldXY {
    double bx = 0.0;  // T
    double by = 0.0;
};

/// Magnetic field of the strip's vacuum current at (x, y), from a filament
/// decomposition of the current profile. Throws DomainError inside the film.
FieldXY vacuum_field(double x, double y, const StripGeometry& geom);

/// g / 2 pi in Hz: sx * gamma_e * sqrt(dBy^2 + cos^2(theta) dBx^2); gamma_e in Hz/T.
double coupling_constant(const FieldXY& db, double theta, double sx_element, double gamma_e = 28e9);

struct CouplingRegion {
    double x_min = -2.5e-6;
    double x_max = 2.5e-6;
    int x_samples = 201;
    int depth_samples = 121;
};

/// Histogram of single-spin couplings over the donor layer within the region,
/// weighted by implantation density. Bins are equal-width between the 0.1 %
/// and 99.9 % weighted quantiles of g; the tails fold into the end bins.
CouplingDistribution coupling_distribution(const StripGeometry& geom, const ImplantationProfile& profile,
                                           const CouplingRegion& region, double theta, double sx_element,
                                           int bins = 50, double gamma_e = 28e9);

}  // namespace esrsim
