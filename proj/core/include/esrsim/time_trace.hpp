#pragma once

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace esrsim {

using complex = std::complex<double>;

/// Uniformly sampled complex signal. For simulated cavity output the
/// samples are <a>(t) in sqrt(photons); after the detection chain they are
/// I + iQ in sqrt(photons/s) referred to the amplifier input.
struct TimeTrace {
    double t0 = 0.0;
    double dt = 0.0;
    std::vector<complex> samples;
    std::string units = "sqrt_photons";
    std::uint64_t seed = 0;
    /// Ensemble totals sampled with `samples`; empty when not recorded.
    std::vector<double> sz_total;
    std::vector<complex> sminus_total;

    std::size_t size() const { return samples.size(); }
    double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }
    double end_time() const { return samples.empty() ? t0 : time(samples.size() - 1); }
    /// Index of the first sample at or after t (clamped to size()).
    std::size_t index_at(double t) const;
};

/// Extra "# key=value" header lines written ahead of CSV tables.
using CsvHeader = std::map<std::string, std::string>;

/// t_s,Re_a,Im_a[,Sz_total,Re_Sminus,Im_Sminus]; metadata goes into the header block.
void write_trace_csv(std::ostream& os, const TimeTrace& trace, const CsvHeader& header = {});
/// Inverse of write_trace_csv; values round-trip exactly.
TimeTrace read_trace_csv(std::istream& is, CsvHeader* header = nullptr);

/// Output field sqrt(kappa2) <a>(t), photon-flux units.
TimeTrace output_field(const TimeTrace& cavity, double kappa2);

/// Phase-cycled combination (first - second) / 2; cancels any constant offset.
TimeTrace phase_cycle(const TimeTrace& first, const TimeTrace& second);

std::string format_double(double v);

}  // namespace esrsim
