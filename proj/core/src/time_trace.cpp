#include "esrsim/time_trace.hpp"

#include "esrsim/error.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace esrsim {
namespace {

double parse_double(const std::string& s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw InvalidInput("trace CSV: bad number '" + s + "'");
    return v;
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) out.push_back(cell);
    return out;
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, ptr);
}

std::size_t TimeTrace::index_at(double t) const {
    if (samples.empty() || !(dt > 0.0)) return 0;
    const double k = std::ceil((t - t0) / dt - 1e-9);
    if (k <= 0.0) return 0;
    return std::min(samples.size(), static_cast<std::size_t>(k));
}

void write_trace_csv(std::ostream& os, const TimeTrace& trace, const CsvHeader& header) {
    os << "# t0_s=" << format_double(trace.t0) << '\n';
    os << "# dt_s=" << format_double(trace.dt) << '\n';
    os << "# units=" << trace.units << '\n';
    os << "# seed=" << trace.seed << '\n';
    for (const auto& [k, v] : header) os << "# " << k << '=' << v << '\n';
    const bool spins = !trace.sz_total.empty();
    os << "t_s,Re_a,Im_a" << (spins ? ",Sz_total,Re_Sminus,Im_Sminus" : "") << '\n';
    for (std::size_t k = 0; k < trace.size(); ++k) {
        os << format_double(trace.time(k)) << ',' << format_double(trace.samples[k].real()) << ','
           << format_double(trace.samples[k].imag());
        if (spins)
            os << ',' << format_double(trace.sz_total[k]) << ',' << format_double(trace.sminus_total[k].real())
               << ',' << format_double(trace.sminus_total[k].imag());
        os << '\n';
    }
}

TimeTrace read_trace_csv(std::istream& is, CsvHeader* header) {
    TimeTrace out;
    std::string line;
    bool have_columns = false;
    bool spins = false;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            const std::string key = line.substr(2, eq - 2);
            const std::string value = line.substr(eq + 1);
            if (key == "t0_s")
                out.t0 = parse_double(value);
            else if (key == "dt_s")
                out.dt = parse_double(value);
            else if (key == "units")
                out.units = value;
            else if (key == "seed")
                out.seed = std::stoull(value);
            else if (header)
                (*header)[key] = value;
            continue;
        }
        if (!have_columns) {
            if (line.rfind("t_s,Re_a,Im_a", 0) != 0) throw InvalidInput("trace CSV: unexpected column header");
            spins = line.find("Sz_total") != std::string::npos;
            have_columns = true;
            continue;
        }
        const auto cells = split(line);
        if (cells.size() != (spins ? 6u : 3u)) throw InvalidInput("trace CSV: wrong column count");
        out.samples.emplace_back(parse_double(cells[1]), parse_double(cells[2]));
        if (spins) {
            out.sz_total.push_back(parse_double(cells[3]));
            out.sminus_total.emplace_back(parse_double(cells[4]), parse_double(cells[5]));
        }
    }
    if (!have_columns) throw InvalidInput("trace CSV: missing column header");
    return out;
}

TimeTrace output_field(const TimeTrace& cavity, double kappa2) {
    if (!(kappa2 >= 0.0)) throw InvalidInput("output_field: kappa2 must be >= 0");
    TimeTrace out = cavity;
    const double s = std::sqrt(kappa2);
    for (auto& v : out.samples) v *= s;
    out.units = "sqrt_photons_per_s";
    out.sz_total.clear();
    out.sminus_total.clear();
    return out;
}

TimeTrace phase_cycle(const TimeTrace& first, const TimeTrace& second) {
    if (first.size() != second.size() || first.dt != second.dt || first.t0 != second.t0)
        throw InvalidInput("phase_cycle: traces must share the same sampling grid");
    TimeTrace out = first;
    out.sz_total.clear();
    out.sminus_total.clear();
    for (std::size_t k = 0; k < out.size(); ++k) out.samples[k] = 0.5 * (first.samples[k] - second.samples[k]);
    return out;
}

}  // namespace esrsim
