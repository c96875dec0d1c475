#include "esrsim/spin_model.hpp"

#include "esrsim/error.hpp"

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <ostream>
#include <sstream>

namespace esrsim {
namespace {

using cd = std::complex<double>;

int twice(double j) { return static_cast<int>(std::lround(2.0 * j)); }

// Angular momentum matrices for spin j in the |j, m> basis, m descending.
std::array<HermitianMatrix, 3> angular_momentum(double j) {
    const int d = twice(j) + 1;
    HermitianMatrix jp = HermitianMatrix::Zero(d, d);
    HermitianMatrix jz = HermitianMatrix::Zero(d, d);
    for (int k = 0; k < d; ++k) {
        const double m = j - k;
        jz(k, k) = m;
        if (k > 0) jp(k - 1, k) = std::sqrt(j * (j + 1) - m * (m + 1));
    }
    const HermitianMatrix jm = jp.adjoint();
    return {(jp + jm) / 2.0, (jp - jm) / cd(0.0, 2.0), jz};
}

HermitianMatrix kron(const HermitianMatrix& a, const HermitianMatrix& b) {
    HermitianMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

Eigen::Vector3d field_direction(const Field& b) {
    const double n = b.norm();
    return n > 0.0 ? Eigen::Vector3d(b / n) : Eigen::Vector3d::UnitZ();
}

Eigen::Vector3d transverse_direction(const Eigen::Vector3d& n) {
    Eigen::Vector3d x = Eigen::Vector3d::UnitX() - n.x() * n;
    if (x.norm() < 1e-8) x = Eigen::Vector3d::UnitY() - n.y() * n;
    return x.normalized();
}

HermitianMatrix project(const std::array<HermitianMatrix, 3>& op, const Eigen::Vector3d& n) {
    return n.x() * op[0] + n.y() * op[1] + n.z() * op[2];
}

// Labels states at a (near-)degenerate field: eigenvalue clusters are
// rediagonalized under F.n so each state carries a definite m_F.
EnergyLevels label_by_projection(const SpinSystem& sys, const Field& b0, const Eigen::Vector3d& n) {
    const SpinOperators ops = spin_operators(sys);
    const Eigen::Index d = sys.dimension();

    Eigenpairs ep = diagonalize(build_hamiltonian(b0, sys));
    const HermitianMatrix Fn = project(ops.S, n) + project(ops.I, n);
    HermitianMatrix F2 = HermitianMatrix::Zero(d, d);
    for (int k = 0; k < 3; ++k) {
        const HermitianMatrix Fk = ops.S[k] + ops.I[k];
        F2 += Fk * Fk;
    }

    const double tol = 1e-6 * std::abs(sys.A);
    EnergyLevels out;
    out.field = b0;
    out.eigenvalues = ep.values;
    out.eigenvectors = ep.vectors;
    out.labels.resize(d);

    Eigen::Index start = 0;
    while (start < d) {
        Eigen::Index stop = start + 1;
        while (stop < d && ep.values(stop) - ep.values(stop - 1) < tol) ++stop;
        const Eigen::Index size = stop - start;
        const HermitianMatrix block = ep.vectors.middleCols(start, size);
        Eigen::SelfAdjointEigenSolver<HermitianMatrix> es(block.adjoint() * Fn * block);
        const HermitianMatrix rotated = block * es.eigenvectors();
        for (Eigen::Index k = 0; k < size; ++k) {
            const Eigen::VectorXcd v = rotated.col(k);
            const double f2 = (v.adjoint() * F2 * v)(0, 0).real();
            const double F = 0.5 * (-1.0 + std::sqrt(1.0 + 4.0 * f2));
            out.eigenvectors.col(start + k) = v;
            out.labels[start + k] = label(F, es.eigenvalues()(k));
        }
        start = stop;
    }
    return out;
}

// One overlap-matching step; `to` is close enough to `from.field` that states move little.
EnergyLevels match_step(const EnergyLevels& from, const SpinSystem& sys, const Field& to) {
    Eigenpairs ep = diagonalize(build_hamiltonian(to, sys));
    const Eigen::Index d = ep.values.size();
    const Eigen::MatrixXd overlap = (from.eigenvectors.adjoint() * ep.vectors).cwiseAbs();

    std::vector<int> assigned(d, -1);  // new index -> old index
    std::vector<bool> old_used(d, false);
    for (Eigen::Index round = 0; round < d; ++round) {
        double best = -1.0;
        Eigen::Index bi = 0, bj = 0;
        for (Eigen::Index i = 0; i < d; ++i) {
            if (old_used[i]) continue;
            for (Eigen::Index j = 0; j < d; ++j) {
                if (assigned[j] >= 0) continue;
                if (overlap(i, j) > best) {
                    best = overlap(i, j);
                    bi = i;
                    bj = j;
                }
            }
        }
        old_used[bi] = true;
        assigned[bj] = static_cast<int>(bi);
    }

    EnergyLevels out;
    out.field = to;
    out.eigenvalues = ep.values;
    out.eigenvectors = ep.vectors;
    out.labels.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        out.labels[j] = from.labels[assigned[j]];
        // Fix the arbitrary eigenvector phase against the previous step.
        const cd ov = from.eigenvectors.col(assigned[j]).dot(ep.vectors.col(j));
        if (std::abs(ov) > 0.0) out.eigenvectors.col(j) *= std::conj(ov) / std::abs(ov);
    }
    return out;
}

double pair_frequency(const EnergyLevels& lv, const LevelLabel& lower, const LevelLabel& upper) {
    return lv.eigenvalues(lv.index_of(upper)) - lv.eigenvalues(lv.index_of(lower));
}

double central_slope(const EnergyLevels& lv, const SpinSystem& sys, const LevelLabel& lower,
                     const LevelLabel& upper) {
    constexpr double delta = 1e-6;  // T
    const Eigen::Vector3d n = field_direction(lv.field);
    const double fp = pair_frequency(match_step(lv, sys, lv.field + delta * n), lower, upper);
    const double fm = pair_frequency(match_step(lv, sys, lv.field - delta * n), lower, upper);
    return (fp - fm) / (2.0 * delta);
}

}  // namespace

int SpinSystem::dimension() const { return (twice(S) + 1) * (twice(I) + 1); }

void SpinSystem::validate() const {
    auto half_integer = [](double j) { return j >= 0.5 && std::abs(2.0 * j - std::round(2.0 * j)) < 1e-12; };
    if (!std::isfinite(gamma_e) || !std::isfinite(gamma_n) || !std::isfinite(A))
        throw InvalidInput("SpinSystem: non-finite parameter");
    if (!(A > 0.0)) throw InvalidInput("SpinSystem: hyperfine constant A must be > 0");
    if (!(gamma_e > gamma_n && gamma_n >= 0.0))
        throw InvalidInput("SpinSystem: require gamma_e > gamma_n >= 0");
    if (!half_integer(S) || !half_integer(I))
        throw InvalidInput("SpinSystem: S and I must be positive multiples of 1/2");
}

std::string LevelLabel::to_string() const {
    std::ostringstream os;
    auto half = [&os](int twice_v) {
        if (twice_v % 2 == 0)
            os << twice_v / 2;
        else
            os << twice_v << "/2";
    };
    os << '|';
    half(twice_F);
    os << ',';
    half(twice_mF);
    os << '>';
    return os.str();
}

LevelLabel label(double F, double mF) { return {twice(F), twice(mF)}; }

int EnergyLevels::index_of(const LevelLabel& l) const {
    const auto it = std::find(labels.begin(), labels.end(), l);
    if (it == labels.end()) throw NotFound("no level labelled " + l.to_string());
    return static_cast<int>(it - labels.begin());
}

SpinOperators spin_operators(const SpinSystem& sys) {
    const auto s = angular_momentum(sys.S);
    const auto i = angular_momentum(sys.I);
    const HermitianMatrix es = HermitianMatrix::Identity(s[0].rows(), s[0].cols());
    const HermitianMatrix ei = HermitianMatrix::Identity(i[0].rows(), i[0].cols());
    SpinOperators out;
    for (int k = 0; k < 3; ++k) {
        out.S[k] = kron(s[k], ei);
        out.I[k] = kron(es, i[k]);
    }
    return out;
}

HermitianMatrix build_hamiltonian(const Field& b0, const SpinSystem& sys) {
    if (!b0.allFinite()) throw InvalidInput("build_hamiltonian: non-finite field component");
    sys.validate();
    const SpinOperators ops = spin_operators(sys);
    HermitianMatrix h = HermitianMatrix::Zero(sys.dimension(), sys.dimension());
    for (int k = 0; k < 3; ++k) {
        h += b0(k) * (sys.gamma_e * ops.S[k] - sys.gamma_n * ops.I[k]);
        h += sys.A * ops.S[k] * ops.I[k];
    }
    return h;
}

Eigenpairs diagonalize(const HermitianMatrix& h) {
    Eigen::SelfAdjointEigenSolver<HermitianMatrix> es(h);
    if (es.info() != Eigen::Success) throw NumericError("diagonalize: eigen solver did not converge");
    return {es.eigenvalues(), es.eigenvectors()};
}

EnergyLevels continue_levels(const EnergyLevels& from, const SpinSystem& sys, const Field& to,
                             double label_step) {
    if (!(label_step > 0.0)) throw InvalidInput("continue_levels: label_step must be > 0");
    const Field delta = to - from.field;
    const int steps = std::max(1, static_cast<int>(std::ceil(delta.norm() / label_step)));
    EnergyLevels cur = from;
    for (int k = 1; k <= steps; ++k) {
        const Field b = (k == steps) ? to : Field(from.field + delta * (static_cast<double>(k) / steps));
        cur = match_step(cur, sys, b);
    }
    return cur;
}

EnergyLevels eigensystem(const SpinSystem& sys, const Field& b0, double label_step) {
    if (!b0.allFinite()) throw InvalidInput("eigensystem: non-finite field component");
    // Degenerate zero-field multiplets are split along the axis of b0.
    const EnergyLevels zero = label_by_projection(sys, Field::Zero(), field_direction(b0));
    if (b0.norm() == 0.0) return zero;
    return continue_levels(zero, sys, b0, label_step);
}

double sx_element(const EnergyLevels& levels, const SpinSystem& sys, int a, int b) {
    const SpinOperators ops = spin_operators(sys);
    const HermitianMatrix sperp = project(ops.S, transverse_direction(field_direction(levels.field)));
    return std::abs(levels.eigenvectors.col(a).dot(sperp * levels.eigenvectors.col(b)));
}

std::vector<Transition> transition_table(const EnergyLevels& levels, const SpinSystem& sys,
                                         double threshold) {
    const SpinOperators ops = spin_operators(sys);
    const HermitianMatrix sperp = project(ops.S, transverse_direction(field_direction(levels.field)));
    const HermitianMatrix m = levels.eigenvectors.adjoint() * sperp * levels.eigenvectors;

    std::vector<Transition> out;
    for (int i = 0; i < levels.size(); ++i) {
        for (int j = i + 1; j < levels.size(); ++j) {
            if (std::abs(levels.labels[i].twice_mF - levels.labels[j].twice_mF) != 2) continue;
            const double sx = std::abs(m(i, j));
            if (sx <= threshold) continue;
            Transition t;
            t.lower = levels.labels[i];
            t.upper = levels.labels[j];
            t.frequency = levels.eigenvalues(j) - levels.eigenvalues(i);
            t.sx_element = sx;
            t.dfdB = central_slope(levels, sys, t.lower, t.upper);
            out.push_back(t);
        }
    }
    return out;
}

double transition_frequency(const SpinSystem& sys, const LevelLabel& lower, const LevelLabel& upper,
                            const Field& b0) {
    return pair_frequency(eigensystem(sys, b0), lower, upper);
}

CrossingField find_crossing_field(const SpinSystem& sys, const LevelLabel& lower,
                                  const LevelLabel& upper, double target_frequency, double b_min,
                                  double b_max, const Eigen::Vector3d& direction) {
    if (!(b_max > b_min) || b_min < 0.0 || !std::isfinite(b_max))
        throw InvalidInput("find_crossing_field: require 0 <= b_min < b_max");
    if (!(direction.norm() > 0.0)) throw InvalidInput("find_crossing_field: zero direction");
    const Eigen::Vector3d n = direction.normalized();
    constexpr double tolerance_hz = 1e3;

    const int intervals = std::max(64, static_cast<int>(std::ceil((b_max - b_min) / 1e-4)));
    const double h = (b_max - b_min) / intervals;

    std::vector<EnergyLevels> grid;
    grid.reserve(intervals + 1);
    grid.push_back(b_min > 0.0 ? eigensystem(sys, b_min * n) : label_by_projection(sys, Field::Zero(), n));
    for (int k = 1; k <= intervals; ++k)
        grid.push_back(match_step(grid.back(), sys, (b_min + k * h) * n));

    std::vector<double> f(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k)
        f[k] = pair_frequency(grid[k], lower, upper) - target_frequency;

    bool increasing = true, decreasing = true;
    for (std::size_t k = 1; k < f.size(); ++k) {
        if (f[k] < f[k - 1]) increasing = false;
        if (f[k] > f[k - 1]) decreasing = false;
    }

    auto refine = [&](std::size_t k) -> CrossingField {
        const EnergyLevels& left = grid[k];
        if (std::abs(f[k]) < tolerance_hz) return {b_min + k * h, central_slope(left, sys, lower, upper)};
        auto residual = [&](double b) {
            return pair_frequency(match_step(left, sys, b * n), lower, upper) - target_frequency;
        };
        const double lo = b_min + k * h;
        const double hi = b_min + (k + 1) * h;
        auto done = [&](double a, double b) { return std::abs(b - a) < 1e-12; };
        std::uintmax_t iters = 200;
        const auto [a, b] = boost::math::tools::toms748_solve(residual, lo, hi, f[k], f[k + 1], done, iters);
        const double root = 0.5 * (a + b);
        if (std::abs(residual(root)) >= tolerance_hz)
            throw NumericError("find_crossing_field: root refinement did not reach 1 kHz");
        return {root, central_slope(match_step(left, sys, root * n), sys, lower, upper)};
    };

    std::vector<std::size_t> brackets;
    for (std::size_t k = 0; k + 1 < f.size(); ++k) {
        if (std::abs(f[k]) < tolerance_hz || (f[k] < 0.0) != (f[k + 1] < 0.0)) {
            if (!brackets.empty() && brackets.back() + 1 == k && std::abs(f[k]) < tolerance_hz) continue;
            brackets.push_back(k);
        }
    }
    if (brackets.empty() && std::abs(f.back()) < tolerance_hz)
        return {b_max, central_slope(grid.back(), sys, lower, upper)};
    if (brackets.empty())
        throw NotFound("find_crossing_field: " + lower.to_string() + "->" + upper.to_string() +
                       " does not reach the target frequency in range");

    if (!(increasing || decreasing)) {
        std::vector<double> roots;
        for (std::size_t k : brackets) roots.push_back(refine(k).field);
        throw Ambiguity("find_crossing_field: transition frequency is not monotonic in range", roots);
    }
    return refine(brackets.front());
}

double fit_hyperfine_constant(const SpinSystem& sys, const std::vector<CrossingTarget>& targets,
                              double target_frequency, double a_min, double a_max) {
    if (targets.empty()) throw InvalidInput("fit_hyperfine_constant: no targets");
    if (!(a_max > a_min && a_min > 0.0)) throw InvalidInput("fit_hyperfine_constant: bad A range");
    auto cost = [&](double a) {
        SpinSystem trial = sys;
        trial.A = a;
        double sum = 0.0;
        for (const auto& t : targets) {
            double b = 0.0;
            try {
                b = find_crossing_field(trial, t.lower, t.upper, target_frequency, 0.25 * t.field,
                                        2.0 * t.field)
                        .field;
            } catch (const NotFound&) {
                b = 10.0 * t.field;
            }
            sum += (b - t.field) * (b - t.field);
        }
        return sum;
    };
    std::uintmax_t iters = 100;
    const auto [best, value] = boost::math::tools::brent_find_minima(cost, a_min, a_max, 40, iters);
    (void)value;
    return best;
}

void write_transition_csv(std::ostream& os, const std::vector<Transition>& table) {
    os << "lowerF,lower_mF,upperF,upper_mF,freq_Hz,sx,dfdB_Hz_per_T\n";
    const auto old = os.precision(17);
    for (const auto& t : table) {
        os << t.lower.F() << ',' << t.lower.mF() << ',' << t.upper.F() << ',' << t.upper.mF() << ','
           << t.frequency << ',' << t.sx_element << ',' << t.dfdB << '\n';
    }
    os.precision(old);
}

}  // namespace esrsim
