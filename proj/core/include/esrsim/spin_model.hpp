#pragma once

// Electro-nuclear spin Hamiltonian of a donor with isotropic hyperfine
// coupling, its eigen-decomposition with low-field (F, m_F) labels, and the
// ESR transition table derived from it. All energies are in frequency units
// (Hz, i.e. E/h).

#include <Eigen/Dense>

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

namespace esrsim {

using Field = Eigen::Vector3d;  // Tesla, lab frame
using HermitianMatrix = Eigen::MatrixXcd;

struct SpinSystem {
    double gamma_e = 28e9;     // Hz/T
    double gamma_n = 7e6;      // Hz/T
    double A = 1.47395e9;      // Hz, fitted to the 7.24 GHz crossing fields
    double S = 0.5;
    double I = 4.5;

    int dimension() const;
    /// Throws InvalidInput when a field is out of range.
    void validate() const;
};

/// Low-field quantum numbers; F and m_F are stored doubled so half-integers stay exact.
struct LevelLabel {
    int twice_F = 0;
    int twice_mF = 0;

    double F() const { return twice_F / 2.0; }
    double mF() const { return twice_mF / 2.0; }
    bool operator==(const LevelLabel&) const = default;
    std::string to_string() const;
};

LevelLabel label(double F, double mF);

struct EnergyLevels {
    Field field = Field::Zero();
    Eigen::VectorXd eigenvalues;     // ascending, Hz
    Eigen::MatrixXcd eigenvectors;   // columns
    std::vector<LevelLabel> labels;

    int size() const { return static_cast<int>(eigenvalues.size()); }
    /// Index of the state carrying `l`; throws NotFound.
    int index_of(const LevelLabel& l) const;
};

struct Transition {
    LevelLabel lower;
    LevelLabel upper;
    double frequency = 0.0;   // Hz
    double sx_element = 0.0;  // |<lower|S_x|upper>|, dimensionless
    double dfdB = 0.0;        // Hz/T along the field direction
};

struct SpinOperators {
    std::array<HermitianMatrix, 3> S;  // S_x, S_y, S_z on the joint space
    std::array<HermitianMatrix, 3> I;
};

SpinOperators spin_operators(const SpinSystem& sys);

/// H/h = B.(gamma_e S - gamma_n I) + A S.I  (Hz).
HermitianMatrix build_hamiltonian(const Field& b0, const SpinSystem& sys);

struct Eigenpairs {
    Eigen::VectorXd values;
    Eigen::MatrixXcd vectors;
};

/// Plain Hermitian diagonalization, eigenvalues ascending.
Eigenpairs diagonalize(const HermitianMatrix& h);

/// Eigen-decomposition at `b0` with labels continued adiabatically from B = 0
/// in steps of at most `label_step` along the field direction.
EnergyLevels eigensystem(const SpinSystem& sys, const Field& b0, double label_step = 1e-4);

/// Relabel by maximal overlap: advance `from` to field `to` in steps of at most `label_step`.
EnergyLevels continue_levels(const EnergyLevels& from, const SpinSystem& sys, const Field& to,
                             double label_step = 1e-4);

/// |<a|S_perp|b>| with S_perp the electron spin component transverse to the
/// static field (lab x when the field lies along z).
double sx_element(const EnergyLevels& levels, const SpinSystem& sys, int a, int b);

std::vector<Transition> transition_table(const EnergyLevels& levels, const SpinSystem& sys,
                                         double threshold = 0.01);

/// Transition frequency (upper minus lower energy) at field b0, labels continued from B = 0.
double transition_frequency(const SpinSystem& sys, const LevelLabel& lower,
                            const LevelLabel& upper, const Field& b0);

struct CrossingField {
    double field = 0.0;  // T, magnitude along the direction
    double dfdB = 0.0;   // Hz/T
};

/// Field magnitude along `direction` in [b_min, b_max] where the transition
/// frequency equals `target_frequency` (Hz). Throws NotFound when the range
/// holds no root and Ambiguity when f(B) is not monotonic over it.
CrossingField find_crossing_field(const SpinSystem& sys, const LevelLabel& lower,
                                  const LevelLabel& upper, double target_frequency,
                                  double b_min, double b_max,
                                  const Eigen::Vector3d& direction = Eigen::Vector3d::UnitZ());

struct CrossingTarget {
    LevelLabel lower;
    LevelLabel upper;
    double field = 0.0;  // T
};

/// Least-squares estimate of the hyperfine constant A from measured crossing
/// fields at a common resonator frequency. Searches A in [a_min, a_max].
double fit_hyperfine_constant(const SpinSystem& sys, const std::vector<CrossingTarget>& targets,
                              double target_frequency, double a_min, double a_max);

void write_transition_csv(std::ostream& os, const std::vector<Transition>& table);

}  // namespace esrsim
