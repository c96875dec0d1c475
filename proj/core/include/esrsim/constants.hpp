#pragma once

#include <numbers>

namespace esrsim::constants {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

// CODATA 2018
inline constexpr double hbar = 1.054571817e-34;        // J s
inline constexpr double planck = 6.62607015e-34;       // J s
inline constexpr double mu0 = 1.25663706212e-6;        // T m / A
inline constexpr double boltzmann = 1.380649e-23;      // J / K

inline constexpr double millitesla = 1e-3;
inline constexpr double microtesla = 1e-6;

}  // namespace esrsim::constants
