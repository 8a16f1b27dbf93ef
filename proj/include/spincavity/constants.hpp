#pragma once

// CODATA 2018 values, SI units throughout.
namespace spincavity::constants {

inline constexpr double k_boltzmann = 1.380649e-23;       // J/K (exact)
inline constexpr double bohr_magneton = 9.2740100783e-24; // J/T
inline constexpr double hbar = 1.054571817e-34;           // J s
inline constexpr double mu0 = 1.25663706212e-6;           // N/A^2

} // namespace spincavity::constants
