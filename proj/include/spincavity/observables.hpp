#pragma once

#include <vector>

#include "spincavity/cavity_dynamics.hpp"
#include "spincavity/crossings.hpp"
#include "spincavity/reduction.hpp"

namespace spincavity {

// Differential magnetization curve of one sweep, on the dimensionless field
// axis x = v*tau. Emission (falling inversion on an upward sweep) appears as
// a positive peak.
struct PeakReport {
  double v = 0.0;
  double peak_abscissa = 0.0;  // x at the global extremum of |curve|
  double peak_height = 0.0;    // signed curve value at that abscissa
  std::vector<double> field;   // x = v*tau samples
  std::vector<double> curve;   // -dZ/dx
  int sign_changes = 0;        // sign flips above a 1e-6*max noise floor
};

// Centered differences of -Z on a uniform resampling of the trajectory,
// mapped to the field axis x = v*tau; one-sided stencils at the ends. The
// peak is the global extremum of |curve| with its signed value. Requires a
// trajectory whose span contains the resonance tau = 0 in its interior and
// v != 0 (otherwise the field axis degenerates); violations throw
// ValidationError.
PeakReport dM_dB0_curve(const Trajectory& traj, double v);

// Densities and cavity scales needed to turn a transition catalog into
// cooperative time scales. total_density is the molecule density available
// to populate the radiating levels; per pair the active density is scaled by
// the Boltzmann factor of that pair's radiating level.
struct T0ScanContext {
  double total_density = 0.0;  // m^-3
  double eta = 1.0;            // filling factor
  double Omega = 0.0;          // cavity angular frequency, rad/s
  double g_factor = 2.0;

  void validate() const;  // positive scales, 0 < eta <= 1
};

struct T0ScanRow {
  double temperature = 0.0;  // kelvin
  int m = 0;                 // winning pair: shortest T0 at this temperature
  int m_prime = 0;
  double T0_min = 0.0;       // seconds
};

// Per temperature, finds the catalog pair with the shortest cooperative time
//   T0 = sqrt(2*hbar / (eta * N0 * Omega * mu0 * mu_tilde^2 * |s|^2)),
//   N0 = total_density * exp(-(E_pair - E_ref) / (kB * T)),
// where E_pair is the dressed energy of the pair's radiating level m at the
// given field and E_ref the lowest such energy in the catalog (the
// metastable-well ground state for the usual m < 0 catalogs, so its pair
// carries the full density). Each pair is dressed once at B0; pairs whose
// block reduction fails or whose coupling vanishes are skipped. Throws
// ValidationError when inputs are out of range or no usable pair remains.
std::vector<T0ScanRow> t0_scan(const SpinSystemParams& params, double B0,
                               const std::vector<double>& T_grid,
                               const std::vector<CrossingRecord>& catalog,
                               const T0ScanContext& ctx);

// Energy leaked through the cavity over the run:
//   E = hbar*Omega * N0 * V * kappa * integral of I dtau,
// i.e. photons per active molecule released to the outside, times the number
// of active molecules (N0 = N0_eta / eta), times the photon energy. Uses the
// trapezoid rule on the trajectory samples and the trajectory's own kappa.
// Throws ValidationError on an unusable context or a trajectory with fewer
// than two samples.
double emitted_energy(const Trajectory& traj, const PhysicalContext& ctx);

}  // namespace spincavity
