#pragma once

#include <complex>
#include <numbers>
#include <optional>
#include <vector>

#include "spincavity/ode.hpp"

namespace spincavity {

// Dimensionless controls of the cavity-coupled two-level ensemble. Time is
// measured in units of T0 (tau = t/T0) and the detuning sweeps linearly
// through resonance at tau = 0: T0*(omega(tau) - Omega) = v*tau.
struct DynamicsConfig {
  double gamma = 0.0;  // dephasing rate T0/T2
  double kappa = 0.0;  // cavity decay rate T0/Tc
  double v = 0.0;      // dimensionless sweep rate of the detuning
  double psi = std::numbers::pi / 2;  // phase of the transition element s
  // Local-field correction b = h + beta*R*exp(-i*psi) inside the sample. The
  // physical coefficient 2*beta_L/(eta*T0*Omega) is of order 1e-3 for the
  // experimental context, so the default keeps b = h.
  double beta = 0.0;
  double Z0 = 1.0;  // initial inversion (Bloch-vector length when theta0 seeds)
  std::optional<std::complex<double>> R0;  // initial coherence; theta0 seeds it when unset
  std::complex<double> h0{0.0, 0.0};       // initial cavity field
  // Initial tipping angle of the Bloch vector away from the inverted pole.
  // When R0 is unset the run starts at Z(0) = Z0*cos(theta0),
  // R(0) = Z0*sin(theta0)/sqrt(2) (for small theta0 the familiar
  // R0 = Z0*theta0/sqrt(2) seed), which keeps Z^2 + 2|R|^2 = Z0^2 exactly.
  double theta0 = 1e-4;
  double tau_start = -50.0;
  double tau_end = 150.0;
  double rel_tol = 1e-9;
  double abs_tol = 1e-12;
  int samples = 2001;  // uniform output grid, endpoints included

  double initial_Z() const;
  std::complex<double> initial_R() const;
  // gamma, kappa >= 0; Z(0)^2 + 2|R(0)|^2 <= 1; tau_end > tau_start;
  // positive tolerances; samples >= 2. Violations throw ValidationError.
  void validate() const;
};

// Physical inputs from which the dimensionless parameters derive.
struct PhysicalContext {
  double N0_eta = 0.0;  // eta*N0: filling-factor-weighted density of active molecules, m^-3
  double eta = 1.0;     // filling factor alone (sample/cavity-mode overlap ~ l/L)
  double Omega = 0.0;   // cavity angular frequency, rad/s
  double s_magnitude = 0.0;  // |s| of the active transition
  double T2 = 0.0;      // dephasing time, s
  double Tc = 0.0;      // cavity photon lifetime, s
  double B0_dot = 0.0;  // field sweep rate, T/s
  int m = 0;
  int m_prime = 0;      // pair labels; only |m - m'| enters the sweep rate
  double volume = 0.0;  // sample volume, m^3 (energy conversion)
  double g_factor = 2.0;

  double mu_tilde() const;  // g * mu_B
  void validate() const;    // positive scales, 0 < eta <= 1, m != m_prime
};

struct DimensionlessParams {
  DynamicsConfig config;  // gamma, kappa, v filled in; the rest at defaults
  double T0 = 0.0;        // cooperative emission time scale, seconds
};

// T0 = sqrt(2*hbar / (eta*N0 * Omega * mu0 * mu_tilde^2 * |s|^2)), then
// gamma = T0/T2, kappa = T0/Tc, v = T0^2 * mu_tilde * |m - m'| * B0_dot / hbar.
// |s| = 0 leaves T0 infinite (radiatively dark transition) -> ValidationError.
DimensionlessParams derive_dimensionless(const PhysicalContext& ctx);

struct Trajectory {
  std::vector<double> tau;  // strictly increasing sample grid
  std::vector<double> Z;
  std::vector<double> re_R, im_R;
  std::vector<double> re_h, im_h;
  std::vector<double> intensity;  // |h|^2 / 2
  DynamicsConfig config;          // resolved configuration echo
  IntegratorStats stats;

  std::size_t size() const { return tau.size(); }
};

// Coherent regime: dh/dtau = -(kappa/2)*h + i*R*e^{-i psi},
//                  dZ/dtau = 2*Im(conj(b)*R*e^{-i psi}),
//                  dR/dtau = -i*v*tau*R - i*b*e^{i psi}*Z - gamma*R,
// with b = h + beta*R*e^{-i psi}. A step underflow is rethrown as
// StiffnessError pointing at integrate_rate_equations.
Trajectory integrate_bloch_cavity(const DynamicsConfig& cfg);

// Strong-dephasing limit: R follows b adiabatically and drops out,
//   dZ/dtau = -Z*|b|^2 * 2*gamma/(gamma^2 + v^2 tau^2),
//   db/dtau = -(kappa/2)*b + b*Z/(gamma + i*v*tau),
// seeded with b(tau_start) = h0 (b = 0 is a fixed point, so a run needs a
// nonzero field seed). The R columns hold the eliminated coherence
// -i*b*e^{i psi}*Z/(gamma + i*v*tau); the h columns equal b (the local-field
// term has no meaning once R is eliminated). gamma = 0 -> ValidationError.
Trajectory integrate_rate_equations(const DynamicsConfig& cfg);

struct PendulumOptions {
  bool force_numeric = false;  // integrate even deep in the overdamped regime
  double overdamped_threshold = 50.0;  // closed form when kappa*tau_r exceeds this
  double rel_tol = 1e-10;
  double abs_tol = 1e-13;
};

struct PendulumSolution {
  Trajectory trajectory;
  double tau_r = 0.0;      // kappa / (2*Z0)
  double tau_delay = 0.0;  // tau_r * ln(2/theta0); +inf when degenerate
  double peak_b2 = 0.0;    // overdamped peak |b|^2 = 1/(2*tau_r^2)
  bool overdamped = false; // sech^2 closed form used instead of integration
  bool degenerate = false; // theta0 = 0: pendulum parked at the unstable apex
};

// Damped-pendulum reduction of the gamma = 0, v = 0 system at psi = pi/2:
//   theta'' + (kappa/2)*theta' - Z0*sin(theta) = 0,
// theta measured from the inverted position, theta(grid front) = theta0,
// theta'(grid front) = 0. Columns follow Z = Z0*cos(theta),
// R = (Z0/sqrt(2))*sin(theta), h = theta'/sqrt(2), so |b|^2 = theta'^2/2 and
// the trajectory intensity is |b|^2/2. Deep in the bad-cavity regime
// (kappa*tau_r >= threshold) the closed form
//   |b|^2 = (1/(2*tau_r^2)) * sech^2((tau - tau_d)/tau_r)
// is returned instead, with tau_d = tau_r*ln(2/theta0) past the grid front.
PendulumSolution pendulum_solution(double kappa, double Z0, double theta0,
                                   const std::vector<double>& tau_grid,
                                   const PendulumOptions& opts = {});

}  // namespace spincavity
