#include "spincavity/cavity_dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "spincavity/constants.hpp"
#include "spincavity/errors.hpp"

namespace spincavity {
namespace {

using Vec2 = Eigen::Matrix<double, 2, 1>;
using Vec3 = Eigen::Matrix<double, 3, 1>;
using Vec5 = Eigen::Matrix<double, 5, 1>;

constexpr std::complex<double> kImag{0.0, 1.0};

std::vector<double> uniform_grid(double a, double b, int n) {
  std::vector<double> grid(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    grid[static_cast<std::size_t>(i)] = a + (b - a) * i / (n - 1);
  grid.back() = b;
  return grid;
}

void reserve_columns(Trajectory& traj, std::size_t n) {
  traj.tau.reserve(n);
  traj.Z.reserve(n);
  traj.re_R.reserve(n);
  traj.im_R.reserve(n);
  traj.re_h.reserve(n);
  traj.im_h.reserve(n);
  traj.intensity.reserve(n);
}

void push_sample(Trajectory& traj, double tau, std::complex<double> h,
                 std::complex<double> R, double Z) {
  traj.tau.push_back(tau);
  traj.Z.push_back(Z);
  traj.re_R.push_back(R.real());
  traj.im_R.push_back(R.imag());
  traj.re_h.push_back(h.real());
  traj.im_h.push_back(h.imag());
  traj.intensity.push_back(0.5 * std::norm(h));
}

void require_positive(double value, const char* name) {
  if (!(value > 0.0) || !std::isfinite(value))
    throw ValidationError(std::string(name) + " must be positive and finite");
}

}  // namespace

double DynamicsConfig::initial_Z() const {
  return R0.has_value() ? Z0 : Z0 * std::cos(theta0);
}

std::complex<double> DynamicsConfig::initial_R() const {
  if (R0.has_value()) return *R0;
  return {Z0 * std::sin(theta0) / std::numbers::sqrt2, 0.0};
}

void DynamicsConfig::validate() const {
  if (!(gamma >= 0.0) || !std::isfinite(gamma))
    throw ValidationError("gamma must be >= 0");
  if (!(kappa >= 0.0) || !std::isfinite(kappa))
    throw ValidationError("kappa must be >= 0");
  if (!std::isfinite(v) || !std::isfinite(psi) || !std::isfinite(beta))
    throw ValidationError("v, psi and beta must be finite");
  if (!std::isfinite(Z0) || !std::isfinite(h0.real()) || !std::isfinite(h0.imag()))
    throw ValidationError("Z0 and h0 must be finite");
  if (!R0.has_value() && (!(theta0 >= 0.0) || !(theta0 <= std::numbers::pi)))
    throw ValidationError("theta0 must lie in [0, pi]");
  const double z = initial_Z();
  const double norm = z * z + 2.0 * std::norm(initial_R());
  if (!(norm <= 1.0 + 64.0 * std::numeric_limits<double>::epsilon()))
    throw ValidationError("initial state outside the Bloch ball: Z^2 + 2|R|^2 > 1");
  if (!(tau_end > tau_start) || !std::isfinite(tau_start) || !std::isfinite(tau_end))
    throw ValidationError("tau span must be finite with tau_end > tau_start");
  if (!(rel_tol > 0.0) || !(abs_tol > 0.0))
    throw ValidationError("tolerances must be positive");
  if (samples < 2) throw ValidationError("samples must be >= 2");
}

double PhysicalContext::mu_tilde() const {
  return g_factor * constants::bohr_magneton;
}

void PhysicalContext::validate() const {
  require_positive(N0_eta, "N0_eta");
  require_positive(Omega, "Omega");
  require_positive(T2, "T2");
  require_positive(Tc, "Tc");
  require_positive(B0_dot, "B0_dot");
  require_positive(volume, "volume");
  require_positive(g_factor, "g_factor");
  if (!(eta > 0.0) || !(eta <= 1.0))
    throw ValidationError("eta must lie in (0, 1]");
  if (!(s_magnitude >= 0.0) || !std::isfinite(s_magnitude))
    throw ValidationError("s_magnitude must be >= 0 and finite");
  if (m == m_prime) throw ValidationError("pair labels m and m' must differ");
}

DimensionlessParams derive_dimensionless(const PhysicalContext& ctx) {
  ctx.validate();
  if (ctx.s_magnitude == 0.0)
    throw ValidationError(
        "|s| = 0: transition is radiatively dark, T0 is infinite");
  const double mu = ctx.mu_tilde();
  const double denom = ctx.N0_eta * ctx.Omega * constants::mu0 * mu * mu *
                       ctx.s_magnitude * ctx.s_magnitude;
  DimensionlessParams out;
  out.T0 = std::sqrt(2.0 * constants::hbar / denom);
  out.config.gamma = out.T0 / ctx.T2;
  out.config.kappa = out.T0 / ctx.Tc;
  out.config.v = out.T0 * out.T0 * mu * std::abs(ctx.m - ctx.m_prime) *
                 ctx.B0_dot / constants::hbar;
  return out;
}

Trajectory integrate_bloch_cavity(const DynamicsConfig& cfg) {
  cfg.validate();
  const std::vector<double> grid =
      uniform_grid(cfg.tau_start, cfg.tau_end, cfg.samples);

  Trajectory traj;
  traj.config = cfg;
  reserve_columns(traj, grid.size());

  const std::complex<double> em = std::exp(-kImag * cfg.psi);  // e^{-i psi}
  const std::complex<double> ep = std::conj(em);

  auto rhs = [&cfg, em, ep](double tau, const Vec5& y, Vec5& dy) {
    const std::complex<double> h(y[0], y[1]);
    const std::complex<double> R(y[2], y[3]);
    const double Z = y[4];
    const std::complex<double> Rem = R * em;
    const std::complex<double> b = h + cfg.beta * Rem;
    const std::complex<double> dh = -0.5 * cfg.kappa * h + kImag * Rem;
    const std::complex<double> dR =
        -kImag * (cfg.v * tau) * R - kImag * b * ep * Z - cfg.gamma * R;
    dy[0] = dh.real();
    dy[1] = dh.imag();
    dy[2] = dR.real();
    dy[3] = dR.imag();
    dy[4] = 2.0 * std::imag(std::conj(b) * Rem);
  };
  auto sink = [&traj](double tau, const Vec5& y) {
    push_sample(traj, tau, {y[0], y[1]}, {y[2], y[3]}, y[4]);
  };

  Vec5 y0;
  const std::complex<double> r0 = cfg.initial_R();
  y0 << cfg.h0.real(), cfg.h0.imag(), r0.real(), r0.imag(), cfg.initial_Z();

  OdeOptions opts;
  opts.rel_tol = cfg.rel_tol;
  opts.abs_tol = cfg.abs_tol;
  try {
    traj.stats = integrate_dopri5(rhs, y0, cfg.tau_start, cfg.tau_end, grid,
                                  sink, opts);
  } catch (const StiffnessError& err) {
    throw StiffnessError(std::string(err.what()) +
                         "; damping dominates the coherent dynamics, "
                         "integrate_rate_equations handles this regime");
  }
  return traj;
}

Trajectory integrate_rate_equations(const DynamicsConfig& cfg) {
  cfg.validate();
  if (cfg.gamma == 0.0)
    throw ValidationError(
        "rate equations need gamma > 0 (adiabatic factor diverges at tau = 0)");
  const std::vector<double> grid =
      uniform_grid(cfg.tau_start, cfg.tau_end, cfg.samples);

  Trajectory traj;
  traj.config = cfg;
  reserve_columns(traj, grid.size());

  const std::complex<double> ep = std::exp(kImag * cfg.psi);  // e^{i psi}

  auto rhs = [&cfg](double tau, const Vec3& y, Vec3& dy) {
    const std::complex<double> b(y[0], y[1]);
    const double Z = y[2];
    const double denom =
        cfg.gamma * cfg.gamma + cfg.v * cfg.v * tau * tau;
    const std::complex<double> db =
        -0.5 * cfg.kappa * b +
        b * Z * std::complex<double>(cfg.gamma, -cfg.v * tau) / denom;
    dy[0] = db.real();
    dy[1] = db.imag();
    dy[2] = -Z * std::norm(b) * 2.0 * cfg.gamma / denom;
  };
  auto sink = [&traj, &cfg, ep](double tau, const Vec3& y) {
    const std::complex<double> b(y[0], y[1]);
    const double Z = y[2];
    const std::complex<double> r_adiabatic =
        -kImag * b * ep * Z / std::complex<double>(cfg.gamma, cfg.v * tau);
    push_sample(traj, tau, b, r_adiabatic, Z);
  };

  Vec3 y0;
  y0 << cfg.h0.real(), cfg.h0.imag(), cfg.Z0;

  OdeOptions opts;
  opts.rel_tol = cfg.rel_tol;
  opts.abs_tol = cfg.abs_tol;
  traj.stats =
      integrate_dopri5(rhs, y0, cfg.tau_start, cfg.tau_end, grid, sink, opts);
  return traj;
}

PendulumSolution pendulum_solution(double kappa, double Z0, double theta0,
                                   const std::vector<double>& tau_grid,
                                   const PendulumOptions& opts) {
  require_positive(kappa, "kappa");
  require_positive(Z0, "Z0");
  if (!(theta0 >= 0.0) || !(theta0 < std::numbers::pi))
    throw ValidationError("theta0 must lie in [0, pi)");
  if (tau_grid.size() < 2)
    throw ValidationError("tau_grid needs at least two points");
  for (std::size_t i = 1; i < tau_grid.size(); ++i)
    if (!(tau_grid[i] > tau_grid[i - 1]))
      throw ValidationError("tau_grid must be strictly increasing");

  PendulumSolution sol;
  sol.tau_r = kappa / (2.0 * Z0);
  sol.degenerate = theta0 == 0.0;
  sol.tau_delay = sol.degenerate
                      ? std::numeric_limits<double>::infinity()
                      : sol.tau_r * std::log(2.0 / theta0);
  sol.peak_b2 = 1.0 / (2.0 * sol.tau_r * sol.tau_r);
  sol.overdamped =
      !sol.degenerate && !opts.force_numeric && kappa * sol.tau_r >= opts.overdamped_threshold;

  Trajectory& traj = sol.trajectory;
  traj.config.kappa = kappa;
  traj.config.Z0 = Z0;
  traj.config.theta0 = theta0;
  traj.config.tau_start = tau_grid.front();
  traj.config.tau_end = tau_grid.back();
  traj.config.samples = static_cast<int>(tau_grid.size());
  traj.config.rel_tol = opts.rel_tol;
  traj.config.abs_tol = opts.abs_tol;
  reserve_columns(traj, tau_grid.size());

  const double tau0 = tau_grid.front();
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  auto emit = [&](double tau, double theta, double theta_dot) {
    push_sample(traj, tau, {theta_dot * inv_sqrt2, 0.0},
                {Z0 * std::sin(theta) * inv_sqrt2, 0.0}, Z0 * std::cos(theta));
  };

  if (sol.degenerate) {
    for (double tau : tau_grid) emit(tau, 0.0, 0.0);
    return sol;
  }

  if (sol.overdamped) {
    // theta' = sin(theta)/tau_r integrates to
    // theta = 2*atan(tan(theta0/2) * e^{(tau-tau0)/tau_r}).
    const double u0 = std::tan(0.5 * theta0);
    for (double tau : tau_grid) {
      const double x = std::min((tau - tau0) / sol.tau_r, 700.0);
      const double theta = 2.0 * std::atan(u0 * std::exp(x));
      emit(tau, theta, std::sin(theta) / sol.tau_r);
    }
    return sol;
  }

  auto rhs = [kappa, Z0](double, const Vec2& y, Vec2& dy) {
    dy[0] = y[1];
    dy[1] = -0.5 * kappa * y[1] + Z0 * std::sin(y[0]);
  };
  auto sink = [&emit](double tau, const Vec2& y) { emit(tau, y[0], y[1]); };
  Vec2 y0;
  y0 << theta0, 0.0;
  OdeOptions ode_opts;
  ode_opts.rel_tol = opts.rel_tol;
  ode_opts.abs_tol = opts.abs_tol;
  traj.stats = integrate_dopri5(rhs, y0, tau_grid.front(), tau_grid.back(),
                                tau_grid, sink, ode_opts);
  return sol;
}

}  // namespace spincavity
