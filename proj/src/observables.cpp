#include "spincavity/observables.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "spincavity/constants.hpp"
#include "spincavity/errors.hpp"

namespace spincavity {
namespace {

void require_positive(double value, const char* name) {
  if (!(value > 0.0) || !std::isfinite(value))
    throw ValidationError(std::string(name) + " must be positive and finite");
}

// Linear interpolation of (xs, ys) at x; xs strictly increasing.
double interp(const std::vector<double>& xs, const std::vector<double>& ys,
              double x) {
  if (x <= xs.front()) return ys.front();
  if (x >= xs.back()) return ys.back();
  const auto it = std::upper_bound(xs.begin(), xs.end(), x);
  const std::size_t j = static_cast<std::size_t>(it - xs.begin());
  const double t = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
  return ys[j - 1] + t * (ys[j] - ys[j - 1]);
}

}  // namespace

PeakReport dM_dB0_curve(const Trajectory& traj, double v) {
  if (!(v != 0.0) || !std::isfinite(v))
    throw ValidationError("v = 0 leaves the dM/dB0 field axis undefined");
  const std::size_t n = traj.size();
  if (n < 5) throw ValidationError("trajectory too short for dM/dB0");
  if (!(traj.tau.front() < 0.0) || !(traj.tau.back() > 0.0))
    throw ValidationError(
        "trajectory must contain the resonance tau = 0 in its interior");

  // Uniform resampling guards against non-uniform input grids; on the
  // integrators' own grids this reproduces the samples exactly.
  const double tau0 = traj.tau.front(), tau1 = traj.tau.back();
  const double dtau = (tau1 - tau0) / static_cast<double>(n - 1);
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i)
    z[i] = interp(traj.tau, traj.Z, tau0 + dtau * static_cast<double>(i));

  PeakReport report;
  report.v = v;
  report.field.resize(n);
  report.curve.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    report.field[i] = v * (tau0 + dtau * static_cast<double>(i));
  const double dx = v * dtau;  // signed; centered stencil handles either sign
  for (std::size_t i = 1; i + 1 < n; ++i)
    report.curve[i] = -(z[i + 1] - z[i - 1]) / (2.0 * dx);
  report.curve.front() = -(z[1] - z[0]) / dx;
  report.curve.back() = -(z[n - 1] - z[n - 2]) / dx;

  std::size_t peak = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double mag = std::abs(report.curve[i]);
    if (mag > best) {
      best = mag;
      peak = i;
    }
  }
  report.peak_abscissa = report.field[peak];
  report.peak_height = report.curve[peak];

  const double floor = 1e-6 * best;
  int last_sign = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(report.curve[i]) <= floor) continue;
    const int sign = report.curve[i] > 0.0 ? 1 : -1;
    if (last_sign != 0 && sign != last_sign) ++report.sign_changes;
    last_sign = sign;
  }
  return report;
}

void T0ScanContext::validate() const {
  require_positive(total_density, "total_density");
  require_positive(Omega, "Omega");
  require_positive(g_factor, "g_factor");
  if (!(eta > 0.0) || !(eta <= 1.0))
    throw ValidationError("eta must lie in (0, 1]");
}

std::vector<T0ScanRow> t0_scan(const SpinSystemParams& params, double B0,
                               const std::vector<double>& T_grid,
                               const std::vector<CrossingRecord>& catalog,
                               const T0ScanContext& ctx) {
  params.validate();
  ctx.validate();
  if (!std::isfinite(B0)) throw ValidationError("B0 must be finite");
  if (T_grid.empty()) throw ValidationError("temperature grid is empty");
  for (double T : T_grid) require_positive(T, "temperature");
  if (catalog.empty()) throw ValidationError("transition catalog is empty");

  const SpinOperators ops = build_spin_operators(params.spin);
  const Eigen::MatrixXd H = build_hamiltonian(params, B0, ops);

  // Temperature-independent part: dress each pair once at B0.
  struct PairScale {
    int m, m_prime;
    double s2;        // |s|^2
    double energy_m;  // dressed energy of the radiating level, joules
  };
  std::vector<PairScale> usable;
  for (const CrossingRecord& rec : catalog) {
    Eigen::MatrixXd u;
    try {
      u = vanvleck_unitary(H, rec.m, rec.m_prime);
    } catch (const ReductionError&) {
      continue;  // pair not two-level at this field; it cannot compete
    }
    const Couplings c = effective_coupling(ops, u, rec.m, rec.m_prime);
    const double s2 = std::norm(c.s);
    if (!(s2 > 0.0)) continue;  // radiatively dark
    const int im = static_cast<int>(std::lround(rec.m + params.spin));
    const Eigen::VectorXd row = u.row(im);
    const double energy = row.dot(H * row);  // (U H U^T)_{mm}
    usable.push_back({rec.m, rec.m_prime, s2, energy});
  }
  if (usable.empty())
    throw ValidationError(
        "no usable transition: every catalog pair is dark or failed to dress");

  double e_ref = usable.front().energy_m;
  for (const PairScale& p : usable) e_ref = std::min(e_ref, p.energy_m);

  const double mu_tilde = ctx.g_factor * constants::bohr_magneton;
  std::vector<T0ScanRow> rows;
  rows.reserve(T_grid.size());
  for (double T : T_grid) {
    T0ScanRow row;
    row.temperature = T;
    row.T0_min = std::numeric_limits<double>::infinity();
    for (const PairScale& p : usable) {
      const double population =
          std::exp(-(p.energy_m - e_ref) / (constants::k_boltzmann * T));
      const double density = ctx.total_density * population;
      const double t0 = std::sqrt(
          2.0 * constants::hbar /
          (ctx.eta * density * ctx.Omega * constants::mu0 * mu_tilde *
           mu_tilde * p.s2));
      if (t0 < row.T0_min) {
        row.T0_min = t0;
        row.m = p.m;
        row.m_prime = p.m_prime;
      }
    }
    rows.push_back(row);
  }
  return rows;
}

double emitted_energy(const Trajectory& traj, const PhysicalContext& ctx) {
  ctx.validate();
  if (traj.size() < 2)
    throw ValidationError("trajectory too short for an energy integral");
  double leaked = 0.0;  // kappa * integral of I dtau
  for (std::size_t i = 1; i < traj.size(); ++i)
    leaked += 0.5 * (traj.intensity[i] + traj.intensity[i - 1]) *
              (traj.tau[i] - traj.tau[i - 1]);
  leaked *= traj.config.kappa;
  const double active_molecules = (ctx.N0_eta / ctx.eta) * ctx.volume;
  return constants::hbar * ctx.Omega * active_molecules * leaked;
}

}  // namespace spincavity
