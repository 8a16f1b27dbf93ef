#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "doctest.h"
#include "spincavity/cavity_dynamics.hpp"
#include "spincavity/errors.hpp"
#include "spincavity/ode.hpp"

using namespace spincavity;

namespace {

using Vec1 = Eigen::Matrix<double, 1, 1>;
using Vec2 = Eigen::Matrix<double, 2, 1>;

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> g(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = a + (b - a) * i / (n - 1);
  g.back() = b;
  return g;
}

// Max deviation of the Bloch-vector length Z^2 + 2|R|^2 from its initial value.
double conservation_defect(const Trajectory& t) {
  const double i0 = t.Z.front() * t.Z.front() +
                    2.0 * (t.re_R.front() * t.re_R.front() +
                           t.im_R.front() * t.im_R.front());
  double worst = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double inv = t.Z[i] * t.Z[i] +
                       2.0 * (t.re_R[i] * t.re_R[i] + t.im_R[i] * t.im_R[i]);
    worst = std::max(worst, std::abs(inv - i0));
  }
  return worst;
}

struct Peak {
  double tau = 0.0;
  double intensity = 0.0;
};

Peak peak_of(const Trajectory& t) {
  Peak p{t.tau.front(), t.intensity.front()};
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t.intensity[i] > p.intensity) p = {t.tau[i], t.intensity[i]};
  return p;
}

// Local maxima of the intensity above a fraction of its global peak.
int pulse_count(const Trajectory& t, double frac) {
  double peak = 0.0;
  for (double v : t.intensity) peak = std::max(peak, v);
  int count = 0;
  for (std::size_t i = 1; i + 1 < t.size(); ++i)
    if (t.intensity[i] > t.intensity[i - 1] &&
        t.intensity[i] >= t.intensity[i + 1] && t.intensity[i] > frac * peak)
      ++count;
  return count;
}

}  // namespace

TEST_CASE("integrate_dopri5: exponential decay and tolerance response") {
  auto rhs = [](double, const Vec1& y, Vec1& dy) { dy[0] = -y[0]; };
  const std::vector<double> grid = linspace(0.0, 10.0, 21);

  auto max_error = [&](double rel, double abs) {
    Vec1 y0;
    y0 << 1.0;
    OdeOptions opts;
    opts.rel_tol = rel;
    opts.abs_tol = abs;
    double worst = 0.0;
    integrate_dopri5(
        rhs, y0, 0.0, 10.0, grid,
        [&](double t, const Vec1& y) {
          worst = std::max(worst, std::abs(y[0] - std::exp(-t)));
        },
        opts);
    return worst;
  };

  const double loose = max_error(1e-6, 1e-9);
  const double tight = max_error(1e-9, 1e-12);
  CHECK(loose < 1e-5);
  CHECK(tight < 1e-8);
  CHECK(tight < loose);
}

TEST_CASE("integrate_dopri5: dense output is accurate between steps") {
  auto rhs = [](double t, const Vec1&, Vec1& dy) { dy[0] = std::cos(t); };
  Vec1 y0;
  y0 << 0.0;
  // Irrational-ish offsets so samples land mid-step.
  std::vector<double> grid;
  for (int k = 0; k < 40; ++k) grid.push_back(0.137 + 0.4831 * k);
  double worst = 0.0;
  const IntegratorStats stats = integrate_dopri5(
      rhs, y0, 0.0, 20.0, grid,
      [&](double t, const Vec1& y) {
        worst = std::max(worst, std::abs(y[0] - std::sin(t)));
      },
      OdeOptions{});
  // The interpolant is one order below the propagated solution and the
  // global error accumulates over ~160 steps, so allow a couple of decades
  // above the per-step tolerance; a wrong interpolant coefficient would show
  // up at the 1e-5 level here.
  CHECK(worst < 1e-7);
  CHECK(stats.accepted > 0);
  CHECK(stats.rhs_evals > 6 * stats.accepted);
}

TEST_CASE("integrate_dopri5: validation, budget and stiffness errors") {
  auto rhs = [](double, const Vec1& y, Vec1& dy) { dy[0] = y[0]; };
  Vec1 y0;
  y0 << 1.0;
  auto sink = [](double, const Vec1&) {};

  CHECK_THROWS_AS(integrate_dopri5(rhs, y0, 1.0, 0.0, {}, sink, OdeOptions{}),
                  ValidationError);
  CHECK_THROWS_AS(
      integrate_dopri5(rhs, y0, 0.0, 1.0, {0.8, 0.2}, sink, OdeOptions{}),
      ValidationError);
  CHECK_THROWS_AS(
      integrate_dopri5(rhs, y0, 0.0, 1.0, {2.0}, sink, OdeOptions{}),
      ValidationError);

  OdeOptions tiny_budget;
  tiny_budget.max_steps = 3;
  CHECK_THROWS_AS(
      integrate_dopri5(rhs, y0, 0.0, 50.0, {}, sink, tiny_budget),
      AccuracyError);

  // y' = y^2 from y(0)=1 blows up at t=1; the step collapses approaching it.
  auto blowup = [](double, const Vec1& y, Vec1& dy) { dy[0] = y[0] * y[0]; };
  CHECK_THROWS_AS(
      integrate_dopri5(blowup, y0, 0.0, 1.5, {}, sink, OdeOptions{}),
      StiffnessError);
}

TEST_CASE("derive_dimensionless: characteristic time and sweep rate anchors") {
  PhysicalContext ctx;
  ctx.N0_eta = 1e23;
  ctx.Omega = 1e11;
  ctx.s_magnitude = 1.0;
  ctx.T2 = 1e-6;
  ctx.Tc = 1e-8;
  ctx.B0_dot = 0.03;
  ctx.m = -10;
  ctx.m_prime = 8;
  ctx.volume = 1e-9;

  const DimensionlessParams unit_s = derive_dimensionless(ctx);
  CHECK(unit_s.T0 > 5e-9);
  CHECK(unit_s.T0 < 2e-8);
  CHECK(unit_s.config.gamma == doctest::Approx(unit_s.T0 / ctx.T2).epsilon(1e-14));
  CHECK(unit_s.config.kappa == doctest::Approx(unit_s.T0 / ctx.Tc).epsilon(1e-14));

  // Square-root density law.
  PhysicalContext doubled = ctx;
  doubled.N0_eta = 2e23;
  CHECK(derive_dimensionless(doubled).T0 ==
        doctest::Approx(unit_s.T0 / std::sqrt(2.0)).epsilon(1e-12));

  // |s| tuned so T0 = 1e-6 s: the 30 mT/s (-10, 8) sweep lands near v = 0.1.
  PhysicalContext slow = ctx;
  slow.s_magnitude = unit_s.T0 / 1e-6;
  const DimensionlessParams scaled = derive_dimensionless(slow);
  CHECK(scaled.T0 == doctest::Approx(1e-6).epsilon(1e-12));
  CHECK(scaled.config.v == doctest::Approx(0.095).epsilon(0.01));
  CHECK(scaled.config.v == doctest::Approx(0.1).epsilon(0.10));
}

TEST_CASE("derive_dimensionless: rejects dark transitions and bad context") {
  PhysicalContext ctx;
  ctx.N0_eta = 1e23;
  ctx.Omega = 1e11;
  ctx.s_magnitude = 1.0;
  ctx.T2 = 1e-6;
  ctx.Tc = 1e-8;
  ctx.B0_dot = 0.03;
  ctx.m = -10;
  ctx.m_prime = 8;
  ctx.volume = 1e-9;
  CHECK_NOTHROW(derive_dimensionless(ctx));

  PhysicalContext dark = ctx;
  dark.s_magnitude = 0.0;
  CHECK_THROWS_AS(derive_dimensionless(dark), ValidationError);

  PhysicalContext same_pair = ctx;
  same_pair.m_prime = -10;
  CHECK_THROWS_AS(derive_dimensionless(same_pair), ValidationError);

  PhysicalContext bad_eta = ctx;
  bad_eta.eta = 1.5;
  CHECK_THROWS_AS(derive_dimensionless(bad_eta), ValidationError);

  PhysicalContext bad_omega = ctx;
  bad_omega.Omega = -1e11;
  CHECK_THROWS_AS(derive_dimensionless(bad_omega), ValidationError);
}

TEST_CASE("integrate_bloch_cavity: dark initial state is an exact fixed point") {
  DynamicsConfig cfg;
  cfg.kappa = 1.0;
  cfg.v = 0.2;
  cfg.R0 = std::complex<double>(0.0, 0.0);
  cfg.samples = 201;
  const Trajectory t = integrate_bloch_cavity(cfg);
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(t.Z[i] == 1.0);
    CHECK(t.re_h[i] == 0.0);
    CHECK(t.im_h[i] == 0.0);
    CHECK(t.re_R[i] == 0.0);
    CHECK(t.im_R[i] == 0.0);
  }
}

TEST_CASE("integrate_bloch_cavity: empty ensemble leaves a decaying cavity") {
  DynamicsConfig cfg;
  cfg.kappa = 1.6;
  cfg.v = 0.3;
  cfg.Z0 = 0.0;
  cfg.R0 = std::complex<double>(0.0, 0.0);
  cfg.h0 = {0.3, 0.0};
  cfg.tau_start = 0.0;
  cfg.tau_end = 20.0;
  cfg.samples = 401;
  const Trajectory t = integrate_bloch_cavity(cfg);
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(t.Z[i] == 0.0);
    CHECK(t.re_R[i] == 0.0);
    CHECK(t.im_R[i] == 0.0);
    const double expected = 0.3 * std::exp(-0.5 * cfg.kappa * t.tau[i]);
    // Deep in the tail the dense samples carry the absolute tolerance floor.
    CHECK(std::abs(std::hypot(t.re_h[i], t.im_h[i]) - expected) <
          1e-8 * expected + 1e-12);
  }
  CHECK(std::is_sorted(t.tau.begin(), t.tau.end()));
}

TEST_CASE("integrate_bloch_cavity: Bloch length conserved at gamma = 0") {
  DynamicsConfig cfg;
  cfg.kappa = 1.0;
  cfg.v = 0.2;
  const double defect_default = conservation_defect(integrate_bloch_cavity(cfg));
  CHECK(defect_default < 1e-7);

  DynamicsConfig gentler = cfg;
  gentler.kappa = 5.0;
  gentler.v = 0.1;
  CHECK(conservation_defect(integrate_bloch_cavity(gentler)) < 1e-9);

  // Tolerance response is first order (defect tracks the tolerance): halving
  // buys about 2x, quartering about 4x.
  DynamicsConfig halved = cfg;
  halved.rel_tol = 5e-10;
  halved.abs_tol = 5e-13;
  const double defect_halved = conservation_defect(integrate_bloch_cavity(halved));
  CHECK(defect_default / defect_halved > 1.6);

  DynamicsConfig quartered = cfg;
  quartered.rel_tol = 2.5e-10;
  quartered.abs_tol = 2.5e-13;
  const double defect_quartered =
      conservation_defect(integrate_bloch_cavity(quartered));
  CHECK(defect_default / defect_quartered > 3.2);
}

TEST_CASE("integrate_bloch_cavity: observables do not depend on psi") {
  auto run = [](double psi) {
    DynamicsConfig cfg;
    cfg.kappa = 1.0;
    cfg.v = 0.2;
    cfg.psi = psi;
    cfg.samples = 801;
    return integrate_bloch_cavity(cfg);
  };
  const Trajectory a = run(0.7);
  const Trajectory b = run(std::numbers::pi / 2);
  double worst_z = 0.0, worst_i = 0.0, worst_r = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst_z = std::max(worst_z, std::abs(a.Z[i] - b.Z[i]));
    worst_i = std::max(worst_i, std::abs(a.intensity[i] - b.intensity[i]));
    worst_r = std::max(worst_r, std::abs(std::hypot(a.re_R[i], a.im_R[i]) -
                                         std::hypot(b.re_R[i], b.im_R[i])));
  }
  CHECK(worst_z < 1e-6);
  CHECK(worst_i < 1e-6);
  CHECK(worst_r < 1e-6);
}

TEST_CASE("integrate_bloch_cavity: cavity decay shifts onset and removes ringing") {
  std::vector<Trajectory> runs;
  for (double kappa : {0.2, 1.0, 5.0}) {
    DynamicsConfig cfg;
    cfg.kappa = kappa;
    cfg.v = 0.2;
    runs.push_back(integrate_bloch_cavity(cfg));
  }
  // Onset (position of the intensity maximum) grows with kappa, the number of
  // after-pulses shrinks, and a lossy cavity empties the upper level.
  CHECK(peak_of(runs[0]).tau < peak_of(runs[1]).tau);
  CHECK(peak_of(runs[1]).tau < peak_of(runs[2]).tau);
  CHECK(pulse_count(runs[0], 0.02) > pulse_count(runs[1], 0.02));
  CHECK(pulse_count(runs[1], 0.02) > pulse_count(runs[2], 0.02));
  CHECK(runs[2].Z.back() < -0.9);
}

TEST_CASE("integrate_bloch_cavity: dephasing pushes the final inversion up") {
  double previous = -1.0;
  for (double gamma : {0.05, 0.2, 1.0}) {
    DynamicsConfig cfg;
    cfg.gamma = gamma;
    cfg.kappa = 0.2;
    cfg.v = 0.2;
    const double z_end = integrate_bloch_cavity(cfg).Z.back();
    CHECK(z_end > previous + 0.01);
    previous = z_end;
  }
}

TEST_CASE("integrate_bloch_cavity: leaked photons balance the inversion drop") {
  DynamicsConfig cfg;
  cfg.kappa = 2.0;
  cfg.v = 0.0;
  cfg.tau_start = 0.0;
  cfg.tau_end = 40.0;
  cfg.samples = 4001;
  const Trajectory t = integrate_bloch_cavity(cfg);
  double integral = 0.0;
  for (std::size_t i = 1; i < t.size(); ++i)
    integral += 0.5 * (t.intensity[i] + t.intensity[i - 1]) *
                (t.tau[i] - t.tau[i - 1]);
  const double leaked = cfg.kappa * integral + t.intensity.back();
  const double released = 0.5 * (t.Z.front() - t.Z.back());
  CHECK(std::abs(leaked / released - 1.0) < 1e-6);
}

TEST_CASE("integrate_bloch_cavity: bad-cavity pulse matches the sech^2 law") {
  DynamicsConfig cfg;
  cfg.kappa = 20.0;
  cfg.v = 0.0;
  cfg.tau_start = 0.0;
  cfg.tau_end = 400.0;
  cfg.samples = 8001;
  const Trajectory t = integrate_bloch_cavity(cfg);
  const Peak p = peak_of(t);
  const double tau_r = cfg.kappa / (2.0 * cfg.Z0);
  CHECK(std::abs(2.0 * p.intensity - 1.0 / (2.0 * tau_r * tau_r)) <
        0.05 / (2.0 * tau_r * tau_r));
  CHECK(std::abs(p.tau - tau_r * std::log(2.0 / cfg.theta0)) <
        0.05 * tau_r * std::log(2.0 / cfg.theta0));
}

TEST_CASE("integrate_bloch_cavity: marginal cavity lags the bad-cavity formulas") {
  // kappa = 2 sits at kappa*tau_r = 2, where eliminating the field is a rough
  // approximation: the peak undershoots 1/(2 tau_r^2) by ~26% and the delay
  // follows ln(2/theta0) over the linearized growth rate
  // lambda = (sqrt(kappa^2 + 16 Z0) - kappa)/4 rather than 1/tau_r.
  DynamicsConfig cfg;
  cfg.kappa = 2.0;
  cfg.v = 0.0;
  cfg.tau_start = 0.0;
  cfg.tau_end = 60.0;
  cfg.samples = 6001;
  const Trajectory t = integrate_bloch_cavity(cfg);
  const Peak p = peak_of(t);
  CHECK(2.0 * p.intensity > 0.30);
  CHECK(2.0 * p.intensity < 0.50);
  const double lambda = (std::sqrt(cfg.kappa * cfg.kappa + 16.0 * cfg.Z0) -
                         cfg.kappa) / 4.0;
  CHECK(std::abs(p.tau - std::log(2.0 / cfg.theta0) / lambda) <
        0.10 * std::log(2.0 / cfg.theta0) / lambda);
  CHECK(t.Z.back() < -0.99);
}

TEST_CASE("integrate_bloch_cavity: unreachable tolerance reports stiffness") {
  DynamicsConfig cfg;
  cfg.kappa = 1.0;
  cfg.v = 0.2;
  cfg.rel_tol = 1e-300;
  cfg.abs_tol = 1e-300;
  try {
    integrate_bloch_cavity(cfg);
    FAIL("expected StiffnessError");
  } catch (const StiffnessError& err) {
    CHECK(std::string(err.what()).find("rate_equations") != std::string::npos);
  }
}

TEST_CASE("DynamicsConfig: validation rejects unphysical setups") {
  DynamicsConfig cfg;
  cfg.gamma = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);

  cfg = DynamicsConfig{};
  cfg.kappa = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);

  cfg = DynamicsConfig{};
  cfg.Z0 = 0.8;
  cfg.R0 = std::complex<double>(0.5, 0.0);  // 0.64 + 0.5 > 1
  CHECK_THROWS_AS(cfg.validate(), ValidationError);

  cfg = DynamicsConfig{};
  cfg.tau_start = 5.0;
  cfg.tau_end = 5.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);

  cfg = DynamicsConfig{};
  cfg.samples = 1;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);

  // The theta0 seed tips a Bloch vector of length Z0, so the default
  // configuration sits exactly on the sphere and passes.
  cfg = DynamicsConfig{};
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.initial_Z() == doctest::Approx(std::cos(1e-4)).epsilon(1e-15));
  const double norm = cfg.initial_Z() * cfg.initial_Z() +
                      2.0 * std::norm(cfg.initial_R());
  CHECK(norm == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("integrate_rate_equations: zero field seed is a fixed point") {
  DynamicsConfig cfg;
  cfg.gamma = 1.0;
  cfg.kappa = 0.1;
  cfg.v = 0.2;
  cfg.Z0 = 0.7;
  const Trajectory t = integrate_rate_equations(cfg);
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(t.Z[i] == 0.7);
    CHECK(t.re_h[i] == 0.0);
    CHECK(t.im_h[i] == 0.0);
  }
}

TEST_CASE("integrate_rate_equations: gamma = 0 is rejected") {
  DynamicsConfig cfg;
  cfg.gamma = 0.0;
  cfg.kappa = 0.1;
  cfg.h0 = {1e-3, 0.0};
  CHECK_THROWS_AS(integrate_rate_equations(cfg), ValidationError);
}

TEST_CASE("integrate_rate_equations: small-signal gain is 1/gamma - kappa/2") {
  auto growth = [](double gamma, double kappa) {
    DynamicsConfig cfg;
    cfg.gamma = gamma;
    cfg.kappa = kappa;
    cfg.v = 0.0;
    cfg.h0 = {1e-8, 0.0};
    cfg.tau_start = 0.0;
    cfg.tau_end = 5.0;
    cfg.samples = 51;
    const Trajectory t = integrate_rate_equations(cfg);
    const double b1 = std::hypot(t.re_h[10], t.im_h[10]);
    const double b2 = std::hypot(t.re_h[40], t.im_h[40]);
    return std::log(b2 / b1) / (t.tau[40] - t.tau[10]);
  };
  CHECK(std::abs(growth(2.0, 0.4) - 0.3) < 1e-4);   // above threshold
  CHECK(std::abs(growth(2.0, 1.0)) < 1e-4);         // kappa*gamma = 2: threshold
  CHECK(std::abs(growth(2.0, 1.6) + 0.3) < 1e-4);   // below threshold
}

TEST_CASE("integrate_rate_equations: inversion decays monotonically, no sign flip") {
  DynamicsConfig cfg;
  cfg.gamma = 1.0;
  cfg.kappa = 0.1;
  cfg.v = 0.2;
  cfg.h0 = {1e-3, 0.0};
  const Trajectory t = integrate_rate_equations(cfg);
  for (std::size_t i = 1; i < t.size(); ++i) {
    CHECK(t.Z[i] > 0.0);
    CHECK(t.Z[i] <= t.Z[i - 1] + 1e-12);
  }
  CHECK(t.Z.back() < 0.05);  // the maser actually fired

  // The eliminated coherence column obeys the adiabatic relation.
  const std::complex<double> kImag(0.0, 1.0);
  for (std::size_t i : {100UL, 700UL, 1500UL}) {
    const std::complex<double> b(t.re_h[i], t.im_h[i]);
    const std::complex<double> expected =
        -kImag * b * std::exp(kImag * t.config.psi) * t.Z[i] /
        std::complex<double>(cfg.gamma, cfg.v * t.tau[i]);
    CHECK(std::abs(std::complex<double>(t.re_R[i], t.im_R[i]) - expected) <
          1e-12);
  }
}

TEST_CASE("integrate_rate_equations: agrees with the full system when dephasing dominates") {
  auto compare = [](double gamma, double kappa, double h0, double& z_full) {
    DynamicsConfig cfg;
    cfg.gamma = gamma;
    cfg.kappa = kappa;
    cfg.v = 0.2;
    cfg.h0 = {h0, 0.0};
    cfg.R0 = std::complex<double>(0.0, 0.0);
    cfg.tau_start = -125.0;
    cfg.tau_end = 300.0;
    cfg.samples = 2001;
    const Trajectory full = integrate_bloch_cavity(cfg);
    const Trajectory rate = integrate_rate_equations(cfg);
    z_full = full.Z.back();
    return std::abs(full.Z.back() - rate.Z.back());
  };
  double z_full = 0.0;
  CHECK(compare(5.0, 0.05, 1e-3, z_full) < 0.02);
  CHECK(z_full < 0.5);  // deep depletion: the comparison exercises real dynamics
  CHECK(compare(8.0, 0.1, 1e-2, z_full) < 0.02);
  CHECK(z_full < 0.995);
}

TEST_CASE("pendulum_solution: timescale bookkeeping and degenerate start") {
  const std::vector<double> grid = linspace(0.0, 10.0, 101);
  const PendulumSolution sol = pendulum_solution(2.0, 1.0, 1e-4, grid);
  CHECK(sol.tau_r == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(sol.tau_delay == doctest::Approx(std::log(2.0 / 1e-4)).epsilon(1e-12));
  CHECK(sol.peak_b2 == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_FALSE(sol.overdamped);  // kappa*tau_r = 2: integrated numerically
  CHECK_FALSE(sol.degenerate);

  const PendulumSolution parked = pendulum_solution(2.0, 1.0, 0.0, grid);
  CHECK(parked.degenerate);
  CHECK(std::isinf(parked.tau_delay));
  for (std::size_t i = 0; i < parked.trajectory.size(); ++i) {
    CHECK(parked.trajectory.intensity[i] == 0.0);
    CHECK(parked.trajectory.Z[i] == 1.0);
  }

  CHECK_THROWS_AS(pendulum_solution(0.0, 1.0, 1e-4, grid), ValidationError);
  CHECK_THROWS_AS(pendulum_solution(2.0, 0.0, 1e-4, grid), ValidationError);
  CHECK_THROWS_AS(pendulum_solution(2.0, 1.0, 4.0, grid), ValidationError);
  CHECK_THROWS_AS(pendulum_solution(2.0, 1.0, 1e-4, {1.0, 1.0}), ValidationError);
}

TEST_CASE("pendulum_solution: reproduces the full system exactly at v = 0") {
  // With gamma = 0, v = 0, psi = pi/2 and the theta0 seed, the five-variable
  // system reduces to the damped pendulum with no approximation, so the two
  // integrations may differ only at tolerance level.
  const std::vector<double> grid = linspace(0.0, 30.0, 3001);
  DynamicsConfig cfg;
  cfg.kappa = 2.0;
  cfg.v = 0.0;
  cfg.theta0 = 1e-3;
  cfg.tau_start = 0.0;
  cfg.tau_end = 30.0;
  cfg.samples = 3001;
  const Trajectory full = integrate_bloch_cavity(cfg);
  PendulumOptions opts;
  opts.force_numeric = true;
  const PendulumSolution pend = pendulum_solution(2.0, 1.0, 1e-3, grid, opts);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(std::abs(full.Z[i] - pend.trajectory.Z[i]) < 1e-7);
    CHECK(std::abs(full.intensity[i] - pend.trajectory.intensity[i]) < 1e-7);
  }
}

TEST_CASE("pendulum_solution: overdamped branch matches the integrated pendulum") {
  // Apart from a ~1% delay offset (linearized growth rate vs 1/tau_r), the
  // integrated pulse at kappa = 20 is a sech^2: compare shapes with the two
  // curves centered on their own peaks.
  std::vector<double> grid = linspace(0.0, 400.0, 20001);
  PendulumOptions numeric_opts;
  numeric_opts.force_numeric = true;
  const PendulumSolution numeric = pendulum_solution(20.0, 1.0, 1e-4, grid, numeric_opts);
  const PendulumSolution closed = pendulum_solution(20.0, 1.0, 1e-4, grid);
  CHECK(closed.overdamped);
  CHECK_FALSE(numeric.overdamped);

  const Peak closed_peak = peak_of(closed.trajectory);
  // The 0.02-spaced grid can miss the true maximum by half a spacing, which
  // costs ~(0.01/tau_r)^2 of the peak.
  CHECK(std::abs(2.0 * closed_peak.intensity - closed.peak_b2) < 1e-8);
  CHECK(std::abs(closed_peak.tau - closed.tau_delay) < 0.05);

  const Peak numeric_peak = peak_of(numeric.trajectory);
  CHECK(std::abs(numeric_peak.tau - closed.tau_delay) < 0.02 * closed.tau_delay);

  const double tau_r = closed.tau_r;
  double worst = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double x = (grid[i] - numeric_peak.tau) / tau_r;
    const double formula = 0.5 * closed.peak_b2 / std::pow(std::cosh(x), 2);
    worst = std::max(worst,
                     std::abs(numeric.trajectory.intensity[i] - formula));
  }
  CHECK(worst < 0.02 * 0.5 * closed.peak_b2);
}

TEST_CASE("integrate_bloch_cavity: local-field knob preserves conservation") {
  DynamicsConfig cfg;
  cfg.kappa = 1.0;
  cfg.v = 0.2;
  cfg.beta = 0.05;
  const Trajectory with_beta = integrate_bloch_cavity(cfg);
  CHECK(conservation_defect(with_beta) < 1e-7);

  DynamicsConfig plain = cfg;
  plain.beta = 0.0;
  const Trajectory without = integrate_bloch_cavity(plain);
  double diff = 0.0;
  for (std::size_t i = 0; i < with_beta.size(); ++i)
    diff = std::max(diff, std::abs(with_beta.Z[i] - without.Z[i]));
  CHECK(diff > 1e-8);  // the knob is wired in
  CHECK(diff < 0.5);   // but stays a small correction
}
