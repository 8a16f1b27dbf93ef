#include "doctest.h"

#include <cmath>
#include <random>

#include "lz_oracle.hpp"
#include "spincavity/constants.hpp"
#include "spincavity/crossings.hpp"
#include "spincavity/errors.hpp"
#include "spincavity/lzs.hpp"
#include "spincavity/optim.hpp"
#include "spincavity/reduction.hpp"

using namespace spincavity;
namespace cst = spincavity::constants;

TEST_CASE("lzs_probability: closed-form anchors") {
  const double w = 1e-23;
  CHECK(lzs_probability(0.0, w).p == 0.0);
  CHECK_FALSE(lzs_probability(0.0, w).adiabatic_limit);

  // Gap chosen so the exponent is exactly ln 2.
  const double d_half = std::sqrt(2.0 * cst::hbar * w * std::log(2.0) / M_PI);
  CHECK(lzs_probability(d_half, w).p == doctest::Approx(0.5).epsilon(1e-12));

  // Sweep direction is irrelevant.
  CHECK(lzs_probability(3e-28, w).p == lzs_probability(3e-28, -w).p);

  const LzsProbability adiabatic = lzs_probability(1e-30, 0.0);
  CHECK(adiabatic.p == 1.0);
  CHECK(adiabatic.adiabatic_limit);

  CHECK_THROWS_AS(lzs_probability(std::nan(""), w), ValidationError);
}

TEST_CASE("lzs_probability: monotone in gap and sweep rate") {
  std::mt19937 rng(20240817);
  std::uniform_real_distribution<double> log_d(-30.0, -25.0), log_w(-25.0, -20.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double w = std::pow(10.0, log_w(rng));
    double d1 = std::pow(10.0, log_d(rng)), d2 = std::pow(10.0, log_d(rng));
    if (d1 > d2) std::swap(d1, d2);
    CHECK(lzs_probability(d1, w).p <= lzs_probability(d2, w).p);

    const double d = std::pow(10.0, log_d(rng));
    double w1 = std::pow(10.0, log_w(rng)), w2 = std::pow(10.0, log_w(rng));
    if (w1 > w2) std::swap(w1, w2);
    CHECK(lzs_probability(d, w1).p >= lzs_probability(d, w2).p);
  }
}

TEST_CASE("lzs_probability: Schrodinger-equation oracle over three decades of gap") {
  // Fixed sweep rate typical of a deep crossing at laboratory rates.
  SpinSystemParams p;
  const double w = p.mu_tilde() * 18.0 * 0.03;
  // d spans [0.004, 4] in the dimensionless gap, i.e. P from ~5e-5 to ~1.
  const double d_ref = std::sqrt(2.0 * cst::hbar * w);
  for (double d : {0.004, 0.0126, 0.04, 0.126, 0.4, 1.26, 4.0}) {
    const double delta0 = d * d_ref;
    const double p_formula = lzs_probability(delta0, w).p;
    const double p_numeric = schrodinger_lz_probability(delta0, w);
    CHECK(std::abs(p_formula - p_numeric) < 1e-3);
  }
}

TEST_CASE("thermal_populations: limits and direct arithmetic") {
  SpinSystemParams p;

  const Eigen::VectorXd hot = thermal_populations(p, 0.3, 1e9);
  for (int k = 0; k < hot.size(); ++k)
    CHECK(hot[k] == doctest::Approx(1.0 / 21.0).epsilon(1e-6));

  const Eigen::VectorXd cold = thermal_populations(p, 0.3, 1e-3);
  CHECK(cold[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cold.tail(20).maxCoeff() < 1e-12);

  const Eigen::VectorXd warm = thermal_populations(p, 1.4, 2.0);
  CHECK(warm.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(warm.minCoeff() > 0.0);
  const EigenDecomposition ed = eigh(build_hamiltonian(p, 1.4));
  double z = 0.0;
  for (int k = 0; k < 21; ++k)
    z += std::exp(-(ed.eigenvalues[k] - ed.eigenvalues[0]) / (cst::k_boltzmann * 2.0));
  for (int k = 0; k < 21; ++k) {
    const double expect =
        std::exp(-(ed.eigenvalues[k] - ed.eigenvalues[0]) / (cst::k_boltzmann * 2.0)) / z;
    CHECK(warm[k] == doctest::Approx(expect).epsilon(1e-12));
  }

  CHECK_THROWS_AS(thermal_populations(p, 0.3, 0.0), ValidationError);
  CHECK_THROWS_AS(thermal_populations(p, 0.3, -2.0), ValidationError);
}

TEST_CASE("simulate_hysteresis: diagonal Hamiltonian gives an exactly flat curve") {
  SpinSystemParams p;
  p.C_over_kB = 0.0;
  p.E_over_kB = 0.0;
  p.K_coeff = 0.0;
  const HysteresisResult r = simulate_hysteresis(p, 0.03, 2.0, -0.05, 1.15);
  REQUIRE(!r.magnetization.empty());
  for (double m : r.magnetization) CHECK(m == r.magnetization.front());
  for (const HysteresisStep& s : r.step_records) {
    CHECK(s.probability == 0.0);
    CHECK(s.magnetization_jump == 0.0);
  }
}

TEST_CASE("simulate_hysteresis: steps sit at the diagonal-crossing fields") {
  SpinSystemParams p;
  const HysteresisResult r = simulate_hysteresis(p, 0.03, 2.0, -0.05, 1.15);
  bool saw_109 = false, saw_108 = false;
  for (const HysteresisStep& s : r.step_records) {
    const double b_pred = crossing_field_h0(s.record.m, s.record.m_prime, p);
    CHECK(std::abs(s.record.B0_star - b_pred) < 0.01);
    if (s.record.m == -10 && s.record.m_prime == 9) saw_109 = true;
    if (s.record.m == -10 && s.record.m_prime == 8) saw_108 = true;
  }
  CHECK(saw_109);
  CHECK(saw_108);

  // Up-sweep from the metastable well only raises the magnetization.
  for (std::size_t i = 1; i < r.magnetization.size(); ++i)
    CHECK(r.magnetization[i] >= r.magnetization[i - 1]);
  for (double m : r.magnetization) {
    CHECK(m >= -p.spin);
    CHECK(m <= p.spin);
  }
}

TEST_CASE("simulate_hysteresis: resolvable steps of the ground level at 30 mT/s") {
  // At laboratory sweep rates the first (-10, m') crossings with order-one
  // probability sit at high field; check the two big ones.
  SpinSystemParams p;
  const HysteresisResult r = simulate_hysteresis(p, 0.03, 2.0, 3.3, 4.6);
  const HysteresisStep* step_102 = nullptr;
  const HysteresisStep* step_101 = nullptr;
  for (const HysteresisStep& s : r.step_records) {
    if (s.record.m == -10 && s.record.m_prime == 2) step_102 = &s;
    if (s.record.m == -10 && s.record.m_prime == 1) step_101 = &s;
  }
  REQUIRE(step_102 != nullptr);
  REQUIRE(step_101 != nullptr);
  CHECK(step_102->record.B0_star == doctest::Approx(4.016).epsilon(5e-3));
  CHECK(step_101->record.B0_star == doctest::Approx(4.497).epsilon(5e-3));
  CHECK(step_102->probability > 0.2);
  CHECK(step_102->probability < 0.7);
  CHECK(step_101->probability > 0.9);
  CHECK(step_102->magnetization_jump > 2.0);
  CHECK(step_101->magnetization_jump > 4.0);
  CHECK(r.magnetization.back() > 0.5);
  CHECK(r.magnetization.front() == doctest::Approx(-10.0).epsilon(2e-3));
}

TEST_CASE("simulate_hysteresis: seed catalog reuse reproduces the native run") {
  SpinSystemParams p;
  const HysteresisResult native = simulate_hysteresis(p, 0.03, 2.0, -0.05, 1.15);

  HysteresisOptions opts;
  // Catalog built with a 30% larger C still re-centers onto the same steps.
  SpinSystemParams shifted = p;
  shifted.C_over_kB *= 1.3;
  opts.seed_catalog = build_crossing_catalog(shifted, 0.0, 1.15);
  const HysteresisResult reused = simulate_hysteresis(p, 0.03, 2.0, -0.05, 1.15, opts);

  REQUIRE(native.step_records.size() == reused.step_records.size());
  for (std::size_t i = 0; i < native.step_records.size(); ++i) {
    CHECK(std::abs(native.step_records[i].record.B0_star -
                   reused.step_records[i].record.B0_star) < 1e-6);
    CHECK(native.step_records[i].magnetization_jump ==
          doctest::Approx(reused.step_records[i].magnetization_jump).epsilon(1e-6));
  }
  CHECK(native.magnetization.back() ==
        doctest::Approx(reused.magnetization.back()).epsilon(1e-9));
}

TEST_CASE("simulate_hysteresis: rethermalization refills drained donors") {
  SpinSystemParams p;
  // At 6 K several well levels are populated and the (-6, 5) crossing fires
  // with order-one probability, so refilling m = -6 changes the staircase.
  const HysteresisResult plain = simulate_hysteresis(p, 0.03, 6.0, -0.05, 1.15);
  HysteresisOptions opts;
  opts.rethermalize = true;
  const HysteresisResult rether = simulate_hysteresis(p, 0.03, 6.0, -0.05, 1.15, opts);
  CHECK(std::abs(plain.magnetization.back() - rether.magnetization.back()) > 1e-4);
  for (std::size_t i = 1; i < rether.magnetization.size(); ++i)
    CHECK(rether.magnetization[i] >= rether.magnetization[i - 1]);
}

TEST_CASE("simulate_hysteresis: validation") {
  SpinSystemParams p;
  CHECK_THROWS_AS(simulate_hysteresis(p, 0.03, 0.0, -0.05, 1.15), ValidationError);
  CHECK_THROWS_AS(simulate_hysteresis(p, 0.03, 2.0, 1.15, -0.05), ValidationError);
  // No crossing lies between the k=0 cluster and the first k=1 family field.
  CHECK_THROWS_AS(simulate_hysteresis(p, 0.03, 2.0, 0.05, 0.3), ValidationError);
}

TEST_CASE("nelder_mead: quadratic bowl and exact-zero shortcut") {
  const auto bowl = [](const std::vector<double>& x) {
    return (x[0] - 2.0) * (x[0] - 2.0) + (x[1] + 1.0) * (x[1] + 1.0);
  };
  SimplexOptions opts;
  opts.xtol = 1e-8;
  opts.ftol = 1e-16;
  const SimplexResult r = nelder_mead(bowl, {0.0, 0.0}, {0.5, 0.5}, opts);
  CHECK(r.converged);
  CHECK(r.x[0] == doctest::Approx(2.0).epsilon(1e-5));
  CHECK(r.x[1] == doctest::Approx(-1.0).epsilon(1e-5));

  const auto flat_zero = [](const std::vector<double>& x) {
    return x[0] * x[0] * 0.0;
  };
  const SimplexResult z = nelder_mead(flat_zero, {3.0}, {1.0});
  CHECK(z.converged);
  CHECK(z.iterations == 0);
  CHECK(z.fmin == 0.0);

  CHECK_THROWS_AS(nelder_mead(bowl, {0.0, 0.0}, {0.5}), ValidationError);
  CHECK_THROWS_AS(nelder_mead(bowl, {0.0, 0.0}, {0.5, 0.0}), ValidationError);
}

namespace {

// Three steps whose gaps lean on different transverse terms: (-7,5) ~ C^3,
// (-6,4) ~ C^2 E, (-6,3) ~ C^2 K, measurable together at a fast sweep and
// a temperature that populates m = -7 and -6.
FitConfig synthetic_fit_targets(const SpinSystemParams& truth, double sweep,
                                double temperature) {
  const HysteresisResult r =
      simulate_hysteresis(truth, sweep, temperature, -0.05, 1.42);
  FitConfig fit;
  fit.b_end = 1.42;
  for (const HysteresisStep& s : r.step_records) {
    const bool wanted =
        (s.record.m == -7 && s.record.m_prime == 5) ||
        (s.record.m == -6 && s.record.m_prime == 4) ||
        (s.record.m == -6 && s.record.m_prime == 3);
    if (wanted)
      fit.target_steps.emplace_back(s.record.B0_star, s.magnetization_jump);
  }
  return fit;
}

}  // namespace

TEST_CASE("fit_anisotropy_params: round-trip recovery of C, E, K") {
  SpinSystemParams truth;
  const double sweep = 3000.0, temperature = 12.0;
  FitConfig fit = synthetic_fit_targets(truth, sweep, temperature);
  REQUIRE(fit.target_steps.size() == 3);

  fit.initial_C_over_kB = truth.C_over_kB * 1.30;
  fit.initial_E_over_kB = truth.E_over_kB * 0.75;
  fit.initial_K_coeff = truth.K_coeff * 1.40;
  fit.max_iterations = 400;

  const FitResult res = fit_anisotropy_params(fit, truth, sweep, temperature);
  CHECK(std::abs(res.C_over_kB - truth.C_over_kB) < 0.05 * std::abs(truth.C_over_kB));
  CHECK(std::abs(res.E_over_kB - truth.E_over_kB) < 0.05 * std::abs(truth.E_over_kB));
  CHECK(std::abs(res.K_coeff - truth.K_coeff) < 0.05 * std::abs(truth.K_coeff));
  CHECK(res.residual < 1e-10);
}

TEST_CASE("fit objective: default parameters are a local minimum") {
  SpinSystemParams truth;
  const double sweep = 3000.0, temperature = 12.0;
  const FitConfig fit = synthetic_fit_targets(truth, sweep, temperature);
  REQUIRE(fit.target_steps.size() == 3);

  const double at_truth = step_height_residual(fit, truth, sweep, temperature);
  CHECK(at_truth < 1e-20);
  for (int which = 0; which < 3; ++which) {
    SpinSystemParams bumped = truth;
    if (which == 0) bumped.C_over_kB *= 1.10;
    if (which == 1) bumped.E_over_kB *= 1.10;
    if (which == 2) bumped.K_coeff *= 1.10;
    CHECK(step_height_residual(fit, bumped, sweep, temperature) > at_truth + 1e-8);
  }
}

TEST_CASE("fit_anisotropy_params: zero targets with zero guess converge immediately") {
  SpinSystemParams base;
  FitConfig fit;
  fit.target_steps = {{0.4668, 0.0}, {0.9188, 0.0}, {1.3610, 0.0}};
  fit.initial_C_over_kB = 0.0;
  fit.initial_E_over_kB = 0.0;
  fit.initial_K_coeff = 0.0;
  const FitResult res = fit_anisotropy_params(fit, base, 0.03, 2.0);
  CHECK(res.converged);
  CHECK(res.iterations == 0);
  CHECK(res.residual == 0.0);
  CHECK(res.C_over_kB == 0.0);
  CHECK(res.E_over_kB == 0.0);
  CHECK(res.K_coeff == 0.0);

  FitConfig bad = fit;
  bad.target_steps.resize(2);
  CHECK_THROWS_AS(fit_anisotropy_params(bad, base, 0.03, 2.0), ValidationError);
}
