#pragma once

#include <vector>

#include <Eigen/Dense>

#include "spincavity/crossings.hpp"
#include "spincavity/spin_model.hpp"

namespace spincavity {

struct LzsProbability {
  double p = 0.0;
  // Set when w_rate == 0: the sweep never leaves the crossing, which is the
  // fully adiabatic case P = 1 rather than an error.
  bool adiabatic_limit = false;
};

// P = 1 - exp(-pi delta0^2 / (2 hbar |w_rate|)) for one linear sweep through
// an avoided crossing. delta0 in joules, w_rate = d(diabatic splitting)/dt in
// joules per second; the sign of w_rate is irrelevant.
LzsProbability lzs_probability(double delta0, double w_rate);

// Boltzmann weights over the eigenlevels of H_S at B0, ascending-energy order,
// normalized to 1. Computed with the max exponent subtracted so extreme T
// never overflows. Throws ValidationError for T <= 0.
Eigen::VectorXd thermal_populations(const SpinSystemParams& params, double B0,
                                    double temperature);

// One population transfer event of the staircase: the crossing that fired,
// the LZS probability used, the population moved from m to m', and the
// resulting jump of <Sz> per molecule.
struct HysteresisStep {
  CrossingRecord record;
  double probability = 0.0;
  double population_moved = 0.0;
  double magnetization_jump = 0.0;
};

struct HysteresisResult {
  std::vector<double> field_grid;     // tesla, ascending
  std::vector<double> magnetization;  // <Sz> per molecule, piecewise constant
  std::vector<HysteresisStep> step_records;
  double sweep_rate = 0.0;   // tesla / second
  double temperature = 0.0;  // kelvin
};

struct HysteresisOptions {
  int grid_points = 1201;
  // Redistribute the population remaining in the metastable well (m < 0)
  // thermally at each crossing before the transfer fires. Off by default:
  // the plain cascade keeps every step attributable to one LZS event.
  bool rethermalize = false;
  // Crossing records to reuse instead of building a catalog. Records may
  // come from a catalog built with different anisotropy values; each one is
  // re-centered for `params` before its gap is read off. This is what makes
  // repeated fit evaluations affordable.
  std::vector<CrossingRecord> seed_catalog;
  CatalogOptions catalog = {};
};

// Sweeps B0 upward from b_start to b_end at `sweep_rate`. The initial state
// is the thermal distribution at b_start conditioned on the metastable well
// (eigenlevels whose dominant diabatic label has m < 0), mimicking a sample
// saturated at negative field. Each catalog crossing inside the range then
// moves population p_m * P from m to m' in field order; between crossings the
// populations are frozen. Throws ValidationError when no crossing lies in
// range or for invalid T / grid.
HysteresisResult simulate_hysteresis(const SpinSystemParams& params,
                                     double sweep_rate, double temperature,
                                     double b_start, double b_end,
                                     const HysteresisOptions& opts = {});

struct FitConfig {
  // (field, expected magnetization jump) pairs; each target is matched to
  // the nearest simulated step within match_window.
  std::vector<std::pair<double, double>> target_steps;
  double initial_C_over_kB = 0.0;
  double initial_E_over_kB = 0.0;
  double initial_K_coeff = 0.0;
  double match_window = 0.05;  // tesla
  double simplex_xtol = 1e-4;  // on scaled coordinates
  double simplex_ftol = 1e-12;
  int max_iterations = 400;  // per simplex run
  // Extra simplex runs re-seeded at the best point with smaller/larger
  // initial spreads; rescues runs whose simplex collapsed on a plateau
  // (LZS probabilities saturate at 1, flattening the objective).
  int restarts = 2;
  double b_start = -0.05;  // sweep window used for every evaluation
  double b_end = 1.45;
};

struct FitResult {
  double C_over_kB = 0.0;
  double E_over_kB = 0.0;
  double K_coeff = 0.0;
  double residual = 0.0;  // sum of squared height differences
  int iterations = 0;
  bool converged = false;
};

// Sum of squared differences between fit.target_steps heights and the step
// heights of one simulated up-sweep at `params` (each target matched to the
// nearest step within fit.match_window; a target with no step nearby
// contributes its full height). This is the objective the fit minimizes,
// exposed so candidate parameter sets can be scored directly.
double step_height_residual(const FitConfig& fit, const SpinSystemParams& params,
                            double sweep_rate, double temperature,
                            const std::vector<CrossingRecord>& seed_catalog = {});

// Nelder-Mead fit of (C, E, K_coeff) to the target step heights; all other
// parameters are taken from `base`. The objective simulates one up-sweep per
// trial, reusing one catalog built at `base` as seed records. On simplex
// collapse without reaching the tolerances the best vertex is still returned,
// flagged converged = false.
FitResult fit_anisotropy_params(const FitConfig& fit, const SpinSystemParams& base,
                                double sweep_rate, double temperature);

}  // namespace spincavity
