#include "spincavity/lzs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "spincavity/constants.hpp"
#include "spincavity/errors.hpp"
#include "spincavity/optim.hpp"
#include "spincavity/reduction.hpp"

namespace spincavity {

LzsProbability lzs_probability(double delta0, double w_rate) {
  if (!std::isfinite(delta0) || !std::isfinite(w_rate))
    throw ValidationError("lzs_probability: non-finite input");
  LzsProbability out;
  if (w_rate == 0.0) {
    // Zero sweep rate never leaves the crossing: fully adiabatic transfer.
    out.p = 1.0;
    out.adiabatic_limit = true;
    return out;
  }
  const double x =
      M_PI * delta0 * delta0 / (2.0 * constants::hbar * std::abs(w_rate));
  out.p = -std::expm1(-x);
  return out;
}

Eigen::VectorXd thermal_populations(const SpinSystemParams& params, double B0,
                                    double temperature) {
  if (!(temperature > 0.0))
    throw ValidationError("thermal_populations: temperature must be positive");
  params.validate();
  const EigenDecomposition ed = eigh(build_hamiltonian(params, B0));
  const double kt = constants::k_boltzmann * temperature;
  // Subtracting the largest exponent keeps every weight in (0, 1].
  const double e_min = ed.eigenvalues.minCoeff();
  Eigen::VectorXd p = (-(ed.eigenvalues.array() - e_min) / kt).exp();
  p /= p.sum();
  return p;
}

namespace {

// Diabatic label of each eigencolumn by its dominant |m> component.
// Throws TrackingError if two columns claim the same label; that only
// happens when the requested field sits on top of a crossing.
std::vector<int> dominant_labels(const Eigen::MatrixXd& vectors, double spin) {
  const int dim = static_cast<int>(vectors.cols());
  std::vector<int> labels(dim);
  std::vector<bool> used(dim, false);
  for (int k = 0; k < dim; ++k) {
    int i_max = 0;
    vectors.col(k).cwiseAbs().maxCoeff(&i_max);
    if (used[i_max]) {
      std::ostringstream msg;
      msg << "dominant_labels: two eigenlevels share the diabatic label m="
          << i_max - spin;
      throw TrackingError(msg.str());
    }
    used[i_max] = true;
    labels[k] = static_cast<int>(std::lround(i_max - spin));
  }
  return labels;
}

// -D m^2 - F m^4 - mu B0 m; the transverse terms have no diagonal part.
double diabatic_energy(const SpinSystemParams& params, double B0, int m) {
  const double m2 = double(m) * m;
  return -params.D() * m2 - params.F() * m2 * m2 -
         params.mu_tilde() * B0 * m;
}

struct PreparedCrossing {
  CrossingRecord record;  // re-centered for the active parameters
  double probability = 0.0;
};

}  // namespace

HysteresisResult simulate_hysteresis(const SpinSystemParams& params,
                                     double sweep_rate, double temperature,
                                     double b_start, double b_end,
                                     const HysteresisOptions& opts) {
  params.validate();
  if (!(temperature > 0.0))
    throw ValidationError("simulate_hysteresis: temperature must be positive");
  if (!(b_end > b_start))
    throw ValidationError("simulate_hysteresis: field range is empty");
  if (opts.grid_points < 2)
    throw ValidationError("simulate_hysteresis: need at least 2 grid points");

  std::vector<CrossingRecord> catalog = opts.seed_catalog;
  if (catalog.empty())
    catalog = build_crossing_catalog(params, std::max(0.0, b_start), b_end,
                                     opts.catalog);

  // Re-center each record for the active parameters and read the gap off the
  // dressed pair block, then process in field order.
  std::vector<PreparedCrossing> crossings;
  crossings.reserve(catalog.size());
  for (const CrossingRecord& rec : catalog) {
    const EffectiveTwoLevel etl = effective_two_level(params, rec, sweep_rate);
    if (etl.B0_star < b_start || etl.B0_star > b_end) continue;
    PreparedCrossing pc;
    pc.record = rec;
    pc.record.B0_star = etl.B0_star;
    pc.record.delta0 = std::abs(etl.delta0);
    pc.record.epsilon0 = etl.epsilon0;
    pc.probability = lzs_probability(std::abs(etl.delta0), etl.w_rate).p;
    crossings.push_back(pc);
  }
  if (crossings.empty())
    throw ValidationError("simulate_hysteresis: no crossings in sweep range");
  std::stable_sort(crossings.begin(), crossings.end(),
                   [](const PreparedCrossing& a, const PreparedCrossing& b) {
                     return a.record.B0_star < b.record.B0_star;
                   });

  // Metastable-well start: thermal weights at b_start over the eigenlevels
  // whose dominant label has m < 0, as after saturation at negative field.
  const int dim = params.dim();
  const double spin = params.spin;
  const EigenDecomposition ed = eigh(build_hamiltonian(params, b_start));
  const std::vector<int> labels = dominant_labels(ed.eigenvectors, spin);
  const double kt = constants::k_boltzmann * temperature;
  std::vector<double> pop(dim, 0.0);  // indexed by m + spin
  {
    double e_min = 0.0;
    bool have = false;
    for (int k = 0; k < dim; ++k)
      if (labels[k] < 0 && (!have || ed.eigenvalues[k] < e_min)) {
        e_min = ed.eigenvalues[k];
        have = true;
      }
    if (!have)
      throw ValidationError("simulate_hysteresis: no metastable levels at start");
    double norm = 0.0;
    for (int k = 0; k < dim; ++k) {
      if (labels[k] >= 0) continue;
      const double w = std::exp(-(ed.eigenvalues[k] - e_min) / kt);
      pop[labels[k] + static_cast<int>(spin)] += w;
      norm += w;
    }
    for (double& p : pop) p /= norm;
  }

  auto magnetization_of = [&](const std::vector<double>& p) {
    double m_tot = 0.0;
    for (int i = 0; i < dim; ++i) m_tot += p[i] * (i - spin);
    return m_tot;
  };

  HysteresisResult result;
  result.sweep_rate = sweep_rate;
  result.temperature = temperature;

  const double m0 = magnetization_of(pop);
  std::vector<double> step_fields, step_mags;
  for (PreparedCrossing& pc : crossings) {
    if (opts.rethermalize) {
      // Redistribute whatever is left in the well over the m < 0 diabatic
      // levels at the current field (the transverse terms are diagonal-free,
      // so the diabatic energies are exact diagonal entries).
      const double b_here = pc.record.B0_star;
      double well = 0.0;
      for (int i = 0; i < dim; ++i)
        if (i - spin < 0.0) well += pop[i];
      if (well > 0.0) {
        double e_min = 0.0;
        bool have = false;
        for (int m = -static_cast<int>(spin); m < 0; ++m) {
          const double e = diabatic_energy(params, b_here, m);
          if (!have || e < e_min) { e_min = e; have = true; }
        }
        double norm = 0.0;
        std::vector<double> w(dim, 0.0);
        for (int m = -static_cast<int>(spin); m < 0; ++m) {
          const int i = m + static_cast<int>(spin);
          w[i] = std::exp(-(diabatic_energy(params, b_here, m) - e_min) / kt);
          norm += w[i];
        }
        for (int i = 0; i < dim; ++i)
          pop[i] = (i - spin < 0.0) ? well * w[i] / norm : pop[i];
      }
    }
    const int ia = pc.record.m + static_cast<int>(spin);
    const int ib = pc.record.m_prime + static_cast<int>(spin);
    const double moved = pop[ia] * pc.probability;
    pop[ia] -= moved;
    pop[ib] += moved;
    HysteresisStep step;
    step.record = pc.record;
    step.probability = pc.probability;
    step.population_moved = moved;
    step.magnetization_jump = moved * (pc.record.m_prime - pc.record.m);
    result.step_records.push_back(step);
    step_fields.push_back(pc.record.B0_star);
    // Recomputed from the populations so rethermalization shifts (which are
    // not LZS jumps) still land on the curve at the crossing field.
    step_mags.push_back(magnetization_of(pop));
  }

  result.field_grid.resize(opts.grid_points);
  result.magnetization.resize(opts.grid_points);
  const double db = (b_end - b_start) / (opts.grid_points - 1);
  std::size_t next = 0;
  double current = m0;
  for (int i = 0; i < opts.grid_points; ++i) {
    const double b = b_start + i * db;
    while (next < step_fields.size() && step_fields[next] <= b)
      current = step_mags[next++];
    result.field_grid[i] = b;
    result.magnetization[i] = current;
  }
  return result;
}

double step_height_residual(const FitConfig& fit, const SpinSystemParams& params,
                            double sweep_rate, double temperature,
                            const std::vector<CrossingRecord>& seed_catalog) {
  if (fit.target_steps.empty())
    throw ValidationError("step_height_residual: no target steps");
  HysteresisOptions opts;
  opts.grid_points = 2;  // only the step records matter here
  opts.seed_catalog = seed_catalog;
  const HysteresisResult sim = simulate_hysteresis(
      params, sweep_rate, temperature, fit.b_start, fit.b_end, opts);
  double residual = 0.0;
  for (const auto& [b_target, h_target] : fit.target_steps) {
    double best_dist = fit.match_window;
    double height = 0.0;  // no step near the target counts as height 0
    for (const HysteresisStep& s : sim.step_records) {
      const double dist = std::abs(s.record.B0_star - b_target);
      if (dist <= best_dist) {
        best_dist = dist;
        height = s.magnetization_jump;
      }
    }
    residual += (height - h_target) * (height - h_target);
  }
  return residual;
}

FitResult fit_anisotropy_params(const FitConfig& fit, const SpinSystemParams& base,
                                double sweep_rate, double temperature) {
  if (fit.target_steps.size() < 3)
    throw ValidationError("fit_anisotropy_params: need at least 3 target steps");
  if (!(fit.simplex_xtol > 0.0) || !(fit.simplex_ftol > 0.0))
    throw ValidationError("fit_anisotropy_params: tolerances must be positive");
  if (fit.max_iterations < 1)
    throw ValidationError("fit_anisotropy_params: max_iterations must be >= 1");
  base.validate();

  // One catalog at the base parameters seeds every trial evaluation; the
  // per-trial re-centering inside simulate_hysteresis absorbs the (small)
  // crossing-field shifts caused by varying C, E, K.
  const std::vector<CrossingRecord> seed = build_crossing_catalog(
      base, std::max(0.0, fit.b_start), fit.b_end);
  if (seed.empty())
    throw ValidationError("fit_anisotropy_params: no crossings in fit window");

  const double scale_c = std::max(std::abs(fit.initial_C_over_kB), 1e-6);
  const double scale_e = std::max(std::abs(fit.initial_E_over_kB), 1e-4);
  const double scale_k = std::max(std::abs(fit.initial_K_coeff), 1e-3);

  auto objective = [&](const std::vector<double>& x) {
    SpinSystemParams trial = base;
    trial.C_over_kB = x[0] * scale_c;
    trial.E_over_kB = x[1] * scale_e;
    trial.K_coeff = x[2] * scale_k;
    try {
      return step_height_residual(fit, trial, sweep_rate, temperature, seed);
    } catch (const NumericalError&) {
      // A trial far enough off to break the reduction is simply a bad vertex.
      return 1e12;
    }
  };

  SimplexOptions sopts;
  sopts.xtol = fit.simplex_xtol;
  sopts.ftol = fit.simplex_ftol;
  sopts.max_iterations = fit.max_iterations;
  std::vector<double> x0 = {fit.initial_C_over_kB / scale_c,
                            fit.initial_E_over_kB / scale_e,
                            fit.initial_K_coeff / scale_k};

  // First run from the caller's guess, then restarts from the best point so
  // far with alternating tighter/wider simplexes.
  const double spreads[] = {0.15, 0.05, 0.45, 0.02, 1.0};
  SimplexResult best;
  int total_iterations = 0;
  const int runs = 1 + std::max(0, fit.restarts);
  for (int run = 0; run < runs; ++run) {
    const double spread = spreads[run % (sizeof(spreads) / sizeof(double))];
    const SimplexResult sr =
        nelder_mead(objective, x0, {spread, spread, spread}, sopts);
    total_iterations += sr.iterations;
    if (run == 0 || sr.fmin < best.fmin) best = sr;
    if (best.fmin == 0.0) break;
    x0 = best.x;
  }

  FitResult out;
  out.C_over_kB = best.x[0] * scale_c;
  out.E_over_kB = best.x[1] * scale_e;
  out.K_coeff = best.x[2] * scale_k;
  out.residual = best.fmin;
  out.iterations = total_iterations;
  out.converged = best.converged;
  return out;
}

}  // namespace spincavity
