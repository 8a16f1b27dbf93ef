#pragma once

#include <string>
#include <vector>

#include "spincavity/cavity_dynamics.hpp"
#include "spincavity/lzs.hpp"
#include "spincavity/spin_model.hpp"

namespace spincavity {

// Everything a run needs, resolved to concrete values. Parsed from a plain
// `key = value` config with one [section] per parameter group; every field
// has a default so an empty config plus a command is already runnable.
struct Scenario {
  std::string command;     // levels, crossings, hysteresis, fit, dynamics,
                           // maser, t0scan, peaks
  unsigned long seed = 0;  // deterministic jitter of the fit initial guess

  SpinSystemParams params;   // [spin]
  PhysicalContext physical;  // [physical]
  DynamicsConfig dynamics;   // [dynamics]
  // Derive gamma/kappa/v (and T0) from [physical] instead of taking them
  // from [dynamics].
  bool from_physical = false;
  // One trajectory per entry (dynamics command); empty = single run.
  std::vector<double> kappa_grid;

  // [levels]
  double levels_b_min = 0.0;
  double levels_b_max = 1.5;
  int levels_steps = 301;

  // [crossings]
  double crossings_b_min = 0.05;
  double crossings_b_max = 1.45;

  // [hysteresis]
  double hyst_sweep_rate = 0.03;  // tesla/second
  double hyst_temperature = 2.0;  // kelvin
  double hyst_b_start = -0.05;
  double hyst_b_end = 1.45;
  int hyst_grid_points = 1201;
  bool hyst_rethermalize = false;

  // [fit]; empty target_steps synthesize themselves from the current [spin]
  // parameters (three largest simulated steps) so the command is runnable
  // out of the box.
  FitConfig fit;
  double fit_sweep_rate = 3000.0;  // tesla/second
  double fit_temperature = 12.0;   // kelvin

  // [t0scan]; catalog is the inverted-pair family (m, -m-2), m_min..m_max.
  double t0scan_b0 = 1.4;
  double t0scan_t_min = 0.35;
  double t0scan_t_max = 2.0;
  int t0scan_t_steps = 100;
  int t0scan_m_min = -10;
  int t0scan_m_max = -6;
  double t0scan_total_density = 1e23;  // m^-3
  double t0scan_eta = 1.0;
  double t0scan_omega = 2e11;  // rad/s

  // [peaks]
  std::string peaks_mode = "coherent";  // or "rate"
  std::vector<double> peaks_v = {0.1, 0.2, 0.4};
};

// Strict line-based parser: `key = value`, `#` comments, `[section]` headers.
// Unknown sections/keys fail with the nearest valid name; malformed values
// fail with their line number. `cli_command` is the command given on the
// command line; a conflicting `command` key in the text is an error. Applies
// per-command defaults (e.g. the dynamics command defaults to the three-run
// kappa grid) before the text overrides them. Throws ValidationError.
Scenario parse_scenario(const std::string& text,
                        const std::string& cli_command = "");

// Full round-trip echo: every resolved value, one section per group.
// parse_scenario(serialize_scenario(s)) reproduces s exactly.
std::string serialize_scenario(const Scenario& s);

// Executes the scenario and writes its data files plus run_meta.txt into
// out_dir (created if missing). Data files are deterministic: rerunning the
// same scenario rewrites them byte-identically; run_meta.txt additionally
// carries wall time and integrator statistics. Returns the data file names.
// On failure every file this call created is removed and the error rethrown.
// Honors SPINCAVITY_THREADS as a cap on worker threads for grid commands.
std::vector<std::string> run_scenario(const Scenario& s,
                                      const std::string& out_dir);

}  // namespace spincavity
