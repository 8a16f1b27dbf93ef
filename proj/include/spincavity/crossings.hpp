#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "spincavity/spin_model.hpp"

namespace spincavity {

// One avoided level crossing of the diabatic pair (m, m_prime).
struct CrossingRecord {
  int m = 0;
  int m_prime = 0;
  double B0_star = 0.0;  // tesla, field of minimal gap
  double delta0 = 0.0;   // joules, minimal gap (tunnel splitting)
  double epsilon0 = 0.0; // joules, mean of the two level energies at B0_star
};

// Crossing field of the diagonal part only:
//   mu_tilde * B0 = -D (m + m') (1 + (F/D)(m^2 + m'^2))
double crossing_field_h0(int m, int m_prime, const SpinSystemParams& params);

// The two adiabatic levels carrying the (m, m') diabatic character at field B0,
// identified by maximal eigenvector projection onto span{|m>, |m'>}.
struct TrackedPair {
  double energy_m = 0.0;       // joules, level with dominant |m> weight
  double energy_m_prime = 0.0; // joules, level with dominant |m'> weight
  int index_m = 0;             // eigenvalue index (ascending order)
  int index_m_prime = 0;
  double weight_m = 0.0;       // projection of that eigenvector onto the pair span
  double weight_m_prime = 0.0;
  double gap() const { return std::abs(energy_m - energy_m_prime); }
};

// Throws TrackingError if either tracked level keeps less than half of its
// weight inside the pair span (a third level is hybridizing in).
TrackedPair track_pair(const SpinSystemParams& params, const SpinOperators& ops,
                       double B0, int m, int m_prime);

struct ScanOptions {
  double grid_step = 1e-3;  // tesla, initial scan resolution
  double field_tol = 1e-6;  // tesla, golden-section termination
};

// Locates the minimal gap of the tracked pair inside [B_lo, B_hi].
// Throws BracketingError when the grid minimum sits on the window boundary.
CrossingRecord scan_avoided_crossing(const SpinSystemParams& params, int m, int m_prime,
                                     double B_lo, double B_hi, const ScanOptions& opts = {});

struct LevelDiagram {
  std::vector<double> field;  // tesla
  Eigen::MatrixXd energies;   // row i: ascending eigenvalues at field[i], joules
};

LevelDiagram level_diagram(const SpinSystemParams& params, const std::vector<double>& B_grid);

struct CatalogOptions {
  double window_halfwidth = 0.02; // tesla, initial half-width around the analytic field
  int max_widenings = 3;          // window grows 3x on bracketing failure
  ScanOptions scan = {};
};

struct SkippedPair {
  int m = 0;
  int m_prime = 0;
  std::string reason;
};

// All metastable-well crossings (m < 0, m' > 0) whose analytic field falls in
// [B_min, B_max]. Pairs whose scan fails after window widening are reported in
// `skipped` instead of aborting the catalog.
std::vector<CrossingRecord> build_crossing_catalog(const SpinSystemParams& params,
                                                   double B_min, double B_max,
                                                   const CatalogOptions& opts = {},
                                                   std::vector<SkippedPair>* skipped = nullptr);

} // namespace spincavity
