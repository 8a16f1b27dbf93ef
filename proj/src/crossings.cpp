#include "spincavity/crossings.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spincavity/errors.hpp"

namespace spincavity {

namespace {

void validate_pair(int m, int m_prime, const SpinSystemParams& params) {
  params.validate();
  const int s = static_cast<int>(params.spin);
  if (std::abs(params.spin - s) > 1e-9) {
    throw ValidationError("crossing pairs are defined for integer spin only");
  }
  if (m == m_prime) throw ValidationError("crossing pair needs two distinct levels");
  if (m < -s || m > s || m_prime < -s || m_prime > s) {
    throw ValidationError("crossing pair labels must lie in [-S, S]");
  }
}

} // namespace

double crossing_field_h0(int m, int m_prime, const SpinSystemParams& params) {
  validate_pair(m, m_prime, params);
  const double sum = m + m_prime;
  const double sq = static_cast<double>(m) * m + static_cast<double>(m_prime) * m_prime;
  const double energy = -params.D() * sum * (1.0 + (params.F() / params.D()) * sq);
  return energy / params.mu_tilde();
}

TrackedPair track_pair(const SpinSystemParams& params, const SpinOperators& ops,
                       double B0, int m, int m_prime) {
  validate_pair(m, m_prime, params);
  const int s = static_cast<int>(params.spin);
  const int i_m = m + s;
  const int i_mp = m_prime + s;

  const EigenDecomposition d = eigh(build_hamiltonian(params, B0, ops));
  const int n = ops.dim;

  int best = -1, second = -1;
  double wbest = -1.0, wsecond = -1.0;
  for (int k = 0; k < n; ++k) {
    const double vm = d.eigenvectors(i_m, k);
    const double vp = d.eigenvectors(i_mp, k);
    const double w = vm * vm + vp * vp;
    if (w > wbest) {
      second = best;
      wsecond = wbest;
      best = k;
      wbest = w;
    } else if (w > wsecond) {
      second = k;
      wsecond = w;
    }
  }
  if (std::min(wbest, wsecond) < 0.5) {
    throw TrackingError("level tracking lost for pair (" + std::to_string(m) + "," +
                        std::to_string(m_prime) + ") at B0 = " + std::to_string(B0) +
                        " T: pair-span weight below 0.5; refine the field grid or window");
  }

  // Label by dominant |m> weight; ties break toward the lower eigenvalue index.
  const double wm_best = d.eigenvectors(i_m, best) * d.eigenvectors(i_m, best);
  const double wm_second = d.eigenvectors(i_m, second) * d.eigenvectors(i_m, second);
  int k_m = best, k_mp = second;
  if (wm_second > wm_best) std::swap(k_m, k_mp);

  TrackedPair out;
  out.index_m = k_m;
  out.index_m_prime = k_mp;
  out.energy_m = d.eigenvalues(k_m);
  out.energy_m_prime = d.eigenvalues(k_mp);
  out.weight_m = d.eigenvectors(i_m, k_m) * d.eigenvectors(i_m, k_m) +
                 d.eigenvectors(i_mp, k_m) * d.eigenvectors(i_mp, k_m);
  out.weight_m_prime = d.eigenvectors(i_m, k_mp) * d.eigenvectors(i_m, k_mp) +
                       d.eigenvectors(i_mp, k_mp) * d.eigenvectors(i_mp, k_mp);
  return out;
}

CrossingRecord scan_avoided_crossing(const SpinSystemParams& params, int m, int m_prime,
                                     double B_lo, double B_hi, const ScanOptions& opts) {
  validate_pair(m, m_prime, params);
  if (!(B_hi > B_lo)) throw ValidationError("scan window must satisfy B_lo < B_hi");
  if (!(opts.grid_step > 0.0) || !(opts.field_tol > 0.0)) {
    throw ValidationError("scan resolution and tolerance must be positive");
  }

  const SpinOperators ops = build_spin_operators(params.spin);
  auto gap = [&](double b) { return track_pair(params, ops, b, m, m_prime).gap(); };

  const int npts = std::max(5, static_cast<int>(std::ceil((B_hi - B_lo) / opts.grid_step)) + 1);
  const double step = (B_hi - B_lo) / (npts - 1);
  std::vector<double> g(npts);
  int imin = 0;
  for (int i = 0; i < npts; ++i) {
    g[i] = gap(B_lo + i * step);
    if (g[i] < g[imin]) imin = i;
  }
  if (imin == 0 || imin == npts - 1) {
    throw BracketingError("gap minimum for pair (" + std::to_string(m) + "," +
                          std::to_string(m_prime) + ") lies on the window boundary [" +
                          std::to_string(B_lo) + ", " + std::to_string(B_hi) + "] T");
  }

  // Golden-section shrink of [a, b] around the bracketed minimum.
  double a = B_lo + (imin - 1) * step;
  double b = B_lo + (imin + 1) * step;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = gap(x1);
  double f2 = gap(x2);
  while (b - a > opts.field_tol) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = gap(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = gap(x2);
    }
  }

  double b_star = 0.5 * (a + b);
  double delta0 = gap(b_star);

  // Vertex refinement on the squared gap: for an isolated two-level
  // anticrossing gap^2 = delta0^2 + slope^2 (B - B*)^2 exactly, so a
  // three-point parabola recovers B* and delta0 well below the
  // golden-section field tolerance.
  {
    const double h = std::max(1e-5, 10.0 * opts.field_tol);
    const double gm = gap(b_star - h);
    const double gp = gap(b_star + h);
    const double g_lo = gm * gm, g_mid = delta0 * delta0, g_hi = gp * gp;
    const double curv = g_lo - 2.0 * g_mid + g_hi;
    if (curv > 0.0) {
      const double shift = 0.5 * h * (g_lo - g_hi) / curv;
      if (std::abs(shift) <= h) {
        const double g_min = g_mid - (g_lo - g_hi) * (g_lo - g_hi) / (8.0 * curv);
        b_star += shift;
        delta0 = std::sqrt(std::max(g_min, 0.0));
      }
    }
  }

  const TrackedPair tp = track_pair(params, ops, b_star, m, m_prime);
  CrossingRecord rec;
  rec.m = m;
  rec.m_prime = m_prime;
  rec.B0_star = b_star;
  rec.delta0 = delta0;
  rec.epsilon0 = 0.5 * (tp.energy_m + tp.energy_m_prime);
  return rec;
}

LevelDiagram level_diagram(const SpinSystemParams& params, const std::vector<double>& B_grid) {
  params.validate();
  if (B_grid.empty()) throw ValidationError("level diagram needs at least one field point");
  const SpinOperators ops = build_spin_operators(params.spin);
  LevelDiagram out;
  out.field = B_grid;
  out.energies.resize(static_cast<int>(B_grid.size()), ops.dim);
  for (std::size_t i = 0; i < B_grid.size(); ++i) {
    const EigenDecomposition d = eigh(build_hamiltonian(params, B_grid[i], ops));
    out.energies.row(static_cast<int>(i)) = d.eigenvalues.transpose();
  }
  return out;
}

std::vector<CrossingRecord> build_crossing_catalog(const SpinSystemParams& params,
                                                   double B_min, double B_max,
                                                   const CatalogOptions& opts,
                                                   std::vector<SkippedPair>* skipped) {
  params.validate();
  if (!(B_max > B_min)) throw ValidationError("catalog field range must satisfy B_min < B_max");
  const int s = static_cast<int>(params.spin);

  std::vector<CrossingRecord> catalog;
  for (int m = -s; m < 0; ++m) {
    for (int mp = 1; mp <= s; ++mp) {
      if (m + mp > 0) continue; // crossing would sit at negative field
      const double b_pred = crossing_field_h0(m, mp, params);
      if (b_pred < B_min || b_pred > B_max) continue;

      double half = opts.window_halfwidth;
      bool done = false;
      std::string last_error;
      for (int attempt = 0; attempt <= opts.max_widenings && !done; ++attempt) {
        try {
          catalog.push_back(
              scan_avoided_crossing(params, m, mp, b_pred - half, b_pred + half, opts.scan));
          done = true;
        } catch (const NumericalError& e) {
          last_error = e.what();
          half *= 3.0;
        }
      }
      if (!done && skipped != nullptr) {
        skipped->push_back({m, mp, last_error});
      }
    }
  }
  std::sort(catalog.begin(), catalog.end(),
            [](const CrossingRecord& x, const CrossingRecord& y) { return x.B0_star < y.B0_star; });
  return catalog;
}

} // namespace spincavity
