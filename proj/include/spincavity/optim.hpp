#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "spincavity/errors.hpp"

namespace spincavity {

struct SimplexOptions {
  double xtol = 1e-8;  // max vertex distance from best, per coordinate
  double ftol = 1e-12; // max spread of objective values
  int max_iterations = 500;
};

struct SimplexResult {
  std::vector<double> x;
  double fmin = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Plain Nelder-Mead (reflection 1, expansion 2, contraction 1/2, shrink 1/2)
// on an n-dimensional objective. `steps` sets the initial simplex: vertex i
// displaces coordinate i of x0 by steps[i]. Deterministic; ties resolved by
// stable ordering. Returns the best vertex even when the iteration budget
// runs out (converged = false in that case).
inline SimplexResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                 const std::vector<double>& x0,
                                 const std::vector<double>& steps,
                                 const SimplexOptions& opts = {}) {
  const std::size_t n = x0.size();
  if (n == 0) throw ValidationError("nelder_mead: empty starting point");
  if (steps.size() != n) throw ValidationError("nelder_mead: steps size mismatch");
  for (double s : steps)
    if (!(s != 0.0) || !std::isfinite(s))
      throw ValidationError("nelder_mead: initial steps must be finite and nonzero");

  std::vector<std::vector<double>> xs(n + 1, x0);
  for (std::size_t i = 0; i < n; ++i) xs[i + 1][i] += steps[i];
  std::vector<double> fs(n + 1);
  for (std::size_t i = 0; i <= n; ++i) fs[i] = f(xs[i]);

  std::vector<std::size_t> order(n + 1);
  SimplexResult res;
  for (int iter = 0;; ++iter) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fs[a] < fs[b]; });
    const std::size_t best = order[0], worst = order[n], second = order[n - 1];

    res.x = xs[best];
    res.fmin = fs[best];
    res.iterations = iter;

    // A nonnegative objective cannot improve on an exact zero.
    if (fs[best] == 0.0) {
      res.converged = true;
      return res;
    }
    double fspread = fs[worst] - fs[best];
    double xspread = 0.0;
    for (std::size_t i = 0; i <= n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        xspread = std::max(xspread, std::abs(xs[i][j] - xs[best][j]));
    if (fspread <= opts.ftol && xspread <= opts.xtol) {
      res.converged = true;
      return res;
    }
    if (iter >= opts.max_iterations) return res;

    std::vector<double> centroid(n, 0.0);
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == worst) continue;
      for (std::size_t j = 0; j < n; ++j) centroid[j] += xs[i][j] / double(n);
    }
    auto blend = [&](double t) {
      std::vector<double> x(n);
      for (std::size_t j = 0; j < n; ++j)
        x[j] = centroid[j] + t * (xs[worst][j] - centroid[j]);
      return x;
    };

    std::vector<double> xr = blend(-1.0);
    double fr = f(xr);
    if (fr < fs[order[0]]) {
      std::vector<double> xe = blend(-2.0);
      double fe = f(xe);
      if (fe < fr) { xs[worst] = std::move(xe); fs[worst] = fe; }
      else         { xs[worst] = std::move(xr); fs[worst] = fr; }
    } else if (fr < fs[second]) {
      xs[worst] = std::move(xr);
      fs[worst] = fr;
    } else {
      const bool outside = fr < fs[worst];
      std::vector<double> xc = blend(outside ? -0.5 : 0.5);
      double fc = f(xc);
      if (fc < std::min(fr, fs[worst])) {
        xs[worst] = std::move(xc);
        fs[worst] = fc;
      } else {
        for (std::size_t i = 0; i <= n; ++i) {
          if (i == best) continue;
          for (std::size_t j = 0; j < n; ++j)
            xs[i][j] = xs[best][j] + 0.5 * (xs[i][j] - xs[best][j]);
          fs[i] = f(xs[i]);
        }
      }
    }
  }
}

}  // namespace spincavity
