#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "spincavity/errors.hpp"

namespace spincavity {

struct OdeOptions {
  double rel_tol = 1e-9;
  double abs_tol = 1e-12;
  double max_step = 0.0;  // 0: only the remaining span caps the step
  long max_steps = 20000000;
};

struct IntegratorStats {
  long accepted = 0;
  long rejected = 0;
  long rhs_evals = 0;
};

namespace detail {

template <class State>
double scaled_rms(const State& err, const State& y0, const State& y1,
                  double abs_tol, double rel_tol) {
  double sum = 0.0;
  const int n = static_cast<int>(y0.size());
  for (int i = 0; i < n; ++i) {
    const double sc =
        abs_tol + rel_tol * std::max(std::abs(y0[i]), std::abs(y1[i]));
    const double q = err[i] / sc;
    sum += q * q;
  }
  return std::sqrt(sum / n);
}

}  // namespace detail

// Dormand-Prince 5(4) with PI step control and the standard quartic dense
// interpolant. Integrates y' = rhs(t, y) from t0 to t1 > t0, propagating the
// fifth-order solution; the embedded fourth-order formula drives the error
// estimate err = rms(e_i / (abs_tol + rel_tol*max(|y_i|, |y1_i|))). Every
// entry of sample_times (ascending, inside [t0, t1]) is delivered once to
// sink(t, y) through the interpolant, so output resolution never constrains
// the step size.
//
// Throws ValidationError on a bad span/tolerances/sample grid, StiffnessError
// when the step underflows (the estimate keeps rejecting down to rounding
// scale), and AccuracyError when the step budget is exhausted.
template <class State, class Rhs, class Sink>
IntegratorStats integrate_dopri5(Rhs&& rhs, State y, double t0, double t1,
                                 const std::vector<double>& sample_times,
                                 Sink&& sink, const OdeOptions& opts = {}) {
  if (!(t1 > t0) || !std::isfinite(t0) || !std::isfinite(t1))
    throw ValidationError("integration span must be finite with t1 > t0");
  if (!(opts.rel_tol > 0.0) || !(opts.abs_tol > 0.0))
    throw ValidationError("tolerances must be positive");
  const double span = t1 - t0;
  const double edge_slack = 1e-12 * std::max(1.0, std::abs(span));
  for (std::size_t i = 0; i < sample_times.size(); ++i) {
    if (sample_times[i] < t0 - edge_slack || sample_times[i] > t1 + edge_slack)
      throw ValidationError("sample time outside the integration span");
    if (i > 0 && !(sample_times[i] > sample_times[i - 1]))
      throw ValidationError("sample times must be strictly increasing");
  }

  // Butcher tableau (fifth-order weights double as the a7* row, FSAL).
  constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                   a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                   a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                   a65 = -5103.0 / 18656;
  constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                   b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  // Difference between the fifth- and fourth-order weights.
  constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                   e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
  // Dense-output coefficients of the quartic interpolant.
  constexpr double d1 = -12715105075.0 / 11282082432.0,
                   d3 = 87487479700.0 / 32700410799.0,
                   d4 = -10690763975.0 / 1880347072.0,
                   d5 = 701980252875.0 / 199316789632.0,
                   d6 = -1453857185.0 / 822651844.0,
                   d7 = 69997945.0 / 29380423.0;

  IntegratorStats stats;
  const double max_step = opts.max_step > 0.0 ? opts.max_step : span;

  State k1 = y, k2 = y, k3 = y, k4 = y, k5 = y, k6 = y, k7 = y;
  State y1 = y, yerr = y, ystage = y;

  double t = t0;
  rhs(t, y, k1);
  ++stats.rhs_evals;

  // Classic starting-step heuristic: match the scale of y'/y, then refine
  // with one explicit Euler probe of y''.
  double h;
  {
    double d0 = detail::scaled_rms(y, y, y, opts.abs_tol, opts.rel_tol);
    double dd1 = detail::scaled_rms(k1, y, y, opts.abs_tol, opts.rel_tol);
    double h0 = (d0 < 1e-5 || dd1 < 1e-5) ? 1e-6 : 0.01 * (d0 / dd1);
    h0 = std::min(h0, span);
    ystage = y + h0 * k1;
    rhs(t + h0, ystage, k2);
    ++stats.rhs_evals;
    yerr = k2 - k1;
    const double d2 =
        detail::scaled_rms(yerr, y, y, opts.abs_tol, opts.rel_tol) / h0;
    const double dmax = std::max(dd1, d2);
    const double h1 = dmax <= 1e-15 ? std::max(1e-6, h0 * 1e-3)
                                    : std::pow(0.01 / dmax, 0.2);
    h = std::min({100.0 * h0, h1, max_step, span});
    // Absurdly tight tolerances overflow the scaled norms (inf/inf -> NaN);
    // fall back to a plain fraction of the span and let rejection sort it out.
    if (!std::isfinite(h) || h <= 0.0) h = std::min(1e-3 * span, max_step);
  }

  std::size_t sample_idx = 0;
  // Samples that coincide with the start point.
  while (sample_idx < sample_times.size() &&
         sample_times[sample_idx] <= t + edge_slack) {
    sink(sample_times[sample_idx], y);
    ++sample_idx;
  }

  // PI controller constants (order 5, mild integral gain).
  constexpr double safety = 0.9, pi_beta = 0.04, expo1 = 0.2 - pi_beta * 0.75;
  constexpr double fac_min = 0.2, fac_max = 5.0;
  double fac_old = 1e-4;
  bool last_rejected = false;
  const double eps = std::numeric_limits<double>::epsilon();

  while (t1 - t > edge_slack) {
    if (stats.accepted + stats.rejected >= opts.max_steps)
      throw AccuracyError("step budget exhausted before reaching t1");
    h = std::min({h, max_step, t1 - t});
    // Negated comparison so a NaN step (unresolvable error scales) lands here
    // too instead of looping on rejections.
    if (!(h > 16.0 * eps * std::max(std::abs(t), std::abs(span))))
      throw StiffnessError("step size underflow at t=" + std::to_string(t));

    ystage = y + (h * a21) * k1;
    rhs(t + c2 * h, ystage, k2);
    ystage = y + h * (a31 * k1 + a32 * k2);
    rhs(t + c3 * h, ystage, k3);
    ystage = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    rhs(t + c4 * h, ystage, k4);
    ystage = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    rhs(t + c5 * h, ystage, k5);
    ystage = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    rhs(t + h, ystage, k6);
    y1 = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    rhs(t + h, y1, k7);
    stats.rhs_evals += 6;

    yerr = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double err = detail::scaled_rms(yerr, y, y1, opts.abs_tol, opts.rel_tol);

    if (!std::isfinite(err)) {
      ++stats.rejected;
      last_rejected = true;
      h *= 0.1;
      continue;
    }

    const double fac11 = std::pow(err, expo1);
    if (err <= 1.0) {
      // Accept; dense samples inside (t, t+h].
      if (sample_idx < sample_times.size() &&
          sample_times[sample_idx] <= t + h + edge_slack) {
        const State ydiff = y1 - y;
        const State bspl = h * k1 - ydiff;
        const State rcont4 = ydiff - h * k7 - bspl;
        const State rcont5 =
            h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
        while (sample_idx < sample_times.size() &&
               sample_times[sample_idx] <= t + h + edge_slack) {
          const double theta = (sample_times[sample_idx] - t) / h;
          const State u =
              y + theta * (ydiff +
                           (1.0 - theta) *
                               (bspl + theta * (rcont4 + (1.0 - theta) * rcont5)));
          sink(sample_times[sample_idx], u);
          ++sample_idx;
        }
      }
      ++stats.accepted;
      t += h;
      y = y1;
      k1 = k7;  // first-same-as-last
      double fac = fac11 / std::pow(fac_old, pi_beta);
      fac = std::clamp(fac / safety, 1.0 / fac_max, 1.0 / fac_min);
      double h_new = h / fac;
      if (last_rejected) h_new = std::min(h_new, h);
      fac_old = std::max(err, 1e-4);
      last_rejected = false;
      h = h_new;
    } else {
      ++stats.rejected;
      last_rejected = true;
      h = h / std::min(1.0 / fac_min, fac11 / safety);
    }
  }

  // Samples at (or within rounding of) the right endpoint.
  while (sample_idx < sample_times.size()) {
    sink(sample_times[sample_idx], y);
    ++sample_idx;
  }
  return stats;
}

}  // namespace spincavity
