#include "spincavity/spin_model.hpp"

#include <cmath>
#include <complex>
#include <numeric>
#include <vector>

#include "spincavity/errors.hpp"

namespace spincavity {

void SpinSystemParams::validate() const {
  if (!(spin > 0.0) || !std::isfinite(spin)) {
    throw ValidationError("spin must be positive and finite");
  }
  const double twice = 2.0 * spin;
  if (std::abs(twice - std::round(twice)) > 1e-9) {
    throw ValidationError("2*spin must be an integer (integer or half-integer spin)");
  }
  if (dim() < 2) {
    throw ValidationError("spin system needs at least two levels");
  }
  if (!(g_factor > 0.0)) {
    throw ValidationError("g_factor must be positive");
  }
}

SpinOperators build_spin_operators(double spin) {
  SpinSystemParams probe;
  probe.spin = spin;
  probe.validate();

  const int n = probe.dim();
  SpinOperators ops;
  ops.dim = n;
  ops.spin = spin;
  ops.sz = Eigen::MatrixXd::Zero(n, n);
  ops.splus = Eigen::MatrixXd::Zero(n, n);

  for (int i = 0; i < n; ++i) {
    const double m = -spin + i;
    ops.sz(i, i) = m;
    if (i + 1 < n) {
      // <m+1| S+ |m> = sqrt(S(S+1) - m(m+1))
      ops.splus(i + 1, i) = std::sqrt(spin * (spin + 1.0) - m * (m + 1.0));
    }
  }
  ops.sminus = ops.splus.transpose();
  ops.sx = 0.5 * (ops.splus + ops.sminus);
  ops.sy_over_i = 0.5 * (ops.sminus - ops.splus); // Sy = i * sy_over_i
  ops.sy = std::complex<double>(0.0, 1.0) * ops.sy_over_i.cast<std::complex<double>>();
  return ops;
}

Eigen::MatrixXd build_hamiltonian(const SpinSystemParams& params, double B0,
                                  const SpinOperators& ops) {
  params.validate();
  if (ops.dim != params.dim()) {
    throw ValidationError("spin operators do not match the parameter set dimension");
  }
  const Eigen::MatrixXd sz2 = ops.sz * ops.sz;
  const Eigen::MatrixXd sp2 = ops.splus * ops.splus;
  const Eigen::MatrixXd sp4 = sp2 * sp2;

  Eigen::MatrixXd h = -params.D() * sz2 - params.F() * sz2 * sz2 -
                      params.mu_tilde() * B0 * ops.sz;
  h += params.C() * (sp4 + sp4.transpose());
  h += 0.5 * params.E() * (sp2 + sp2.transpose());
  h += 0.5 * params.K(B0) * (ops.splus + ops.sminus);
  return h;
}

Eigen::MatrixXd build_hamiltonian(const SpinSystemParams& params, double B0) {
  return build_hamiltonian(params, B0, build_spin_operators(params.spin));
}

namespace {

double offdiag_norm(const Eigen::MatrixXd& a) {
  double s = 0.0;
  for (int p = 0; p < a.rows(); ++p) {
    for (int q = p + 1; q < a.cols(); ++q) {
      s += a(p, q) * a(p, q);
    }
  }
  return std::sqrt(2.0 * s);
}

} // namespace

EigenDecomposition eigh(const Eigen::MatrixXd& A) {
  const int n = static_cast<int>(A.rows());
  if (n == 0 || A.cols() != n) {
    throw ValidationError("eigh requires a non-empty square matrix");
  }
  const double scale = A.cwiseAbs().maxCoeff();
  if (scale > 0.0) {
    const double asym = (A - A.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-10 * scale) {
      throw ValidationError("eigh requires a symmetric matrix (relative asymmetry above 1e-10)");
    }
  }

  Eigen::MatrixXd a = 0.5 * (A + A.transpose()); // symmetrize roundoff
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  const double norm_f = a.norm();
  const double threshold = 1e-14 * norm_f;

  int sweeps = 0;
  if (n > 1 && norm_f > 0.0) {
    const int max_sweeps = 100;
    for (sweeps = 0; sweeps < max_sweeps; ++sweeps) {
      if (offdiag_norm(a) <= threshold) break;
      for (int p = 0; p < n - 1; ++p) {
        for (int q = p + 1; q < n; ++q) {
          const double apq = a(p, q);
          if (apq == 0.0) continue;
          // Skip rotations that cannot change the diagonal at working precision.
          if (std::abs(apq) < 1e-300) {
            a(p, q) = a(q, p) = 0.0;
            continue;
          }
          const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
          double t;
          if (std::abs(theta) > 1e154) {
            t = 0.5 / theta;
          } else {
            t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
            if (theta < 0.0) t = -t;
          }
          const double c = 1.0 / std::sqrt(t * t + 1.0);
          const double s = t * c;
          const double tau = s / (1.0 + c);
          const double app = a(p, p);
          const double aqq = a(q, q);
          a(p, p) = app - t * apq;
          a(q, q) = aqq + t * apq;
          a(p, q) = a(q, p) = 0.0;
          for (int k = 0; k < n; ++k) {
            if (k == p || k == q) continue;
            const double akp = a(k, p);
            const double akq = a(k, q);
            a(k, p) = akp - s * (akq + tau * akp);
            a(p, k) = a(k, p);
            a(k, q) = akq + s * (akp - tau * akq);
            a(q, k) = a(k, q);
          }
          for (int k = 0; k < n; ++k) {
            const double vkp = v(k, p);
            const double vkq = v(k, q);
            v(k, p) = vkp - s * (vkq + tau * vkp);
            v(k, q) = vkq + s * (vkp - tau * vkq);
          }
        }
      }
    }
    if (offdiag_norm(a) > threshold) {
      throw NumericalError("eigh: Jacobi sweeps did not converge below the off-diagonal threshold");
    }
  }

  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&a](int i, int j) { return a(i, i) < a(j, j); });

  EigenDecomposition out;
  out.eigenvalues.resize(n);
  out.eigenvectors.resize(n, n);
  out.sweeps = sweeps;
  for (int k = 0; k < n; ++k) {
    out.eigenvalues(k) = a(idx[k], idx[k]);
    out.eigenvectors.col(k) = v.col(idx[k]);
    // Sign convention: largest-magnitude component positive.
    int imax = 0;
    out.eigenvectors.col(k).cwiseAbs().maxCoeff(&imax);
    if (out.eigenvectors(imax, k) < 0.0) out.eigenvectors.col(k) = -out.eigenvectors.col(k);
  }
  return out;
}

} // namespace spincavity
