#include "spincavity/reduction.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "spincavity/constants.hpp"
#include "spincavity/errors.hpp"

namespace spincavity {

namespace {

int label_index(double m, int dim) {
  const double spin = 0.5 * (dim - 1);
  const int i = static_cast<int>(std::lround(m + spin));
  if (std::abs(m + spin - i) > 1e-9 || i < 0 || i >= dim) {
    throw ValidationError("m label " + std::to_string(m) +
                          " outside the basis of dimension " + std::to_string(dim));
  }
  return i;
}

// Symmetric positive definite 2x2 inverse square root. Guards distinguish a
// numerically singular overlap from one merely too weak for a clean block.
Eigen::Matrix2d invsqrt2x2(const Eigen::Matrix2d& g) {
  const double half_angle = 0.5 * std::atan2(2.0 * g(0, 1), g(0, 0) - g(1, 1));
  const double c = std::cos(half_angle), s = std::sin(half_angle);
  const double mean = 0.5 * (g(0, 0) + g(1, 1));
  const double span = std::hypot(0.5 * (g(0, 0) - g(1, 1)), g(0, 1));
  const double l1 = mean + span, l2 = mean - span;
  if (l2 < 1e-6) {
    throw ProjectionMismatchError(
        "pair projector overlap is singular (smallest eigenvalue " +
        std::to_string(l2) + ")");
  }
  if (l2 < 0.25) {
    throw ReductionError("pair overlap eigenvalue " + std::to_string(l2) +
                         " below 0.25; adiabatic states stray from the pair span");
  }
  Eigen::Matrix2d rot;
  rot << c, -s, s, c;
  return rot * Eigen::Vector2d(1.0 / std::sqrt(l1), 1.0 / std::sqrt(l2)).asDiagonal() *
         rot.transpose();
}

} // namespace

Eigen::MatrixXd vanvleck_unitary(const Eigen::MatrixXd& hamiltonian, double m,
                                 double m_prime) {
  const int n = static_cast<int>(hamiltonian.rows());
  const int ia = label_index(m, n);
  const int ib = label_index(m_prime, n);
  if (ia == ib) throw ValidationError("pair labels coincide");

  const EigenDecomposition ed = eigh(hamiltonian);
  const Eigen::MatrixXd& v = ed.eigenvectors;

  // Weight of each adiabatic state in the unperturbed pair span.
  std::vector<int> order(n);
  std::vector<double> weight(n);
  for (int k = 0; k < n; ++k) {
    order[k] = k;
    weight[k] = v(ia, k) * v(ia, k) + v(ib, k) * v(ib, k);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](int p, int q) { return weight[p] > weight[q]; });
  const int k1 = order[0], k2 = order[1];
  if (weight[order[2]] > 0.25) {
    throw ReductionError(
        "third level carries weight " + std::to_string(weight[order[2]]) +
        " in the pair span; the crossing is not two-level");
  }

  // Pair part: with A(a,k) = <a|v_k>, the block rows of U are
  // (A A^T)^{-1/2} A [v_k1 v_k2]^T, the polar-orthogonal factor of A.
  Eigen::Matrix2d a;
  a << v(ia, k1), v(ia, k2), v(ib, k1), v(ib, k2);
  const Eigen::Matrix2d g = a * a.transpose();
  const Eigen::Matrix2d b = invsqrt2x2(g) * a;

  // Complement part: same formula on the remaining rows and columns of V.
  Eigen::MatrixXd ac(n - 2, n - 2);
  std::vector<int> rows_c, cols_c;
  rows_c.reserve(n - 2);
  cols_c.reserve(n - 2);
  for (int i = 0; i < n; ++i)
    if (i != ia && i != ib) rows_c.push_back(i);
  for (int k = 0; k < n; ++k)
    if (k != k1 && k != k2) cols_c.push_back(k);
  for (int p = 0; p < n - 2; ++p)
    for (int q = 0; q < n - 2; ++q) ac(p, q) = v(rows_c[p], cols_c[q]);

  const EigenDecomposition gc = eigh(ac * ac.transpose());
  if (gc.eigenvalues(0) < 1e-6) {
    throw ProjectionMismatchError(
        "complement projector overlap is singular (smallest eigenvalue " +
        std::to_string(gc.eigenvalues(0)) + ")");
  }
  if (gc.eigenvalues(0) < 0.25) {
    throw ReductionError(
        "complement overlap eigenvalue " + std::to_string(gc.eigenvalues(0)) +
        " below 0.25; pair states leak into the complement");
  }
  Eigen::VectorXd inv_sqrt = gc.eigenvalues.cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd bc =
      gc.eigenvectors * inv_sqrt.asDiagonal() * gc.eigenvectors.transpose() * ac;

  Eigen::MatrixXd u(n, n);
  u.row(ia) = b(0, 0) * v.col(k1).transpose() + b(0, 1) * v.col(k2).transpose();
  u.row(ib) = b(1, 0) * v.col(k1).transpose() + b(1, 1) * v.col(k2).transpose();
  for (int p = 0; p < n - 2; ++p) {
    u.row(rows_c[p]).setZero();
    for (int q = 0; q < n - 2; ++q)
      u.row(rows_c[p]) += bc(p, q) * v.col(cols_c[q]).transpose();
  }

  const double ortho = (u * u.transpose() - Eigen::MatrixXd::Identity(n, n))
                           .cwiseAbs()
                           .maxCoeff();
  if (ortho > 1e-10) {
    throw ReductionError("block transform lost orthogonality, ||UU^T - I|| = " +
                         std::to_string(ortho));
  }
  const Eigen::MatrixXd t = u * hamiltonian * u.transpose();
  double residual = 0.0;
  for (int i : {ia, ib})
    for (int j : rows_c) residual = std::max(residual, std::abs(t(i, j)));
  if (residual > 1e-8 * hamiltonian.norm()) {
    throw ReductionError("pair block not decoupled, residual " +
                         std::to_string(residual));
  }
  return u;
}

Couplings effective_coupling(const SpinOperators& ops, const Eigen::MatrixXd& u,
                             double m, double m_prime) {
  const int n = static_cast<int>(u.rows());
  const int ia = label_index(m, n);
  const int ib = label_index(m_prime, n);

  const Eigen::VectorXd ua = u.row(ia).transpose();
  const Eigen::VectorXd ub = u.row(ib).transpose();
  // Sy = i Q with Q real antisymmetric, so dressed-diagonal Sy vanishes and
  // only Sx contributes to s'.
  const double sx_off = ua.dot(ops.sx * ub);
  const double q_off = ua.dot(ops.sy_over_i * ub);
  const double sx_aa = ua.dot(ops.sx * ua);
  const double sx_bb = ub.dot(ops.sx * ub);

  Couplings c;
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  c.s = std::complex<double>(sx_off, q_off) * inv_sqrt2;
  c.s_prime = 0.5 * (sx_aa - sx_bb) * inv_sqrt2;
  c.psi = (std::abs(c.s) > 0.0) ? std::arg(c.s) : 0.0;
  return c;
}

EffectiveTwoLevel effective_two_level(const SpinSystemParams& params,
                                      const CrossingRecord& record,
                                      double sweep_rate_tesla_per_s) {
  params.validate();
  const SpinOperators ops = build_spin_operators(params.spin);
  const double m = record.m, mp = record.m_prime;
  const int n = ops.dim;
  const int ia = label_index(m, n);
  const int ib = label_index(mp, n);

  struct Block {
    Eigen::MatrixXd u;
    double h_aa, h_bb, h_ab;
  };
  auto block_at = [&](double b0) {
    const Eigen::MatrixXd h = build_hamiltonian(params, b0, ops);
    Block blk;
    blk.u = vanvleck_unitary(h, m, mp);
    const Eigen::VectorXd ua = blk.u.row(ia).transpose();
    const Eigen::VectorXd ub = blk.u.row(ib).transpose();
    const Eigen::VectorXd hub = h * ub;
    blk.h_aa = ua.dot(h * ua);
    blk.h_bb = ub.dot(hub);
    blk.h_ab = ua.dot(hub);
    return blk;
  };

  // The dressed diagonal splitting is affine in B0 with slope mu~ (m' - m)
  // to high accuracy, so Newton iteration re-centers the crossing quickly.
  const double slope = params.mu_tilde() * (mp - m);
  double b0 = record.B0_star;
  Block blk = block_at(b0);
  for (int iter = 0; iter < 50; ++iter) {
    const double diff = blk.h_aa - blk.h_bb;
    if (std::abs(diff) <= std::max(2e-7 * std::abs(blk.h_ab), 1e-32)) break;
    const double step = -diff / slope;
    b0 += step;
    if (std::abs(b0 - record.B0_star) > 0.05) {
      throw ReductionError("crossing re-centering diverged for pair (" +
                           std::to_string(record.m) + "," +
                           std::to_string(record.m_prime) + ")");
    }
    blk = block_at(b0);
    if (std::abs(step) < 1e-16 * (1.0 + std::abs(b0))) break;
  }

  EffectiveTwoLevel out;
  out.m = record.m;
  out.m_prime = record.m_prime;
  out.B0_star = b0;
  out.epsilon0 = 0.5 * (blk.h_aa + blk.h_bb);
  out.delta0 = std::complex<double>(2.0 * blk.h_ab, 0.0);
  out.w_rate = params.mu_tilde() * (mp - m) * sweep_rate_tesla_per_s;
  const Couplings c = effective_coupling(ops, blk.u, m, mp);
  out.s = c.s;
  out.s_prime = c.s_prime;
  out.psi = c.psi;
  return out;
}

} // namespace spincavity
