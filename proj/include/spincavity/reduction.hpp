#pragma once

#include <complex>

#include <Eigen/Dense>

#include "spincavity/crossings.hpp"
#include "spincavity/spin_model.hpp"

namespace spincavity {

// Orthogonal transform that decouples one avoided-crossing pair from the
// rest of the spectrum: U = sum_a (P0_a P_a P0_a)^{-1/2} P0_a P_a, where
// P0_a projects onto the unperturbed pair span (resp. its complement) and
// P_a onto the corresponding adiabatic eigenvectors. Rows of U are the
// dressed basis states, so U H U^T is block diagonal with an exact 2x2
// {m, m'} block carrying the same two eigenvalues as H.
//
// Throws ReductionError when a third level carries more than 25% weight in
// the pair span (the pair block is no longer two-level), and
// ProjectionMismatchError when the overlap between the selected eigenvectors
// and the pair span is numerically singular.
Eigen::MatrixXd vanvleck_unitary(const Eigen::MatrixXd& hamiltonian, double m,
                                 double m_prime);

struct Couplings {
  std::complex<double> s;  // off-diagonal element of (Sx~ + Sy~)/sqrt(2)
  double s_prime = 0.0;    // half the diagonal difference of that operator
  double psi = 0.0;        // arg(s), 0 when s vanishes
};

// Matrix elements of the dressed transverse spin operator between the two
// dressed pair states. Row convention: s is the (m, m') element.
Couplings effective_coupling(const SpinOperators& ops, const Eigen::MatrixXd& u,
                             double m, double m_prime);

struct EffectiveTwoLevel {
  int m = 0;
  int m_prime = 0;
  double B0_star = 0.0;    // field where the dressed diagonal is degenerate
  double epsilon0 = 0.0;   // mean of the block diagonal, joules
  std::complex<double> delta0{0.0, 0.0};  // 2x block off-diagonal; |delta0| = gap
  double w_rate = 0.0;     // d(diabatic splitting)/dt at the sweep rate, J/s
  std::complex<double> s{0.0, 0.0};
  double s_prime = 0.0;
  double psi = 0.0;
};

// Re-centers the crossing field for `params` starting from record.B0_star
// (the record may come from a catalog built with different anisotropy
// values), then reads epsilon0, delta0 and the spin couplings off the
// dressed block. Unlike the scanned minimal gap, the block off-diagonal
// resolves splittings far below the eigenvalue-difference noise floor.
EffectiveTwoLevel effective_two_level(const SpinSystemParams& params,
                                      const CrossingRecord& record,
                                      double sweep_rate_tesla_per_s);

}  // namespace spincavity
