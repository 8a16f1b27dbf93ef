#pragma once

#include <Eigen/Dense>

#include "spincavity/constants.hpp"

namespace spincavity {

// Giant-spin parameters for an Mn12-acetate style molecule. Anisotropy
// constants are stored in kelvin (divided by k_B) as usually quoted;
// accessors convert to joules. The transverse field-induced term is
// K = K_coeff * mu_tilde * B0 with mu_tilde = g * mu_B.
struct SpinSystemParams {
  double spin = 10.0;
  double D_over_kB = 0.56;      // K, axial, -D Sz^2
  double F_over_kB = 1.1e-3;    // K, quartic axial, -F Sz^4
  double C_over_kB = 1.36e-5;   // K, C (S+^4 + S-^4)
  double E_over_kB = -4.48e-3;  // K, (E/2)(S+^2 + S-^2)
  double K_coeff = 0.025;       // dimensionless, K = K_coeff * mu_tilde * B0
  double g_factor = 2.0;

  int dim() const { return static_cast<int>(2.0 * spin + 1.5); }
  double D() const { return D_over_kB * constants::k_boltzmann; }
  double F() const { return F_over_kB * constants::k_boltzmann; }
  double C() const { return C_over_kB * constants::k_boltzmann; }
  double E() const { return E_over_kB * constants::k_boltzmann; }
  double mu_tilde() const { return g_factor * constants::bohr_magneton; }
  double K(double B0) const { return K_coeff * mu_tilde() * B0; }

  // Throws ValidationError unless 2*spin is a positive integer and dim >= 2.
  void validate() const;
};

// Dense spin matrices in the |m> basis, m = -S..S ascending (index i <-> m = i - S).
// All matrices except Sy are real; Sy = (S+ - S-)/(2i) is purely imaginary.
struct SpinOperators {
  int dim = 0;
  double spin = 0.0;
  Eigen::MatrixXd sz;
  Eigen::MatrixXd splus;
  Eigen::MatrixXd sminus;
  Eigen::MatrixXd sx;
  Eigen::MatrixXcd sy;
  // Real matrix Q with Sy = i*Q; convenient for purely real pipelines.
  Eigen::MatrixXd sy_over_i;
};

SpinOperators build_spin_operators(double spin);

// H = -D Sz^2 - F Sz^4 - mu_tilde B0 Sz
//     + C (S+^4 + S-^4) + (E/2)(S+^2 + S-^2) + (K/2)(S+ + S-),   [joules]
// Real symmetric in the chosen basis.
Eigen::MatrixXd build_hamiltonian(const SpinSystemParams& params, double B0);
Eigen::MatrixXd build_hamiltonian(const SpinSystemParams& params, double B0,
                                  const SpinOperators& ops);

struct EigenDecomposition {
  Eigen::VectorXd eigenvalues;  // ascending
  Eigen::MatrixXd eigenvectors; // column k belongs to eigenvalues[k], orthonormal
  int sweeps = 0;
};

// Cyclic Jacobi diagonalization of a real symmetric matrix. Columns are sign-fixed
// so the largest-magnitude component of each eigenvector is positive. Throws
// ValidationError for non-square/non-symmetric input, NumericalError if the
// off-diagonal norm fails to fall below 1e-14*||A||_F within 100 sweeps.
EigenDecomposition eigh(const Eigen::MatrixXd& A);

} // namespace spincavity
