#ifndef NDSH_QP_HPP
#define NDSH_QP_HPP

#include <Eigen/Dense>
#include <span>

#include "ndsh/kernels.hpp"
#include "ndsh/sh.hpp"

namespace ndsh {

// fODF SH coefficients with the probability-mass constraint baked in:
// c00 is always exactly 1/sqrt(4 pi).
struct FodfCoefficients {
  Eigen::VectorXd coeffs;
  int order = 0;
};

struct QpSolution {
  FodfCoefficients coeffs;
  double residual_norm = 0.0;   // ||signal - M c||_2
  double kkt_residual = 0.0;    // max of stationarity / feasibility / complementarity violation
  int iterations = 0;
  bool converged = false;
};

// Solves  min_c ||signal - M c||^2  subject to  Y c >= 0 on the constraint
// grid and c00 = 1/sqrt(4 pi). The equality is eliminated by substitution and
// the remaining inequality-constrained least-squares problem is solved exactly
// as a least-distance program via non-negative least squares.
QpSolution fit_fodf(std::span<const double> signal, const SignalBasisMatrix& basis,
                    const SphericalGrid& constraint_grid, double tol = 1e-8);

// Same problem with an externally supplied constraint matrix (rows =
// eval_sh(order, grid directions)); lets batch callers reuse one grid matrix.
QpSolution fit_fodf_with_constraints(std::span<const double> signal,
                                     const SignalBasisMatrix& basis,
                                     const Eigen::MatrixXd& constraint_sh, double tol = 1e-8);

// Lawson-Hanson non-negative least squares:  min ||A x - b||  s.t.  x >= 0.
// Exposed because it is also the backbone of the least-distance step.
struct NnlsResult {
  Eigen::VectorXd x;
  int iterations = 0;
  bool converged = false;
};

NnlsResult nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, int max_iterations = 0);

}  // namespace ndsh

#endif
