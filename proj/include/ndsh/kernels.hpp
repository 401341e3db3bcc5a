#ifndef NDSH_KERNELS_HPP
#define NDSH_KERNELS_HPP

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "ndsh/sh.hpp"

namespace ndsh {

inline constexpr int kMaxKernelOrder = 8;  // Psi_l closed forms end at l = 8
inline constexpr double kSqrt4Pi = 3.5449077018110320545963349666823;  // sqrt(4 pi)
inline constexpr double kC00 = 1.0 / kSqrt4Pi;  // fixed isotropic fODF coefficient
inline constexpr double kBZeroShellWidth = 50.0;  // s/mm^2; b below this is b=0

// Single-fiber response diffusivities, mm^2/s.
struct DiffusivitySet {
  double lambda_par = 1.7e-3;
  double lambda_perp = 0.1e-3;
  double lambda_csf = 3.0e-3;
};

void validate(const DiffusivitySet& d);

struct VolumeFractions {
  double nu_ic = 0.0;
  double nu_ec = 0.0;
  double nu_csf = 0.0;

  double sum() const { return nu_ic + nu_ec + nu_csf; }
};

void validate(const VolumeFractions& f, double tol = 1e-9);

// lambda_perp = lambda_par * nu_ec / (nu_ec + nu_ic); 0 when both fractions vanish.
double tortuosity_lambda_perp(double lambda_par, const VolumeFractions& f);

// Multi-shell sampling scheme. Shell ids label groups of equal nominal b-value,
// ascending in b; samples with b < kBZeroShellWidth are stored as exact b = 0.
struct AcquisitionScheme {
  std::vector<Vec3> directions;   // unit for b > 0; zero vectors allowed at b = 0
  std::vector<double> bvalues;    // s/mm^2
  std::vector<int> shell_ids;     // index into shell_bvalues
  std::vector<double> shell_bvalues;  // nominal b per shell, ascending
  double tau = 0.0396;            // effective diffusion time, seconds

  int sample_count() const { return static_cast<int>(bvalues.size()); }
  int shell_count() const { return static_cast<int>(shell_bvalues.size()); }
  std::vector<std::vector<int>> shell_sample_lists() const;
  std::vector<double> nonzero_shell_bvalues() const;
};

// Clusters b-values into shells (within kBZeroShellWidth of a shell's nominal
// value) and normalizes b>0 directions to exact unit length.
AcquisitionScheme make_scheme(std::vector<Vec3> directions, std::vector<double> bvalues,
                              double tau = 0.0396);

// Phi_l(xi) = integral of t^l exp(-xi t^2) over [-1, 1], l in {0,2,4,6,8}.
double phi_l(int l, double xi);

// Psi_l(xi) = integral of P_l(t) exp(-xi t^2) over [-1, 1]; Legendre-weighted
// combination of the Phi_l.
double psi_l(int l, double xi);

enum class KernelModel { Forecast, NoddiSh };

// Maps SH fODF coefficients to predicted normalized signal, one row per sample.
// Any b = 0 row is exactly sqrt(4 pi) * e_0, so c00 = 1/sqrt(4 pi) gives E = 1.
struct SignalBasisMatrix {
  Eigen::MatrixXd values;
  int order = 0;
  KernelModel model = KernelModel::Forecast;
  DiffusivitySet diff;
  VolumeFractions fractions;  // meaningful for NoddiSh only
};

SignalBasisMatrix forecast_basis(const AcquisitionScheme& scheme, const DiffusivitySet& diff,
                                 int order);

SignalBasisMatrix noddish_basis(const AcquisitionScheme& scheme, const DiffusivitySet& diff,
                                const VolumeFractions& fractions, int order);

// Same bases built from a precomputed eval_sh(order, scheme directions) matrix;
// rows at b = 0 samples may hold arbitrary values in `sh`. Used by the batch
// pipeline to avoid re-evaluating the SH matrix per voxel.
SignalBasisMatrix forecast_basis_from_sh(const AcquisitionScheme& scheme,
                                         const Eigen::MatrixXd& sh, const DiffusivitySet& diff,
                                         int order);
SignalBasisMatrix noddish_basis_from_sh(const AcquisitionScheme& scheme,
                                        const Eigen::MatrixXd& sh, const DiffusivitySet& diff,
                                        const VolumeFractions& fractions, int order);

inline Eigen::VectorXd predict_signal(const SignalBasisMatrix& basis, const Eigen::VectorXd& c) {
  return basis.values * c;
}

}  // namespace ndsh

#endif
