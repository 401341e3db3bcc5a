#ifndef NDSH_PIPELINE_HPP
#define NDSH_PIPELINE_HPP

#include <optional>
#include <string>
#include <vector>

#include "ndsh/kernels.hpp"
#include "ndsh/peaks.hpp"
#include "ndsh/qp.hpp"
#include "ndsh/smt.hpp"
#include "ndsh/volume.hpp"

namespace ndsh {

struct FitConfig {
  KernelModel model = KernelModel::NoddiSh;
  int order = 8;
  int constraint_grid_count = 181;
  int search_grid_count = 3000;
  double qp_tol = 1e-8;
  bool with_fodf = true;          // false: volume fractions / diffusivities only
  DiffusivitySet diff;            // lambda_par (NODDI-SH kernel) and lambda_csf
  DictionaryConfig dictionary;
  PeakConfig peaks;
  int workers = 1;
};

struct VoxelFit {
  bool masked_out = false;   // zero b=0 mean or mask exclusion
  bool converged = true;
  VolumeFractions fractions;               // NODDI-SH path
  ForecastDiffusivities diffusivities;     // FORECAST path
  Eigen::VectorXd coeffs;                  // empty unless with_fodf
  PeakSet peaks;
  double mse = 0.0;
};

struct FitReport {
  std::array<int, 4> dims{0, 0, 0, 0};
  KernelModel model = KernelModel::NoddiSh;
  int order = 0;
  bool with_fodf = true;
  std::vector<VoxelFit> voxels;  // x-major voxel order
  double fit_seconds = 0.0;

  std::int64_t fitted_count() const;
  double mean_mse() const;
};

// Per-voxel fit over a whole volume. When eval_volume/eval_scheme are given
// (the subsampling protocol), the MSE is computed against that full signal;
// otherwise against the fitted samples. Output is independent of worker count.
FitReport fit_volume(const VolumeContainer& volume, const AcquisitionScheme& scheme,
                     const FitConfig& config, const VolumeContainer* mask = nullptr,
                     const VolumeContainer* eval_volume = nullptr,
                     const AcquisitionScheme* eval_scheme = nullptr);

// Writes fraction/diffusivity maps, the SH coefficient volume, the MSE map,
// and the peak list next to `basepath` with fixed suffixes.
void write_fit_outputs(const FitReport& report, const std::string& basepath);

// Mean diffusion-tensor eigenvalues over voxels with FA above the threshold,
// fitted by weighted log-linear least squares on the lowest b > 0 shell.
// Falls back to (1.7e-3, 0.1e-3) when no voxel qualifies.
DiffusivitySet estimate_response(const VolumeContainer& volume, const AcquisitionScheme& scheme,
                                 double fa_threshold = 0.8, bool* used_fallback = nullptr);

}  // namespace ndsh

#endif
