#ifndef NDSH_EXPERIMENT_HPP
#define NDSH_EXPERIMENT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "ndsh/phantom.hpp"
#include "ndsh/pipeline.hpp"

namespace ndsh {

// Synthetic-sweep harness. The default parameters regenerate the fanning
// (26,730 voxels) and crossing (2,970 voxels) experiments on an HCP-like
// scheme of 18 b=0 volumes plus 90-direction shells at b = 1000/2000/3000.
struct ExperimentConfig {
  std::string type = "fanning";  // fanning | crossing | subsample
  std::string out_dir = ".";
  std::uint64_t seed = 20170803;
  double snr = 20.0;
  int noise_draws = 10;
  int workers = 1;

  // Phantom sweep.
  std::vector<double> kappas = {128.0, 32.0, 4.0};
  std::vector<double> beta_fractions = {0.0, 0.25, 0.5};  // beta = fraction * kappa
  std::vector<double> rotations_deg = {0.0, 60.0, 120.0};
  int orientation_count = 11;
  std::vector<double> crossing_angles_deg = {90.0, 60.0, 45.0};
  std::vector<double> nu_ic_values = {0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 1.0};
  int directions_per_population = 100;

  // Acquisition.
  int n_b0 = 18;
  std::vector<double> shell_bvalues = {1000.0, 2000.0, 3000.0};
  int directions_per_shell = 90;
  double tau = 0.0396;

  // Model.
  DiffusivitySet diff;
  int order = 8;
  int constraint_grid_count = 181;
  int search_grid_count = 3000;
  double qp_tol = 1e-8;
  PeakConfig peaks;
  DictionaryConfig dictionary;

  // Subsample experiment.
  std::vector<int> subsample_directions = {90, 60, 30};
  std::vector<double> subsample_max_b = {2000.0, 3000.0};
};

ExperimentConfig load_experiment_spec(const std::string& path);

// One synthetic voxel of a sweep.
struct SweepVoxel {
  PhantomVoxelSpec spec;
  double kappa = 0.0;
  double beta = 0.0;
  double rotation_deg = 0.0;
  int orientation = 0;
  double crossing_angle_deg = 0.0;  // 0 for fanning
  double nu_ic_gt = 0.0;
  int draw = 0;
};

// Deterministic enumerations; voxel seeds are root seed XOR voxel index.
std::vector<SweepVoxel> fanning_sweep(const ExperimentConfig& cfg);
std::vector<SweepVoxel> crossing_sweep(const ExperimentConfig& cfg);

// The 11-orientation set used by both sweeps.
std::vector<Vec3> sweep_orientations(int count);

struct FanningResult {
  struct Voxel {
    const SweepVoxel* condition;
    VolumeFractions estimate;
    double abs_err = 0.0;
  };
  std::vector<Voxel> voxels;
};

// The crossing protocol evaluates the fODF of both models, as the published
// angular-error comparison does: NODDI-SH deconvolves with the
// tortuosity-matched voxel kernel, FORECAST with its per-voxel estimated
// diffusivities.
struct CrossingResult {
  struct Voxel {
    const SweepVoxel* condition;
    VolumeFractions estimate;
    double abs_err = 0.0;
    double ae_noddish_deg = 0.0;
    int peaks_noddish = 0;
    bool converged_noddish = true;
    double ae_forecast_deg = 0.0;
    int peaks_forecast = 0;
    bool converged_forecast = true;
  };
  std::vector<Voxel> voxels;
};

// Synthesize + fit, fractions only (the fanning protocol).
FanningResult run_fanning(const ExperimentConfig& cfg, const std::vector<SweepVoxel>& sweep,
                          const AcquisitionScheme& scheme);

// Synthesize + fit with fODF and angular error (the crossing protocol).
CrossingResult run_crossing(const ExperimentConfig& cfg, const std::vector<SweepVoxel>& sweep,
                            const AcquisitionScheme& scheme);

// Full harness: regenerates the sweep named by cfg.type, fits, and writes
// voxel-level and summary CSV reports plus a human-readable summary.
void run_experiment(const ExperimentConfig& cfg);

// Stable text formatting used by every report writer (determinism contract).
std::string format_double(double v);

}  // namespace ndsh

#endif
