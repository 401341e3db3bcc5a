#ifndef NDSH_SMT_HPP
#define NDSH_SMT_HPP

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "ndsh/kernels.hpp"

namespace ndsh {

// Per-shell arithmetic means of the normalized signal, shells ascending in b.
struct ShellMeans {
  std::vector<double> bvalues;
  std::vector<double> means;
  bool normalization_warning = false;  // b=0 mean differs from 1 by more than 0.5

  int nonzero_count() const {
    int n = 0;
    for (double b : bvalues)
      if (b > 0.0) ++n;
    return n;
  }
};

ShellMeans shell_means(std::span<const double> signal, const AcquisitionScheme& scheme);

// Volume-fraction dictionary: for each nu_csf level the number of
// (nu_ic, nu_ec) splits is proportional to 1 - nu_csf. The defaults
// (16 levels, 47.75 splits per unit of 1 - nu_csf) produce exactly 383 entries.
struct DictionaryConfig {
  int csf_levels = 16;
  double splits_per_unit = 47.75;
};

struct FractionDictionary {
  std::vector<VolumeFractions> entries;      // ascending nu_csf, then ascending nu_ic
  Eigen::MatrixXd predicted_means;           // n_entries x n_bvalues; empty until tabulated
  std::vector<double> bvalues;               // b grid of predicted_means
  DiffusivitySet diff;                       // diffusivities used for tabulation
};

FractionDictionary build_dictionary(const DictionaryConfig& config = {});

// Fills predicted_means with Eq.-of-the-mean values on the given b grid.
void tabulate_dictionary(FractionDictionary& dict, const DiffusivitySet& diff,
                         std::span<const double> bvalues);

// Mean diffusion signal at one b-value for a three-compartment voxel; the
// extracellular lambda_perp follows the tortuosity rule.
double predict_mean(const VolumeFractions& fractions, const DiffusivitySet& diff, double b);

struct FractionEstimate {
  VolumeFractions fractions;
  int index = -1;        // dictionary entry index
  double residual = 0.0; // sum of squared shell-mean differences
  bool single_shell_warning = false;
};

// Dictionary entry minimizing the squared shell-mean residual over b > 0
// shells; ties broken by lowest entry index. Requires a tabulated dictionary
// whose b grid matches the nonzero shells of `means`.
FractionEstimate estimate_fractions(const ShellMeans& means, const FractionDictionary& dict);

struct ForecastDiffusivities {
  double lambda_par = 0.0;
  double lambda_perp = 0.0;
  double residual = 0.0;
  bool degenerate = false;  // no decay observed
};

// (lambda_par, lambda_perp) minimizing the squared residual of the FORECAST
// shell-mean model; coarse grid search plus coordinate refinement inside
// lambda_par in [0.1e-3, 4e-3], lambda_perp in [0, lambda_par].
ForecastDiffusivities estimate_forecast_diffusivities(const ShellMeans& means);

}  // namespace ndsh

#endif
