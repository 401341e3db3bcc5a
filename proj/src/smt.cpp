#include "ndsh/smt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace ndsh {

ShellMeans shell_means(std::span<const double> signal, const AcquisitionScheme& scheme) {
  if (static_cast<int>(signal.size()) != scheme.sample_count())
    throw std::invalid_argument("signal length does not match scheme");

  ShellMeans out;
  out.bvalues = scheme.shell_bvalues;
  out.means.assign(out.bvalues.size(), 0.0);
  std::vector<int> counts(out.bvalues.size(), 0);
  for (int i = 0; i < scheme.sample_count(); ++i) {
    const auto sh = static_cast<size_t>(scheme.shell_ids[static_cast<size_t>(i)]);
    out.means[sh] += signal[static_cast<size_t>(i)];
    ++counts[sh];
  }
  for (size_t sh = 0; sh < out.means.size(); ++sh) {
    if (counts[sh] == 0) throw std::invalid_argument("shell with no samples");
    out.means[sh] /= counts[sh];
    if (out.bvalues[sh] == 0.0 && std::abs(out.means[sh] - 1.0) > 0.5)
      out.normalization_warning = true;
  }
  return out;
}

FractionDictionary build_dictionary(const DictionaryConfig& config) {
  if (config.csf_levels < 1 || !(config.splits_per_unit > 0.0))
    throw std::invalid_argument("dictionary config produces no entries");

  FractionDictionary dict;
  const int levels = config.csf_levels;
  for (int j = 0; j < levels; ++j) {
    const double nu_csf = levels == 1 ? 0.0 : static_cast<double>(j) / (levels - 1);
    const double budget = 1.0 - nu_csf;
    const long splits = std::max(1l, std::lround(config.splits_per_unit * budget));
    for (long s = 0; s < splits; ++s) {
      const double t = splits == 1 ? 0.0 : static_cast<double>(s) / static_cast<double>(splits - 1);
      VolumeFractions f;
      f.nu_ic = budget * t;
      f.nu_ec = budget - f.nu_ic;
      f.nu_csf = nu_csf;
      dict.entries.push_back(f);
    }
  }
  if (dict.entries.empty()) throw std::invalid_argument("dictionary config produces no entries");
  return dict;
}

double predict_mean(const VolumeFractions& fractions, const DiffusivitySet& diff, double b) {
  validate(fractions);
  if (!(b >= 0.0)) throw std::invalid_argument("negative b-value");
  const double lambda_perp = tortuosity_lambda_perp(diff.lambda_par, fractions);
  const double ic = fractions.nu_ic * psi_l(0, b * diff.lambda_par);
  const double ec = fractions.nu_ec * std::exp(-b * lambda_perp) *
                    psi_l(0, b * (diff.lambda_par - lambda_perp));
  return fractions.nu_csf * std::exp(-b * diff.lambda_csf) + 0.5 * (ic + ec);
}

void tabulate_dictionary(FractionDictionary& dict, const DiffusivitySet& diff,
                         std::span<const double> bvalues) {
  dict.diff = diff;
  dict.bvalues.assign(bvalues.begin(), bvalues.end());
  dict.predicted_means.resize(static_cast<Eigen::Index>(dict.entries.size()),
                              static_cast<Eigen::Index>(bvalues.size()));
  for (size_t e = 0; e < dict.entries.size(); ++e)
    for (size_t k = 0; k < bvalues.size(); ++k)
      dict.predicted_means(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(k)) =
          predict_mean(dict.entries[e], diff, bvalues[k]);
}

FractionEstimate estimate_fractions(const ShellMeans& means, const FractionDictionary& dict) {
  if (dict.entries.empty()) throw std::invalid_argument("empty fraction dictionary");
  if (dict.predicted_means.rows() != static_cast<Eigen::Index>(dict.entries.size()))
    throw std::invalid_argument("dictionary is not tabulated");

  std::vector<double> observed;
  std::vector<double> observed_b;
  for (size_t sh = 0; sh < means.bvalues.size(); ++sh)
    if (means.bvalues[sh] > 0.0) {
      observed.push_back(means.means[sh]);
      observed_b.push_back(means.bvalues[sh]);
    }
  if (observed.size() != dict.bvalues.size())
    throw std::invalid_argument("dictionary b grid does not match shell means");
  for (size_t k = 0; k < observed_b.size(); ++k)
    if (std::abs(observed_b[k] - dict.bvalues[k]) > 1e-6)
      throw std::invalid_argument("dictionary b grid does not match shell means");

  FractionEstimate best;
  best.single_shell_warning = means.nonzero_count() < 2;
  double best_residual = std::numeric_limits<double>::infinity();
  for (Eigen::Index e = 0; e < dict.predicted_means.rows(); ++e) {
    double r = 0.0;
    for (size_t k = 0; k < observed.size(); ++k) {
      const double d = dict.predicted_means(e, static_cast<Eigen::Index>(k)) - observed[k];
      r += d * d;
    }
    if (r < best_residual) {
      best_residual = r;
      best.index = static_cast<int>(e);
    }
  }
  best.fractions = dict.entries[static_cast<size_t>(best.index)];
  best.residual = best_residual;
  return best;
}

namespace {

double forecast_mean_residual(double lambda_par, double lambda_perp,
                              std::span<const double> bvalues, std::span<const double> means) {
  double r = 0.0;
  for (size_t k = 0; k < bvalues.size(); ++k) {
    const double model = 0.5 * std::exp(-bvalues[k] * lambda_perp) *
                         psi_l(0, bvalues[k] * (lambda_par - lambda_perp));
    const double d = model - means[k];
    r += d * d;
  }
  return r;
}

}  // namespace

ForecastDiffusivities estimate_forecast_diffusivities(const ShellMeans& means) {
  std::vector<double> bvals;
  std::vector<double> obs;
  for (size_t sh = 0; sh < means.bvalues.size(); ++sh)
    if (means.bvalues[sh] > 0.0) {
      bvals.push_back(means.bvalues[sh]);
      obs.push_back(means.means[sh]);
    }
  if (bvals.size() < 2)
    throw std::invalid_argument("FORECAST diffusivity estimation needs >= 2 nonzero-b shells");

  ForecastDiffusivities out;
  if (std::all_of(obs.begin(), obs.end(), [](double m) { return m >= 1.0; })) {
    out.degenerate = true;
    out.residual = forecast_mean_residual(0.0, 0.0, bvals, obs);
    return out;
  }

  constexpr double kParMin = 0.1e-3;
  constexpr double kParMax = 4.0e-3;
  constexpr int kGrid = 50;

  // lambda_perp parametrized as a fraction of lambda_par so the search box
  // stays inside 0 <= perp <= par.
  double best_par = kParMin, best_frac = 0.0;
  double best_r = std::numeric_limits<double>::infinity();
  for (int i = 0; i < kGrid; ++i) {
    const double par = kParMin + (kParMax - kParMin) * i / (kGrid - 1);
    for (int j = 0; j < kGrid; ++j) {
      const double frac = static_cast<double>(j) / (kGrid - 1);
      const double r = forecast_mean_residual(par, frac * par, bvals, obs);
      if (r < best_r) {
        best_r = r;
        best_par = par;
        best_frac = frac;
      }
    }
  }

  // Pattern search: coordinate moves at the current step, halving (20 times
  // total, from the grid spacing) whenever no move improves the residual.
  double step_par = (kParMax - kParMin) / (kGrid - 1);
  double step_frac = 1.0 / (kGrid - 1);
  int halvings = 0;
  int guard = 0;
  while (halvings < 20 && ++guard < 2000) {
    bool improved = false;
    for (const double par : {best_par - step_par, best_par + step_par}) {
      if (par < kParMin || par > kParMax) continue;
      const double r = forecast_mean_residual(par, best_frac * par, bvals, obs);
      if (r < best_r) {
        best_r = r;
        best_par = par;
        improved = true;
      }
    }
    for (const double frac : {best_frac - step_frac, best_frac + step_frac}) {
      if (frac < 0.0 || frac > 1.0) continue;
      const double r = forecast_mean_residual(best_par, frac * best_par, bvals, obs);
      if (r < best_r) {
        best_r = r;
        best_frac = frac;
        improved = true;
      }
    }
    if (!improved) {
      step_par *= 0.5;
      step_frac *= 0.5;
      ++halvings;
    }
  }

  out.lambda_par = best_par;
  out.lambda_perp = best_frac * best_par;
  out.residual = best_r;
  return out;
}

}  // namespace ndsh
