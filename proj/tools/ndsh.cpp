#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ndsh/errors.hpp"
#include "ndsh/experiment.hpp"
#include "ndsh/peaks.hpp"
#include "ndsh/pipeline.hpp"
#include "ndsh/scheme_io.hpp"

namespace {

using namespace ndsh;

constexpr int kExitParseError = 2;
constexpr int kExitSolverError = 3;
constexpr int kExitInvalidArgument = 4;

struct SchemeArgs {
  std::string bvals;
  std::string bvecs;
  double tau = 0.0396;

  void attach(CLI::App* cmd) {
    cmd->add_option("--bvals", bvals, "b-values file (single whitespace-separated line)")
        ->required();
    cmd->add_option("--bvecs", bvecs, "gradient file (three whitespace-separated lines)")
        ->required();
    cmd->add_option("--tau", tau, "effective diffusion time in seconds");
  }

  AcquisitionScheme load() const { return load_scheme(bvals, bvecs, tau); }
};

int cmd_simulate(const std::string& sweep_type, const std::string& out, ExperimentConfig cfg) {
  cfg.type = sweep_type;
  const auto sweep = cfg.type == "crossing" ? crossing_sweep(cfg) : fanning_sweep(cfg);
  const AcquisitionScheme scheme =
      make_incremental_scheme(cfg.n_b0, cfg.shell_bvalues, cfg.directions_per_shell, cfg.tau);

  VolumeContainer volume = make_volume(static_cast<int>(sweep.size()), 1, 1,
                                       scheme.sample_count(), "normalized signal",
                                       cfg.type + " phantom, seed " + std::to_string(cfg.seed));
  std::ofstream gt(out + "_gt.csv");
  if (!gt) throw std::runtime_error("cannot open " + out + "_gt.csv for writing");
  gt << "voxel,kappa,beta,angle_deg,orientation,draw,nu_ic,nu_ec,nu_csf,"
        "mu1x,mu1y,mu1z,mu2x,mu2y,mu2z\n";
  for (size_t v = 0; v < sweep.size(); ++v) {
    const SynthResult synth = synth_signal(sweep[v].spec, scheme, cfg.diff);
    float* dst = volume.voxel_data(static_cast<std::int64_t>(v));
    for (int s = 0; s < scheme.sample_count(); ++s) dst[s] = static_cast<float>(synth.signal[static_cast<size_t>(s)]);
    const auto& c = sweep[v];
    const Vec3& m1 = synth.truth.kent_means[0];
    const Vec3 m2 = synth.truth.kent_means.size() > 1 ? synth.truth.kent_means[1] : Vec3(0, 0, 0);
    gt << v << "," << format_double(c.kappa) << "," << format_double(c.beta) << ","
       << format_double(c.crossing_angle_deg) << "," << c.orientation << "," << c.draw << ","
       << format_double(c.spec.fractions.nu_ic) << "," << format_double(c.spec.fractions.nu_ec)
       << "," << format_double(c.spec.fractions.nu_csf) << "," << format_double(m1.x()) << ","
       << format_double(m1.y()) << "," << format_double(m1.z()) << "," << format_double(m2.x())
       << "," << format_double(m2.y()) << "," << format_double(m2.z()) << "\n";
  }
  write_volume(volume, out + "_signal");
  write_scheme(scheme, out + ".bvals", out + ".bvecs");
  std::cout << "wrote " << sweep.size() << " voxels to " << out << "_signal.f32\n";
  return 0;
}

int cmd_fit(const SchemeArgs& scheme_args, const std::string& volume_path,
            const std::string& out, FitConfig cfg, int subsample_dirs, double max_b,
            bool auto_response, const std::string& mask_path) {
  const AcquisitionScheme full = scheme_args.load();
  const VolumeContainer volume = read_volume(volume_path);
  VolumeContainer mask;
  if (!mask_path.empty()) mask = read_volume(mask_path);

  if (auto_response) {
    bool fallback = false;
    const DiffusivitySet resp = estimate_response(volume, full, 0.8, &fallback);
    if (fallback)
      std::cerr << "warning: no voxel passed the FA threshold; using default response\n";
    cfg.diff.lambda_par = resp.lambda_par;
  }

  FitReport report;
  if (subsample_dirs > 0 || max_b < full.shell_bvalues.back()) {
    const int dirs = subsample_dirs > 0 ? subsample_dirs : full.sample_count();
    const SubsampledScheme sub = subsample_scheme(full, dirs, max_b);
    VolumeContainer sub_volume = make_volume(volume.dims[0], volume.dims[1], volume.dims[2],
                                             sub.scheme.sample_count());
    for (std::int64_t v = 0; v < volume.voxel_count(); ++v) {
      const float* src = volume.voxel_data(v);
      float* dst = sub_volume.voxel_data(v);
      for (size_t k = 0; k < sub.index_map.size(); ++k) dst[k] = src[sub.index_map[k]];
    }
    report = fit_volume(sub_volume, sub.scheme, cfg, mask_path.empty() ? nullptr : &mask,
                        &volume, &full);
  } else {
    report = fit_volume(volume, full, cfg, mask_path.empty() ? nullptr : &mask);
  }

  write_fit_outputs(report, out);
  std::cout << "fitted " << report.fitted_count() << " voxels in "
            << format_double(report.fit_seconds) << " s ("
            << format_double(report.fitted_count() / std::max(report.fit_seconds, 1e-9))
            << " voxels/s), mean MSE " << format_double(report.mean_mse()) << "\n";
  return 0;
}

int cmd_subsample(const SchemeArgs& scheme_args, const std::string& volume_path, int dirs,
                  double max_b, const std::string& out) {
  const AcquisitionScheme full = scheme_args.load();
  const SubsampledScheme sub = subsample_scheme(full, dirs, max_b);
  write_scheme(sub.scheme, out + ".bvals", out + ".bvecs");

  if (!volume_path.empty()) {
    const VolumeContainer volume = read_volume(volume_path);
    VolumeContainer sub_volume = make_volume(volume.dims[0], volume.dims[1], volume.dims[2],
                                             sub.scheme.sample_count(), volume.units,
                                             volume.provenance + " (subsampled)");
    for (std::int64_t v = 0; v < volume.voxel_count(); ++v) {
      const float* src = volume.voxel_data(v);
      float* dst = sub_volume.voxel_data(v);
      for (size_t k = 0; k < sub.index_map.size(); ++k) dst[k] = src[sub.index_map[k]];
    }
    write_volume(sub_volume, out + "_signal");
  }

  std::ofstream map(out + "_index_map.txt");
  for (int i : sub.index_map) map << i << "\n";
  std::cout << "kept " << sub.scheme.sample_count() << " of " << full.sample_count()
            << " samples\n";
  return 0;
}

int cmd_response(const SchemeArgs& scheme_args, const std::string& volume_path,
                 double fa_threshold) {
  const AcquisitionScheme scheme = scheme_args.load();
  const VolumeContainer volume = read_volume(volume_path);
  bool fallback = false;
  const DiffusivitySet resp = estimate_response(volume, scheme, fa_threshold, &fallback);
  if (fallback) std::cerr << "warning: no voxel passed the FA threshold; defaults returned\n";
  std::cout << "lambda_par " << format_double(resp.lambda_par) << "\nlambda_perp "
            << format_double(resp.lambda_perp) << "\n";
  return 0;
}

int cmd_peaks(const std::string& fodf_path, const std::string& out, const PeakConfig& pk,
              int grid_count) {
  const VolumeContainer coeffs = read_volume(fodf_path);
  const int order = sh_order_from_count(coeffs.samples_per_voxel());
  const PeakFinder finder(order, make_hemisphere_grid(grid_count));

  std::ofstream txt(out);
  if (!txt) throw std::runtime_error("cannot open " + out + " for writing");
  char buf[160];
  Eigen::VectorXd c(coeffs.samples_per_voxel());
  for (std::int64_t v = 0; v < coeffs.voxel_count(); ++v) {
    const float* src = coeffs.voxel_data(v);
    for (int j = 0; j < coeffs.samples_per_voxel(); ++j) c[j] = src[j];
    if (c.cwiseAbs().maxCoeff() == 0.0) continue;
    const PeakSet peaks = finder.extract({c, order}, pk);
    for (int p = 0; p < peaks.count(); ++p) {
      const Vec3& d = peaks.directions[static_cast<size_t>(p)];
      std::snprintf(buf, sizeof buf, "%lld %.9g %.9g %.9g %.9g\n", static_cast<long long>(v),
                    d.x(), d.y(), d.z(), peaks.amplitudes[static_cast<size_t>(p)]);
      txt << buf;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NODDI-SH / FORECAST microstructure toolkit"};
  app.require_subcommand(1);

  // simulate
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic phantom volume");
  std::string sim_sweep = "crossing";
  std::string sim_out = "phantom";
  ExperimentConfig sim_cfg;
  sim_cfg.noise_draws = 1;
  simulate->add_option("--sweep", sim_sweep, "fanning | crossing")
      ->check(CLI::IsMember({"fanning", "crossing"}));
  simulate->add_option("--out", sim_out, "output basename");
  simulate->add_option("--seed", sim_cfg.seed, "root seed");
  simulate->add_option("--snr", sim_cfg.snr, "Rician SNR (inf for noiseless)");
  simulate->add_option("--noise-draws", sim_cfg.noise_draws, "noise instances per condition");
  simulate->add_option("--dirs-per-shell", sim_cfg.directions_per_shell, "directions per shell");

  // fit
  auto* fit = app.add_subcommand("fit", "fit NODDI-SH or FORECAST over a volume");
  SchemeArgs fit_scheme;
  fit_scheme.attach(fit);
  std::string fit_volume_path, fit_out = "fit", fit_model = "noddish", fit_mask;
  FitConfig fit_cfg;
  int fit_sub_dirs = 0;
  double fit_max_b = 1e18;
  bool fit_no_fodf = false, fit_auto_response = false;
  fit->add_option("--volume", fit_volume_path, "input volume basename (.f32/.json)")->required();
  fit->add_option("--out", fit_out, "output basename");
  fit->add_option("--model", fit_model, "noddish | forecast")
      ->check(CLI::IsMember({"noddish", "forecast"}));
  fit->add_option("--order", fit_cfg.order, "SH order (even, <= 8)");
  fit->add_option("--grid", fit_cfg.constraint_grid_count, "constraint grid size");
  fit->add_option("--search-grid", fit_cfg.search_grid_count, "peak search grid size");
  fit->add_option("--tol", fit_cfg.qp_tol, "QP KKT tolerance");
  fit->add_option("--lambda-par", fit_cfg.diff.lambda_par, "parallel diffusivity mm^2/s");
  fit->add_option("--lambda-csf", fit_cfg.diff.lambda_csf, "CSF diffusivity mm^2/s");
  fit->add_option("--csf-levels", fit_cfg.dictionary.csf_levels, "dictionary CSF levels");
  fit->add_option("--splits-per-unit", fit_cfg.dictionary.splits_per_unit,
                  "dictionary splits per unit (1 - nu_csf)");
  fit->add_option("--rel-threshold", fit_cfg.peaks.rel_threshold, "peak relative threshold");
  fit->add_option("--min-sep", fit_cfg.peaks.min_sep_deg, "peak minimum separation (deg)");
  fit->add_option("--max-peaks", fit_cfg.peaks.max_peaks, "maximum peak count");
  fit->add_option("--workers", fit_cfg.workers, "worker threads");
  fit->add_option("--subsample-dirs", fit_sub_dirs, "fit on the first N directions per shell");
  fit->add_option("--max-b", fit_max_b, "fit only shells with b <= max-b");
  fit->add_option("--mask", fit_mask, "mask volume basename");
  fit->add_flag("--no-fodf", fit_no_fodf, "volume fractions / diffusivities only");
  fit->add_flag("--auto-response", fit_auto_response,
                "estimate lambda_par from high-FA voxels before fitting");

  // subsample
  auto* subsample = app.add_subcommand("subsample", "reduce a scheme (and volume) per shell");
  SchemeArgs sub_scheme;
  sub_scheme.attach(subsample);
  std::string sub_volume_path, sub_out = "subsampled";
  int sub_dirs = 30;
  double sub_max_b = 1e18;
  subsample->add_option("--volume", sub_volume_path, "optional volume basename to subsample");
  subsample->add_option("--dirs", sub_dirs, "directions kept per b > 0 shell")->required();
  subsample->add_option("--max-b", sub_max_b, "drop shells above this b-value");
  subsample->add_option("--out", sub_out, "output basename");

  // response
  auto* response = app.add_subcommand("response", "estimate response diffusivities");
  SchemeArgs resp_scheme;
  resp_scheme.attach(response);
  std::string resp_volume_path;
  double resp_fa = 0.8;
  response->add_option("--volume", resp_volume_path, "input volume basename")->required();
  response->add_option("--fa-threshold", resp_fa, "FA threshold for single-fiber voxels");

  // experiment
  auto* experiment = app.add_subcommand("experiment", "run a sweep described by a JSON spec");
  std::string exp_spec;
  experiment->add_option("--spec", exp_spec, "experiment spec JSON")->required();

  // peaks
  auto* peaks_cmd = app.add_subcommand("peaks", "extract fODF peaks from a coefficient volume");
  std::string peaks_fodf, peaks_out = "peaks.txt";
  PeakConfig peaks_cfg;
  int peaks_grid = 3000;
  peaks_cmd->add_option("--fodf", peaks_fodf, "SH coefficient volume basename")->required();
  peaks_cmd->add_option("--out", peaks_out, "output text file");
  peaks_cmd->add_option("--rel-threshold", peaks_cfg.rel_threshold, "relative threshold");
  peaks_cmd->add_option("--min-sep", peaks_cfg.min_sep_deg, "minimum separation (deg)");
  peaks_cmd->add_option("--max-peaks", peaks_cfg.max_peaks, "maximum peak count");
  peaks_cmd->add_option("--grid", peaks_grid, "search grid size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitInvalidArgument;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(sim_sweep, sim_out, sim_cfg);
    if (fit->parsed()) {
      fit_cfg.model = fit_model == "forecast" ? KernelModel::Forecast : KernelModel::NoddiSh;
      fit_cfg.with_fodf = !fit_no_fodf;
      return cmd_fit(fit_scheme, fit_volume_path, fit_out, fit_cfg, fit_sub_dirs, fit_max_b,
                     fit_auto_response, fit_mask);
    }
    if (subsample->parsed())
      return cmd_subsample(sub_scheme, sub_volume_path, sub_dirs, sub_max_b, sub_out);
    if (response->parsed()) return cmd_response(resp_scheme, resp_volume_path, resp_fa);
    if (experiment->parsed()) {
      run_experiment(load_experiment_spec(exp_spec));
      return 0;
    }
    if (peaks_cmd->parsed()) return cmd_peaks(peaks_fodf, peaks_out, peaks_cfg, peaks_grid);
  } catch (const ndsh::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitParseError;
  } catch (const ndsh::SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return kExitSolverError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kExitInvalidArgument;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
