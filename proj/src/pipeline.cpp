#include "ndsh/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <thread>

#include "ndsh/errors.hpp"

namespace ndsh {

std::int64_t FitReport::fitted_count() const {
  std::int64_t n = 0;
  for (const auto& v : voxels)
    if (!v.masked_out) ++n;
  return n;
}

double FitReport::mean_mse() const {
  double sum = 0.0;
  std::int64_t n = 0;
  for (const auto& v : voxels)
    if (!v.masked_out) {
      sum += v.mse;
      ++n;
    }
  return n ? sum / static_cast<double>(n) : 0.0;
}

namespace {

std::vector<int> b0_samples(const AcquisitionScheme& scheme) {
  std::vector<int> idx;
  for (int i = 0; i < scheme.sample_count(); ++i)
    if (scheme.bvalues[static_cast<size_t>(i)] == 0.0) idx.push_back(i);
  return idx;
}

// Normalizes a raw voxel signal by its mean b=0 amplitude; empty on failure.
std::vector<double> normalize_voxel(const float* raw, const AcquisitionScheme& scheme,
                                    const std::vector<int>& b0) {
  double s0 = 0.0;
  if (b0.empty()) return {};
  for (int i : b0) s0 += raw[i];
  s0 /= static_cast<double>(b0.size());
  if (!(s0 > 0.0) || !std::isfinite(s0)) return {};
  std::vector<double> sig(static_cast<size_t>(scheme.sample_count()));
  for (int i = 0; i < scheme.sample_count(); ++i) sig[static_cast<size_t>(i)] = raw[i] / s0;
  return sig;
}

// Shared per-run state: SH caches, tabulated dictionary, peak finder.
struct FitContext {
  const AcquisitionScheme& scheme;
  const AcquisitionScheme& eval_scheme;
  const FitConfig& cfg;

  FitContext(const AcquisitionScheme& s, const AcquisitionScheme& e, const FitConfig& c)
      : scheme(s), eval_scheme(e), cfg(c) {}

  Eigen::MatrixXd sh_fit;         // SH at fit-scheme directions
  Eigen::MatrixXd sh_eval;        // SH at eval-scheme directions
  Eigen::MatrixXd constraint_sh;  // SH at constraint grid
  FractionDictionary dict;
  std::unique_ptr<PeakFinder> finder;
  std::vector<int> b0_fit;
  std::vector<int> b0_eval;
  bool separate_eval = false;
};

Eigen::MatrixXd scheme_sh_matrix(const AcquisitionScheme& scheme, int order) {
  std::vector<Vec3> dirs = scheme.directions;
  for (size_t i = 0; i < dirs.size(); ++i)
    if (scheme.bvalues[i] == 0.0) dirs[i] = Vec3(0, 0, 1);
  return eval_sh(order, dirs);
}

double mse_between(const Eigen::VectorXd& predicted, const std::vector<double>& observed) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - observed[static_cast<size_t>(i)];
    acc += d * d;
  }
  return acc / static_cast<double>(predicted.size());
}

void fit_one_voxel(const FitContext& ctx, const float* raw_fit, const float* raw_eval,
                   VoxelFit& out) {
  const auto signal = normalize_voxel(raw_fit, ctx.scheme, ctx.b0_fit);
  if (signal.empty()) {
    out.masked_out = true;
    return;
  }

  const ShellMeans means = shell_means(signal, ctx.scheme);
  SignalBasisMatrix basis;
  if (ctx.cfg.model == KernelModel::NoddiSh) {
    const FractionEstimate est = estimate_fractions(means, ctx.dict);
    out.fractions = est.fractions;
    if (ctx.cfg.with_fodf)
      basis = noddish_basis_from_sh(ctx.scheme, ctx.sh_fit, ctx.cfg.diff, out.fractions,
                                    ctx.cfg.order);
  } else {
    out.diffusivities = estimate_forecast_diffusivities(means);
    if (ctx.cfg.with_fodf) {
      DiffusivitySet d = ctx.cfg.diff;
      d.lambda_par = std::max(out.diffusivities.lambda_par, 1e-5);
      d.lambda_perp = std::min(out.diffusivities.lambda_perp, d.lambda_par);
      basis = forecast_basis_from_sh(ctx.scheme, ctx.sh_fit, d, ctx.cfg.order);
    }
  }

  if (ctx.cfg.with_fodf) {
    try {
      const QpSolution qp =
          fit_fodf_with_constraints(signal, basis, ctx.constraint_sh, ctx.cfg.qp_tol);
      out.coeffs = qp.coeffs.coeffs;
      out.converged = qp.converged;
      out.peaks = ctx.finder->extract({qp.coeffs.coeffs, ctx.cfg.order}, ctx.cfg.peaks);
    } catch (const SolverError&) {
      out.converged = false;
    }
  }

  // MSE against the evaluation signal (the full signal under subsampling).
  const float* raw_mse = ctx.separate_eval ? raw_eval : raw_fit;
  const auto eval_signal = normalize_voxel(raw_mse, ctx.eval_scheme, ctx.b0_eval);
  if (eval_signal.empty()) {
    out.masked_out = true;
    return;
  }
  if (ctx.cfg.with_fodf && out.coeffs.size() > 0) {
    SignalBasisMatrix eval_basis;
    if (ctx.cfg.model == KernelModel::NoddiSh) {
      eval_basis = noddish_basis_from_sh(ctx.eval_scheme, ctx.sh_eval, ctx.cfg.diff,
                                         out.fractions, ctx.cfg.order);
    } else {
      DiffusivitySet d = ctx.cfg.diff;
      d.lambda_par = std::max(out.diffusivities.lambda_par, 1e-5);
      d.lambda_perp = std::min(out.diffusivities.lambda_perp, d.lambda_par);
      eval_basis = forecast_basis_from_sh(ctx.eval_scheme, ctx.sh_eval, d, ctx.cfg.order);
    }
    out.mse = mse_between(predict_signal(eval_basis, out.coeffs), eval_signal);
  } else {
    // Fractions-only: per-sample prediction from the shell-mean model.
    Eigen::VectorXd pred(ctx.eval_scheme.sample_count());
    for (int i = 0; i < ctx.eval_scheme.sample_count(); ++i) {
      const double b = ctx.eval_scheme.bvalues[static_cast<size_t>(i)];
      if (ctx.cfg.model == KernelModel::NoddiSh) {
        pred[i] = predict_mean(out.fractions, ctx.cfg.diff, b);
      } else {
        const double xi = b * (out.diffusivities.lambda_par - out.diffusivities.lambda_perp);
        pred[i] = b == 0.0 ? 1.0
                           : 0.5 * std::exp(-b * out.diffusivities.lambda_perp) * psi_l(0, xi);
      }
    }
    out.mse = mse_between(pred, eval_signal);
  }
}

}  // namespace

FitReport fit_volume(const VolumeContainer& volume, const AcquisitionScheme& scheme,
                     const FitConfig& config, const VolumeContainer* mask,
                     const VolumeContainer* eval_volume, const AcquisitionScheme* eval_scheme) {
  if (volume.samples_per_voxel() != scheme.sample_count())
    throw std::invalid_argument("volume sample axis does not match scheme");
  if ((eval_volume == nullptr) != (eval_scheme == nullptr))
    throw std::invalid_argument("eval volume and eval scheme must be given together");
  if (eval_volume) {
    if (eval_volume->samples_per_voxel() != eval_scheme->sample_count())
      throw std::invalid_argument("eval volume sample axis does not match eval scheme");
    if (eval_volume->voxel_count() != volume.voxel_count())
      throw std::invalid_argument("eval volume voxel grid differs from fit volume");
  }
  if (mask && mask->voxel_count() != volume.voxel_count())
    throw std::invalid_argument("mask voxel grid differs from volume");

  FitContext ctx{scheme, eval_scheme ? *eval_scheme : scheme, config};
  ctx.separate_eval = eval_volume != nullptr;
  ctx.sh_fit = scheme_sh_matrix(scheme, config.order);
  ctx.sh_eval = ctx.separate_eval ? scheme_sh_matrix(*eval_scheme, config.order) : ctx.sh_fit;
  ctx.constraint_sh =
      eval_sh(config.order, make_hemisphere_grid(config.constraint_grid_count).directions);
  ctx.b0_fit = b0_samples(scheme);
  ctx.b0_eval = ctx.separate_eval ? b0_samples(*eval_scheme) : ctx.b0_fit;
  if (config.model == KernelModel::NoddiSh) {
    ctx.dict = build_dictionary(config.dictionary);
    tabulate_dictionary(ctx.dict, config.diff, scheme.nonzero_shell_bvalues());
  }
  if (config.with_fodf)
    ctx.finder = std::make_unique<PeakFinder>(config.order,
                                              make_hemisphere_grid(config.search_grid_count));

  FitReport report;
  report.dims = volume.dims;
  report.model = config.model;
  report.order = config.order;
  report.with_fodf = config.with_fodf;
  const std::int64_t n_voxels = volume.voxel_count();
  report.voxels.resize(static_cast<size_t>(n_voxels));

  const auto t0 = std::chrono::steady_clock::now();
  std::atomic<std::int64_t> cursor{0};
  const auto worker = [&]() {
    for (;;) {
      const std::int64_t v = cursor.fetch_add(1);
      if (v >= n_voxels) break;
      VoxelFit& out = report.voxels[static_cast<size_t>(v)];
      if (mask && mask->data[static_cast<size_t>(v * mask->dims[3])] < 0.5f) {
        out.masked_out = true;
        continue;
      }
      fit_one_voxel(ctx, volume.voxel_data(v),
                    ctx.separate_eval ? eval_volume->voxel_data(v) : nullptr, out);
    }
  };

  const int n_workers = std::max(1, config.workers);
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(n_workers));
    for (int t = 0; t < n_workers; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  report.fit_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

namespace {

void write_scalar_map(const FitReport& report, const std::string& basepath,
                      const std::string& suffix, double (*get)(const VoxelFit&)) {
  VolumeContainer v = make_volume(report.dims[0], report.dims[1], report.dims[2], 1, "",
                                  "fit output " + suffix);
  for (size_t i = 0; i < report.voxels.size(); ++i)
    v.data[i] = static_cast<float>(get(report.voxels[i]));
  write_volume(v, basepath + "_" + suffix);
}

}  // namespace

void write_fit_outputs(const FitReport& report, const std::string& basepath) {
  if (report.model == KernelModel::NoddiSh) {
    write_scalar_map(report, basepath, "nu_ic",
                     [](const VoxelFit& v) { return v.masked_out ? 0.0 : v.fractions.nu_ic; });
    write_scalar_map(report, basepath, "nu_ec",
                     [](const VoxelFit& v) { return v.masked_out ? 0.0 : v.fractions.nu_ec; });
    write_scalar_map(report, basepath, "nu_csf",
                     [](const VoxelFit& v) { return v.masked_out ? 0.0 : v.fractions.nu_csf; });
  } else {
    write_scalar_map(report, basepath, "lambda_par", [](const VoxelFit& v) {
      return v.masked_out ? 0.0 : v.diffusivities.lambda_par;
    });
    write_scalar_map(report, basepath, "lambda_perp", [](const VoxelFit& v) {
      return v.masked_out ? 0.0 : v.diffusivities.lambda_perp;
    });
  }
  write_scalar_map(report, basepath, "mse",
                   [](const VoxelFit& v) { return v.masked_out ? 0.0 : v.mse; });
  write_scalar_map(report, basepath, "mask",
                   [](const VoxelFit& v) { return v.masked_out ? 0.0 : 1.0; });

  if (report.with_fodf) {
    const int n_coeffs = sh_count(report.order);
    VolumeContainer c = make_volume(report.dims[0], report.dims[1], report.dims[2], n_coeffs, "",
                                    "fODF SH coefficients");
    for (size_t i = 0; i < report.voxels.size(); ++i) {
      const auto& vox = report.voxels[i];
      if (vox.masked_out || vox.coeffs.size() != n_coeffs) continue;
      float* dst = c.voxel_data(static_cast<std::int64_t>(i));
      for (int j = 0; j < n_coeffs; ++j) dst[j] = static_cast<float>(vox.coeffs[j]);
    }
    write_volume(c, basepath + "_fodf");

    std::ofstream peaks(basepath + "_peaks.txt");
    if (!peaks) throw std::runtime_error("cannot open " + basepath + "_peaks.txt for writing");
    char buf[160];
    for (size_t i = 0; i < report.voxels.size(); ++i) {
      const auto& vox = report.voxels[i];
      for (int p = 0; p < vox.peaks.count(); ++p) {
        const Vec3& d = vox.peaks.directions[static_cast<size_t>(p)];
        std::snprintf(buf, sizeof buf, "%zu %.9g %.9g %.9g %.9g\n", i, d.x(), d.y(), d.z(),
                      vox.peaks.amplitudes[static_cast<size_t>(p)]);
        peaks << buf;
      }
    }
  }
}

DiffusivitySet estimate_response(const VolumeContainer& volume, const AcquisitionScheme& scheme,
                                 double fa_threshold, bool* used_fallback) {
  if (volume.samples_per_voxel() != scheme.sample_count())
    throw std::invalid_argument("volume sample axis does not match scheme");
  const auto nonzero = scheme.nonzero_shell_bvalues();
  if (nonzero.empty()) throw std::invalid_argument("response estimation needs a b > 0 shell");
  const double b_low = nonzero.front();

  // Samples used for the tensor fit: all b = 0 plus the lowest shell.
  std::vector<int> rows;
  for (int i = 0; i < scheme.sample_count(); ++i) {
    const double b = scheme.bvalues[static_cast<size_t>(i)];
    const auto sh = static_cast<size_t>(scheme.shell_ids[static_cast<size_t>(i)]);
    if (b == 0.0 || std::abs(scheme.shell_bvalues[sh] - b_low) < 1e-9) rows.push_back(i);
  }
  Eigen::MatrixXd design(static_cast<Eigen::Index>(rows.size()), 7);
  for (size_t k = 0; k < rows.size(); ++k) {
    const int i = rows[k];
    const double b = scheme.bvalues[static_cast<size_t>(i)];
    const Vec3 g = b == 0.0 ? Vec3(0, 0, 0) : scheme.directions[static_cast<size_t>(i)];
    design.row(static_cast<Eigen::Index>(k)) << 1.0, -b * g.x() * g.x(), -b * g.y() * g.y(),
        -b * g.z() * g.z(), -2.0 * b * g.x() * g.y(), -2.0 * b * g.x() * g.z(),
        -2.0 * b * g.y() * g.z();
  }

  double sum_par = 0.0, sum_perp = 0.0;
  std::int64_t n_used = 0;
  Eigen::VectorXd logs(static_cast<Eigen::Index>(rows.size()));
  Eigen::VectorXd weights(static_cast<Eigen::Index>(rows.size()));
  for (std::int64_t v = 0; v < volume.voxel_count(); ++v) {
    const float* raw = volume.voxel_data(v);
    bool ok = true;
    for (size_t k = 0; k < rows.size() && ok; ++k)
      if (!(raw[rows[k]] > 0.0f)) ok = false;
    if (!ok) continue;
    for (size_t k = 0; k < rows.size(); ++k) {
      logs[static_cast<Eigen::Index>(k)] = std::log(static_cast<double>(raw[rows[k]]));
      weights[static_cast<Eigen::Index>(k)] =
          static_cast<double>(raw[rows[k]]) * static_cast<double>(raw[rows[k]]);
    }
    const Eigen::MatrixXd wd = weights.asDiagonal() * design;
    const Eigen::VectorXd beta =
        (design.transpose() * wd).ldlt().solve(design.transpose() * (weights.asDiagonal() * logs));
    Eigen::Matrix3d tensor;
    tensor << beta[1], beta[4], beta[5], beta[4], beta[2], beta[6], beta[5], beta[6], beta[3];
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(tensor);
    const Eigen::Vector3d ev = eig.eigenvalues();  // ascending
    const double mean = ev.mean();
    const double ss = (ev.array() - mean).square().sum();
    const double norm2 = ev.squaredNorm();
    const double fa = norm2 > 0.0 ? std::sqrt(1.5 * ss / norm2) : 0.0;
    if (fa > fa_threshold) {
      sum_par += ev[2];
      sum_perp += 0.5 * (ev[0] + ev[1]);
      ++n_used;
    }
  }

  DiffusivitySet out;
  if (n_used == 0) {
    if (used_fallback) *used_fallback = true;
    out.lambda_par = 1.7e-3;
    out.lambda_perp = 0.1e-3;
    return out;
  }
  if (used_fallback) *used_fallback = false;
  out.lambda_par = std::min(std::max(sum_par / static_cast<double>(n_used), 0.0), 4.0e-3);
  out.lambda_perp = std::min(std::max(sum_perp / static_cast<double>(n_used), 0.0), out.lambda_par);
  return out;
}

}  // namespace ndsh
