#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ndsh/errors.hpp"
#include "ndsh/phantom.hpp"
#include "ndsh/pipeline.hpp"
#include "ndsh/rng.hpp"
#include "ndsh/scheme_io.hpp"

using namespace ndsh;

namespace {

std::string temp_base(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "ndsh_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

AcquisitionScheme hcp_like(int per_shell = 90) {
  return make_incremental_scheme(18, {1000.0, 2000.0, 3000.0}, per_shell);
}

}  // namespace

TEST_CASE("volume write/read round trip is bit-identical") {
  VolumeContainer v = make_volume(3, 4, 2, 7, "signal", "round trip fixture");
  SplitMix64 rng(99);
  for (auto& x : v.data) x = static_cast<float>(rng.gaussian());
  const std::string base = temp_base("roundtrip");
  write_volume(v, base);
  const VolumeContainer r = read_volume(base);
  CHECK(r.dims == v.dims);
  CHECK(r.units == v.units);
  CHECK(r.provenance == v.provenance);
  REQUIRE(r.data.size() == v.data.size());
  CHECK(std::memcmp(r.data.data(), v.data.data(), v.data.size() * sizeof(float)) == 0);

  CHECK_THROWS_AS(read_volume(temp_base("missing")), ParseError);
}

TEST_CASE("volume read rejects inconsistent raw size") {
  VolumeContainer v = make_volume(2, 2, 2, 3);
  const std::string base = temp_base("badsize");
  write_volume(v, base);
  std::ofstream truncate(base + ".f32", std::ios::binary | std::ios::trunc);
  truncate << "xx";
  truncate.close();
  CHECK_THROWS_AS(read_volume(base), ParseError);
}

TEST_CASE("scheme files: HCP-like golden fixture parses into four shells") {
  const AcquisitionScheme generated = hcp_like();
  const std::string bvals = temp_base("golden.bvals");
  const std::string bvecs = temp_base("golden.bvecs");
  write_scheme(generated, bvals, bvecs);
  const AcquisitionScheme parsed = load_scheme(bvals, bvecs);
  REQUIRE(parsed.sample_count() == 288);
  REQUIRE(parsed.shell_count() == 4);
  CHECK(parsed.shell_bvalues[0] == 0.0);
  CHECK(parsed.shell_bvalues[1] == doctest::Approx(1000.0));
  CHECK(parsed.shell_bvalues[2] == doctest::Approx(2000.0));
  CHECK(parsed.shell_bvalues[3] == doctest::Approx(3000.0));
  const auto lists = parsed.shell_sample_lists();
  CHECK(lists[0].size() == 18);
  CHECK(lists[1].size() == 90);
  CHECK(lists[2].size() == 90);
  CHECK(lists[3].size() == 90);
  for (int i = 0; i < parsed.sample_count(); ++i)
    if (parsed.bvalues[static_cast<size_t>(i)] > 0.0)
      CHECK(std::abs(parsed.directions[static_cast<size_t>(i)].norm() - 1.0) < 1e-12);
}

TEST_CASE("scheme files: unit-norm tolerance and parse errors") {
  const std::string bvals = temp_base("t1.bvals");
  const std::string bvecs = temp_base("t1.bvecs");

  write_text(bvals, "0 1000 1000\n");
  write_text(bvecs, "0 0.6 0.5\n0 0.8 0.5\n0 0 0.5\n");
  CHECK_THROWS_AS(load_scheme(bvals, bvecs), ParseError);  // (0.5,0.5,0.5) off unit

  write_text(bvecs, "0 0.6 1\n0 0.8 0\n0 0 0\n");
  const AcquisitionScheme ok = load_scheme(bvals, bvecs);
  CHECK(ok.shell_count() == 2);  // b=0 plus one shell

  write_text(bvals, "0 0 0\n");
  write_text(bvecs, "0 0 0\n0 0 0\n0 0 0\n");
  CHECK(load_scheme(bvals, bvecs).shell_count() == 1);

  write_text(bvals, "0 1000\n");
  write_text(bvecs, "0 1\n0\n0 0\n");  // short second row
  try {
    load_scheme(bvals, bvecs);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }

  write_text(bvals, "0 banana\n");
  write_text(bvecs, "0 1\n0 0\n0 0\n");
  try {
    load_scheme(bvals, bvecs);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.column() == 2);
  }

  CHECK_THROWS_AS(load_scheme(temp_base("nonexistent"), bvecs), ParseError);
}

TEST_CASE("subsampling keeps shell prefixes and maps indices") {
  const AcquisitionScheme full = hcp_like();
  const SubsampledScheme s60 = subsample_scheme(full, 60, 3000.0);
  CHECK(s60.scheme.sample_count() == 18 + 3 * 60);
  const SubsampledScheme s30 = subsample_scheme(full, 30, 2000.0);
  CHECK(s30.scheme.sample_count() == 18 + 2 * 30);
  for (size_t k = 0; k < s30.index_map.size(); ++k) {
    const int orig = s30.index_map[k];
    CHECK(s30.scheme.bvalues[k] == full.bvalues[static_cast<size_t>(orig)]);
    if (s30.scheme.bvalues[k] > 0.0) {
      CHECK(s30.scheme.directions[k].x() == full.directions[static_cast<size_t>(orig)].x());
    }
  }
  // prefix contract: the kept samples of each shell are that shell's first n
  const auto full_lists = full.shell_sample_lists();
  std::vector<int> expected;
  for (int i = 0; i < full.sample_count(); ++i) {
    const auto sh = static_cast<size_t>(full.shell_ids[static_cast<size_t>(i)]);
    if (full.shell_bvalues[sh] == 0.0) {
      expected.push_back(i);
      continue;
    }
    if (full.shell_bvalues[sh] > 2000.0) continue;
    const auto& members = full_lists[sh];
    const auto pos = std::find(members.begin(), members.end(), i) - members.begin();
    if (pos < 30) expected.push_back(i);
  }
  CHECK(s30.index_map == expected);

  CHECK_THROWS_AS(subsample_scheme(full, 91, 3000.0), std::invalid_argument);
}

TEST_CASE("incremental scheme prefixes stay well spread") {
  const AcquisitionScheme scheme = hcp_like();
  const auto lists = scheme.shell_sample_lists();
  const auto& shell1 = lists[1];
  double min_angle = 180.0;
  for (int a = 0; a < 30; ++a)
    for (int b = a + 1; b < 30; ++b)
      min_angle = std::min(min_angle,
                           axial_angle_deg(scheme.directions[static_cast<size_t>(shell1[static_cast<size_t>(a)])],
                                           scheme.directions[static_cast<size_t>(shell1[static_cast<size_t>(b)])]));
  CHECK(min_angle > 10.0);  // 30 spread axes cannot be closer than this bound
}

namespace {

VolumeContainer tensor_volume(const AcquisitionScheme& scheme, const Eigen::Matrix3d& tensor,
                              int n_voxels) {
  VolumeContainer v = make_volume(n_voxels, 1, 1, scheme.sample_count());
  for (int i = 0; i < scheme.sample_count(); ++i) {
    const double b = scheme.bvalues[static_cast<size_t>(i)];
    double e = 1.0;
    if (b > 0.0) {
      const Vec3& g = scheme.directions[static_cast<size_t>(i)];
      e = std::exp(-b * g.dot(tensor * g));
    }
    for (int vx = 0; vx < n_voxels; ++vx)
      v.voxel_data(vx)[i] = static_cast<float>(e);
  }
  return v;
}

}  // namespace

TEST_CASE("response estimation recovers a synthetic tensor exactly") {
  const AcquisitionScheme scheme = hcp_like(60);
  Eigen::Matrix3d d = Eigen::Vector3d(1.7e-3, 0.2e-3, 0.2e-3).asDiagonal();
  // rotate the tensor off-axis
  const Eigen::Matrix3d r =
      Eigen::AngleAxisd(0.7, Vec3(1, 1, 0).normalized()).toRotationMatrix();
  d = r * d * r.transpose();
  const VolumeContainer vol = tensor_volume(scheme, d, 5);
  bool fallback = true;
  const DiffusivitySet resp = estimate_response(vol, scheme, 0.8, &fallback);
  CHECK_FALSE(fallback);
  CHECK(resp.lambda_par == doctest::Approx(1.7e-3).epsilon(1e-6));
  CHECK(resp.lambda_perp == doctest::Approx(0.2e-3).epsilon(1e-6));
}

TEST_CASE("response estimation falls back on isotropic volumes") {
  const AcquisitionScheme scheme = hcp_like(30);
  const Eigen::Matrix3d iso = Eigen::Vector3d(1e-3, 1e-3, 1e-3).asDiagonal();
  const VolumeContainer vol = tensor_volume(scheme, iso, 3);
  bool fallback = false;
  const DiffusivitySet resp = estimate_response(vol, scheme, 0.8, &fallback);
  CHECK(fallback);
  CHECK(resp.lambda_par == doctest::Approx(1.7e-3));
  CHECK(resp.lambda_perp == doctest::Approx(0.1e-3));
}

TEST_CASE("response estimation on a stick phantom lands near the generating diffusivity") {
  const AcquisitionScheme scheme = hcp_like(90);
  DiffusivitySet diff;
  VolumeContainer vol = make_volume(8, 1, 1, scheme.sample_count());
  for (int vx = 0; vx < 8; ++vx) {
    PhantomVoxelSpec spec;
    spec.populations = {make_kent(128.0, 0.0, Vec3(0.1 * vx, 0.2, 1.0).normalized())};
    VolumeFractions f;
    f.nu_ic = 1.0;
    spec.fractions = f;
    spec.seed = 100 + static_cast<std::uint64_t>(vx);
    const SynthResult synth = synth_signal(spec, scheme, diff);
    for (int i = 0; i < scheme.sample_count(); ++i)
      vol.voxel_data(vx)[i] = static_cast<float>(synth.signal[static_cast<size_t>(i)]);
  }
  bool fallback = true;
  const DiffusivitySet resp = estimate_response(vol, scheme, 0.8, &fallback);
  CHECK_FALSE(fallback);
  CHECK(std::abs(resp.lambda_par - 1.7e-3) / 1.7e-3 < 0.05);
}

TEST_CASE("fit_volume: all-CSF volume maps to nu_csf close to one") {
  const AcquisitionScheme scheme = hcp_like(30);
  VolumeContainer vol = make_volume(4, 1, 1, scheme.sample_count());
  for (int vx = 0; vx < 4; ++vx)
    for (int i = 0; i < scheme.sample_count(); ++i)
      vol.voxel_data(vx)[i] =
          static_cast<float>(std::exp(-scheme.bvalues[static_cast<size_t>(i)] * 3.0e-3));

  FitConfig cfg;
  cfg.with_fodf = false;
  const FitReport report = fit_volume(vol, scheme, cfg);
  REQUIRE(report.voxels.size() == 4);
  for (const auto& v : report.voxels) {
    CHECK_FALSE(v.masked_out);
    CHECK(v.fractions.nu_csf > 0.95);
    CHECK(v.fractions.nu_ic < 0.05);
  }
}

TEST_CASE("fit_volume output is independent of worker count and honors masks") {
  const AcquisitionScheme scheme = hcp_like(30);
  DiffusivitySet diff;
  const int n_vox = 6;
  VolumeContainer vol = make_volume(n_vox, 1, 1, scheme.sample_count());
  for (int vx = 0; vx < n_vox; ++vx) {
    PhantomVoxelSpec spec;
    spec.populations = {make_kent(32.0, 8.0, Vec3(0.3, 0.1 * vx - 0.2, 0.9).normalized())};
    VolumeFractions f;
    f.nu_ic = 0.65 + 0.05 * vx;
    f.nu_ec = 1.0 - f.nu_ic;
    spec.fractions = f;
    spec.snr = 20.0;
    spec.seed = 500 + static_cast<std::uint64_t>(vx);
    const SynthResult synth = synth_signal(spec, scheme, diff);
    for (int i = 0; i < scheme.sample_count(); ++i)
      vol.voxel_data(vx)[i] = static_cast<float>(synth.signal[static_cast<size_t>(i)]);
  }
  // voxel 3: dead (zero) signal must be masked out, pipeline continues
  for (int i = 0; i < scheme.sample_count(); ++i) vol.voxel_data(3)[i] = 0.0f;

  FitConfig cfg;
  cfg.workers = 1;
  const FitReport serial = fit_volume(vol, scheme, cfg);
  cfg.workers = 2;
  const FitReport parallel = fit_volume(vol, scheme, cfg);
  REQUIRE(serial.voxels.size() == parallel.voxels.size());
  CHECK(serial.voxels[3].masked_out);
  for (size_t v = 0; v < serial.voxels.size(); ++v) {
    CHECK(serial.voxels[v].masked_out == parallel.voxels[v].masked_out);
    if (serial.voxels[v].masked_out) continue;
    CHECK(serial.voxels[v].fractions.nu_ic == parallel.voxels[v].fractions.nu_ic);
    CHECK(serial.voxels[v].mse == parallel.voxels[v].mse);
    REQUIRE(serial.voxels[v].coeffs.size() == parallel.voxels[v].coeffs.size());
    for (Eigen::Index j = 0; j < serial.voxels[v].coeffs.size(); ++j)
      CHECK(serial.voxels[v].coeffs[j] == parallel.voxels[v].coeffs[j]);
  }

  VolumeContainer mask = make_volume(n_vox, 1, 1, 1);
  for (int vx = 0; vx < n_vox; ++vx) mask.voxel_data(vx)[0] = vx == 0 ? 0.0f : 1.0f;
  const FitReport masked = fit_volume(vol, scheme, cfg, &mask);
  CHECK(masked.voxels[0].masked_out);
  CHECK_FALSE(masked.voxels[1].masked_out);
}

TEST_CASE("subsampled fits evaluate MSE on the full signal, never below the subset MSE") {
  const AcquisitionScheme full = hcp_like(90);
  DiffusivitySet diff;
  const int n_vox = 8;
  VolumeContainer vol = make_volume(n_vox, 1, 1, full.sample_count());
  for (int vx = 0; vx < n_vox; ++vx) {
    PhantomVoxelSpec spec;
    const Vec3 d1 = Vec3(0, 0, 1);
    const Vec3 d2 = Vec3(1, 0, 0);
    spec.populations = {make_kent(128.0, 0.0, vx % 2 ? d1 : d2),
                        make_kent(128.0, 0.0, vx % 2 ? d2 : d1)};
    VolumeFractions f;
    f.nu_ic = 0.7;
    f.nu_ec = 0.3;
    spec.fractions = f;
    spec.snr = 20.0;
    spec.seed = 900 + static_cast<std::uint64_t>(vx);
    const SynthResult synth = synth_signal(spec, full, diff);
    for (int i = 0; i < full.sample_count(); ++i)
      vol.voxel_data(vx)[i] = static_cast<float>(synth.signal[static_cast<size_t>(i)]);
  }

  const SubsampledScheme sub = subsample_scheme(full, 30, 2000.0);
  VolumeContainer sub_vol = make_volume(n_vox, 1, 1, sub.scheme.sample_count());
  for (int vx = 0; vx < n_vox; ++vx)
    for (size_t k = 0; k < sub.index_map.size(); ++k)
      sub_vol.voxel_data(vx)[k] = vol.voxel_data(vx)[sub.index_map[k]];

  FitConfig cfg;
  const FitReport on_subset = fit_volume(sub_vol, sub.scheme, cfg);
  const FitReport on_full = fit_volume(sub_vol, sub.scheme, cfg, nullptr, &vol, &full);
  for (int vx = 0; vx < n_vox; ++vx) {
    CHECK_FALSE(on_full.voxels[static_cast<size_t>(vx)].masked_out);
    CHECK(on_full.voxels[static_cast<size_t>(vx)].mse >=
          on_subset.voxels[static_cast<size_t>(vx)].mse);
  }
}

TEST_CASE("fit outputs are written as volumes plus a peak list") {
  const AcquisitionScheme scheme = hcp_like(30);
  DiffusivitySet diff;
  VolumeContainer vol = make_volume(2, 1, 1, scheme.sample_count());
  for (int vx = 0; vx < 2; ++vx) {
    PhantomVoxelSpec spec;
    spec.populations = {make_kent(128.0, 0.0, Vec3(0, 0, 1))};
    VolumeFractions f;
    f.nu_ic = 0.8;
    f.nu_ec = 0.2;
    spec.fractions = f;
    spec.seed = 31 + static_cast<std::uint64_t>(vx);
    const SynthResult synth = synth_signal(spec, scheme, diff);
    for (int i = 0; i < scheme.sample_count(); ++i)
      vol.voxel_data(vx)[i] = static_cast<float>(synth.signal[static_cast<size_t>(i)]);
  }
  FitConfig cfg;
  const FitReport report = fit_volume(vol, scheme, cfg);
  const std::string base = temp_base("fitout");
  write_fit_outputs(report, base);
  CHECK(std::filesystem::exists(base + "_nu_ic.f32"));
  CHECK(std::filesystem::exists(base + "_nu_csf.json"));
  CHECK(std::filesystem::exists(base + "_mse.f32"));
  CHECK(std::filesystem::exists(base + "_fodf.f32"));
  CHECK(std::filesystem::exists(base + "_peaks.txt"));
  const VolumeContainer coeffs = read_volume(base + "_fodf");
  CHECK(coeffs.samples_per_voxel() == 45);
  const VolumeContainer nu_ic = read_volume(base + "_nu_ic");
  CHECK(nu_ic.data[0] == doctest::Approx(0.8).epsilon(0.1));
}
