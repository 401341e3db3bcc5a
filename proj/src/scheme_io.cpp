#include "ndsh/scheme_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ndsh/errors.hpp"
#include "ndsh/sh.hpp"

namespace ndsh {

namespace {

std::vector<std::string> read_nonempty_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, 0, "cannot open file");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r\n") != std::string::npos) lines.push_back(line);
  }
  return lines;
}

std::vector<double> parse_number_line(const std::string& path, int line_no,
                                      const std::string& line) {
  std::vector<double> values;
  std::istringstream ss(line);
  std::string token;
  int column = 0;
  while (ss >> token) {
    ++column;
    try {
      size_t used = 0;
      const double v = std::stod(token, &used);
      if (used != token.size()) throw std::invalid_argument("trailing characters");
      values.push_back(v);
    } catch (const std::exception&) {
      throw ParseError(path, line_no, column, "not a number: '" + token + "'");
    }
  }
  return values;
}

}  // namespace

AcquisitionScheme load_scheme(const std::string& bvals_path, const std::string& bvecs_path,
                              double tau) {
  const auto bval_lines = read_nonempty_lines(bvals_path);
  if (bval_lines.size() != 1)
    throw ParseError(bvals_path, static_cast<int>(bval_lines.size()), 0,
                     "expected exactly one line of b-values");
  const auto bvals = parse_number_line(bvals_path, 1, bval_lines[0]);
  if (bvals.empty()) throw ParseError(bvals_path, 1, 0, "no b-values");

  const auto bvec_lines = read_nonempty_lines(bvecs_path);
  if (bvec_lines.size() != 3)
    throw ParseError(bvecs_path, static_cast<int>(bvec_lines.size()), 0,
                     "expected exactly three lines of gradient components");
  std::array<std::vector<double>, 3> comps;
  for (int r = 0; r < 3; ++r) {
    comps[static_cast<size_t>(r)] = parse_number_line(bvecs_path, r + 1, bvec_lines[static_cast<size_t>(r)]);
    if (comps[static_cast<size_t>(r)].size() != bvals.size())
      throw ParseError(bvecs_path, r + 1, static_cast<int>(comps[static_cast<size_t>(r)].size()),
                       "column count differs from bvals (" + std::to_string(bvals.size()) + ")");
  }

  std::vector<Vec3> dirs(bvals.size());
  for (size_t i = 0; i < bvals.size(); ++i) {
    dirs[i] = Vec3(comps[0][i], comps[1][i], comps[2][i]);
    if (bvals[i] < 0.0)
      throw ParseError(bvals_path, 1, static_cast<int>(i + 1), "negative b-value");
    if (bvals[i] >= kBZeroShellWidth && std::abs(dirs[i].norm() - 1.0) > 1e-3)
      throw ParseError(bvecs_path, 1, static_cast<int>(i + 1),
                       "gradient direction is not unit norm (|v| = " +
                           std::to_string(dirs[i].norm()) + ")");
  }
  return make_scheme(std::move(dirs), bvals, tau);
}

void write_scheme(const AcquisitionScheme& scheme, const std::string& bvals_path,
                  const std::string& bvecs_path) {
  std::ofstream bv(bvals_path);
  if (!bv) throw std::runtime_error("cannot open " + bvals_path + " for writing");
  char buf[64];
  for (int i = 0; i < scheme.sample_count(); ++i) {
    std::snprintf(buf, sizeof buf, "%.9g", scheme.bvalues[static_cast<size_t>(i)]);
    bv << (i ? " " : "") << buf;
  }
  bv << "\n";

  std::ofstream vec(bvecs_path);
  if (!vec) throw std::runtime_error("cannot open " + bvecs_path + " for writing");
  for (int r = 0; r < 3; ++r) {
    for (int i = 0; i < scheme.sample_count(); ++i) {
      const double v = scheme.bvalues[static_cast<size_t>(i)] == 0.0
                           ? 0.0
                           : scheme.directions[static_cast<size_t>(i)][r];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      vec << (i ? " " : "") << buf;
    }
    vec << "\n";
  }
}

SubsampledScheme subsample_scheme(const AcquisitionScheme& scheme, int directions_per_shell,
                                  double max_b) {
  if (directions_per_shell < 1)
    throw std::invalid_argument("directions_per_shell must be >= 1");
  const auto lists = scheme.shell_sample_lists();
  for (size_t sh = 0; sh < lists.size(); ++sh) {
    if (scheme.shell_bvalues[sh] == 0.0 || scheme.shell_bvalues[sh] > max_b) continue;
    if (static_cast<int>(lists[sh].size()) < directions_per_shell)
      throw std::invalid_argument("shell " + std::to_string(sh) + " has only " +
                                  std::to_string(lists[sh].size()) + " samples");
  }

  std::vector<int> kept;
  for (int i = 0; i < scheme.sample_count(); ++i) {
    const auto sh = static_cast<size_t>(scheme.shell_ids[static_cast<size_t>(i)]);
    const double b = scheme.shell_bvalues[sh];
    if (b == 0.0) {
      kept.push_back(i);
      continue;
    }
    if (b > max_b) continue;
    // Position of this sample within its shell, in stored order.
    const auto& members = lists[sh];
    const auto pos = std::find(members.begin(), members.end(), i) - members.begin();
    if (pos < directions_per_shell) kept.push_back(i);
  }
  if (kept.empty()) throw std::invalid_argument("subsampling removed every sample");

  std::vector<Vec3> dirs;
  std::vector<double> bvals;
  for (int i : kept) {
    dirs.push_back(scheme.directions[static_cast<size_t>(i)]);
    bvals.push_back(scheme.bvalues[static_cast<size_t>(i)]);
  }
  SubsampledScheme out;
  out.scheme = make_scheme(std::move(dirs), std::move(bvals), scheme.tau);
  out.index_map = std::move(kept);
  return out;
}

AcquisitionScheme make_incremental_scheme(int n_b0, const std::vector<double>& shell_bvalues,
                                          int directions_per_shell, double tau) {
  if (n_b0 < 1 || directions_per_shell < 1 || shell_bvalues.empty())
    throw std::invalid_argument("invalid incremental scheme parameters");

  // Greedy farthest-point ordering over a dense spiral candidate set: every
  // prefix of the result is itself well spread.
  const int n_candidates = std::max(2000, 24 * directions_per_shell);
  const auto candidates = fibonacci_hemisphere(n_candidates);

  std::vector<Vec3> dirs;
  std::vector<double> bvals;
  for (int i = 0; i < n_b0; ++i) {
    dirs.emplace_back(0, 0, 0);
    bvals.push_back(0.0);
  }
  for (size_t sh = 0; sh < shell_bvalues.size(); ++sh) {
    std::vector<double> min_dot(static_cast<size_t>(n_candidates), -1.0);  // max |dot| to chosen set
    // Stagger the seed point so shells get distinct direction sets.
    int current = static_cast<int>((sh * 7919) % static_cast<size_t>(n_candidates));
    for (int k = 0; k < directions_per_shell; ++k) {
      dirs.push_back(candidates[static_cast<size_t>(current)]);
      bvals.push_back(shell_bvalues[sh]);
      for (int c = 0; c < n_candidates; ++c) {
        const double d = std::abs(candidates[static_cast<size_t>(c)].dot(candidates[static_cast<size_t>(current)]));
        min_dot[static_cast<size_t>(c)] = std::max(min_dot[static_cast<size_t>(c)], d);
      }
      // Next: candidate farthest (smallest max |dot|) from everything chosen.
      current = static_cast<int>(std::min_element(min_dot.begin(), min_dot.end()) - min_dot.begin());
    }
  }
  return make_scheme(std::move(dirs), std::move(bvals), tau);
}

}  // namespace ndsh
