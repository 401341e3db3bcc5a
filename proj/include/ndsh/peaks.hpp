#ifndef NDSH_PEAKS_HPP
#define NDSH_PEAKS_HPP

#include <span>
#include <vector>

#include "ndsh/qp.hpp"
#include "ndsh/sh.hpp"

namespace ndsh {

struct PeakSet {
  std::vector<Vec3> directions;   // descending amplitude order
  std::vector<double> amplitudes;

  int count() const { return static_cast<int>(directions.size()); }
};

struct PeakConfig {
  double rel_threshold = 0.5;   // keep peaks >= rel_threshold * max amplitude
  double min_sep_deg = 25.0;    // minimum angular separation between peaks
  int max_peaks = 5;
};

// Local maxima of the expanded fODF on a dense search grid, refined by one
// quadratic fit over the neighboring grid values, greedily filtered by
// separation and relative threshold. A flat or non-positive field yields an
// empty set.
PeakSet extract_peaks(const FodfCoefficients& coeffs, const SphericalGrid& search_grid,
                      const PeakConfig& config = {});

// Cached neighbor topology + SH matrix for repeated extraction on one grid.
class PeakFinder {
public:
  PeakFinder(int order, SphericalGrid search_grid);

  PeakSet extract(const FodfCoefficients& coeffs, const PeakConfig& config = {}) const;

  const SphericalGrid& grid() const { return grid_; }

private:
  int order_;
  SphericalGrid grid_;
  Eigen::MatrixXd sh_;                       // n_grid x n_coeffs
  std::vector<std::array<int, 8>> neighbors_;  // 8 nearest (antipodal metric)
};

struct AngularErrorResult {
  double degrees = 0.0;
  bool empty_peaks = false;  // no peaks available; maximal 90 degree error reported
};

// Mean over ground-truth directions of the angle (mod antipodal symmetry) to
// the closest extracted peak.
AngularErrorResult angular_error(const PeakSet& peaks, std::span<const Vec3> ground_truth);

}  // namespace ndsh

#endif
