#ifndef NDSH_PHANTOM_HPP
#define NDSH_PHANTOM_HPP

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "ndsh/kernels.hpp"

namespace ndsh {

// Five-parameter Kent (Fisher-Bingham) distribution on the sphere. The triad
// {mu, gamma1, gamma2} is orthonormal; beta in [0, kappa/2].
struct KentParams {
  double kappa = 0.0;
  double beta = 0.0;
  Vec3 mu{0, 0, 1};
  Vec3 gamma1{1, 0, 0};
  Vec3 gamma2{0, 1, 0};
};

void validate(const KentParams& p);

// Builds the orthonormal triad for a mean axis, with the dispersion axes
// rolled about mu by roll_deg.
KentParams make_kent(double kappa, double beta, const Vec3& mu, double roll_deg = 0.0);

// Density (1/steradian) of the Kent distribution; the normalizer c(kappa,
// beta) comes from its Gamma/Bessel series, truncated at 1e-15 relative.
double kent_pdf(const KentParams& p, const Vec3& u);

// Normalizer scaled by exp(-kappa); safe for large concentrations.
double kent_log_normalizer(const KentParams& p);

// i.i.d. draws by rejection against a uniform spherical proposal.
// The density bound exp(kappa)/c is exact since beta <= kappa/2.
std::vector<Vec3> sample_kent(const KentParams& p, int n, std::uint64_t seed);

struct PhantomVoxelSpec {
  std::vector<KentParams> populations;  // one (fanning) or two (crossing)
  VolumeFractions fractions;
  int directions_per_population = 100;  // split evenly across two populations
  double snr = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 0;
};

struct GroundTruth {
  std::vector<Vec3> sampled_directions;  // canonicalized to z >= 0
  std::vector<Vec3> kent_means;
  VolumeFractions fractions;
};

struct SynthResult {
  std::vector<double> signal;
  GroundTruth truth;
};

// Stick + tortuosity-zeppelin mixture averaged over Kent-sampled fiber
// directions, plus an isotropic CSF term; Rician noise applied when snr is
// finite. E at any b = 0 sample is exactly the fraction sum.
SynthResult synth_signal(const PhantomVoxelSpec& spec, const AcquisitionScheme& scheme,
                         const DiffusivitySet& diff);

// sqrt((E + n1)^2 + n2^2) with n1, n2 ~ N(0, 1/snr); noise referenced to a
// unit b = 0 amplitude.
std::vector<double> add_rician_noise(std::span<const double> signal, double snr,
                                     std::uint64_t seed);

}  // namespace ndsh

#endif
