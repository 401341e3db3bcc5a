#ifndef NDSH_SCHEME_IO_HPP
#define NDSH_SCHEME_IO_HPP

#include <string>
#include <vector>

#include "ndsh/kernels.hpp"

namespace ndsh {

// bvals: one line of whitespace-separated b-values (s/mm^2).
// bvecs: three lines (x, y, z components), one column per sample.
AcquisitionScheme load_scheme(const std::string& bvals_path, const std::string& bvecs_path,
                              double tau = 0.0396);

void write_scheme(const AcquisitionScheme& scheme, const std::string& bvals_path,
                  const std::string& bvecs_path);

struct SubsampledScheme {
  AcquisitionScheme scheme;
  std::vector<int> index_map;  // position in the original sample list
};

// Keeps the first directions_per_shell samples of every b > 0 shell in stored
// order, all b = 0 samples, and drops shells with nominal b above max_b.
SubsampledScheme subsample_scheme(const AcquisitionScheme& scheme, int directions_per_shell,
                                  double max_b);

// Nested multi-shell scheme in the incremental style: any prefix of a shell's
// directions keeps near-uniform angular coverage. b = 0 samples come first.
AcquisitionScheme make_incremental_scheme(int n_b0, const std::vector<double>& shell_bvalues,
                                          int directions_per_shell, double tau = 0.0396);

}  // namespace ndsh

#endif
