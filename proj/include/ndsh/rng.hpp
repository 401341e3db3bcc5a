#ifndef NDSH_RNG_HPP
#define NDSH_RNG_HPP

#include <cmath>
#include <cstdint>

namespace ndsh {

// SplitMix64 counter generator. Every stochastic component of the toolkit takes
// an explicit 64-bit seed, so any run is reproducible from a single root seed.
class SplitMix64 {
public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1]; safe as a log() argument.
  double uniform_open() { return (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53; }

  // Standard normal via Box-Muller; second deviate is cached.
  double gaussian() {
    if (have_cache_) {
      have_cache_ = false;
      return cache_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cache_ = r * std::sin(a);
    have_cache_ = true;
    return r * std::cos(a);
  }

private:
  std::uint64_t state_;
  double cache_ = 0.0;
  bool have_cache_ = false;
};

// Derives a stream-local seed; used for per-voxel / per-compartment streams.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  SplitMix64 g(root ^ stream);
  return g.next();
}

}  // namespace ndsh

#endif
