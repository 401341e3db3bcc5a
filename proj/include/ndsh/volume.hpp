#ifndef NDSH_VOLUME_HPP
#define NDSH_VOLUME_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace ndsh {

// Raw little-endian float32 volume with a JSON sidecar. Data is C-ordered with
// the sample axis fastest: index = ((x * ny + y) * nz + z) * n_samples + s.
struct VolumeContainer {
  std::array<int, 4> dims{0, 0, 0, 0};  // nx, ny, nz, n_samples
  std::vector<float> data;
  std::string units;
  std::string provenance;

  std::int64_t voxel_count() const {
    return static_cast<std::int64_t>(dims[0]) * dims[1] * dims[2];
  }
  int samples_per_voxel() const { return dims[3]; }

  std::int64_t offset(int x, int y, int z) const {
    return ((static_cast<std::int64_t>(x) * dims[1] + y) * dims[2] + z) * dims[3];
  }
  // Linear voxel index in x-major order times the sample stride.
  std::int64_t voxel_offset(std::int64_t voxel) const { return voxel * dims[3]; }

  float* voxel_data(std::int64_t voxel) { return data.data() + voxel_offset(voxel); }
  const float* voxel_data(std::int64_t voxel) const { return data.data() + voxel_offset(voxel); }
};

VolumeContainer make_volume(int nx, int ny, int nz, int n_samples, std::string units = "",
                            std::string provenance = "");

// Writes <basepath>.f32 (raw) and <basepath>.json (sidecar).
void write_volume(const VolumeContainer& volume, const std::string& basepath);

// Reads the pair written by write_volume; byte-exact round trip.
VolumeContainer read_volume(const std::string& basepath);

}  // namespace ndsh

#endif
