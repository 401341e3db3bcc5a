#include "ndsh/volume.hpp"

#include <bit>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "ndsh/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "volume format is little-endian; big-endian hosts are unsupported");

namespace ndsh {

VolumeContainer make_volume(int nx, int ny, int nz, int n_samples, std::string units,
                            std::string provenance) {
  if (nx < 1 || ny < 1 || nz < 1 || n_samples < 1)
    throw std::invalid_argument("volume dimensions must be positive");
  VolumeContainer v;
  v.dims = {nx, ny, nz, n_samples};
  v.data.assign(static_cast<size_t>(v.voxel_count()) * static_cast<size_t>(n_samples), 0.0f);
  v.units = std::move(units);
  v.provenance = std::move(provenance);
  return v;
}

void write_volume(const VolumeContainer& volume, const std::string& basepath) {
  const std::int64_t expected =
      volume.voxel_count() * static_cast<std::int64_t>(volume.samples_per_voxel());
  if (static_cast<std::int64_t>(volume.data.size()) != expected)
    throw std::invalid_argument("volume data length does not match dims");

  nlohmann::json sidecar;
  sidecar["dims"] = volume.dims;
  sidecar["dtype"] = "float32";
  sidecar["byte_order"] = "little";
  sidecar["units"] = volume.units;
  sidecar["provenance"] = volume.provenance;

  std::ofstream meta(basepath + ".json");
  if (!meta) throw std::runtime_error("cannot open " + basepath + ".json for writing");
  meta << sidecar.dump(2) << "\n";

  std::ofstream raw(basepath + ".f32", std::ios::binary);
  if (!raw) throw std::runtime_error("cannot open " + basepath + ".f32 for writing");
  raw.write(reinterpret_cast<const char*>(volume.data.data()),
            static_cast<std::streamsize>(volume.data.size() * sizeof(float)));
  if (!raw) throw std::runtime_error("short write to " + basepath + ".f32");
}

VolumeContainer read_volume(const std::string& basepath) {
  std::ifstream meta(basepath + ".json");
  if (!meta) throw ParseError(basepath + ".json", 0, 0, "cannot open sidecar");
  nlohmann::json sidecar;
  try {
    meta >> sidecar;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(basepath + ".json", 0, 0, e.what());
  }

  VolumeContainer v;
  try {
    const auto dims = sidecar.at("dims");
    for (int i = 0; i < 4; ++i) v.dims[static_cast<size_t>(i)] = dims.at(static_cast<size_t>(i)).get<int>();
    if (sidecar.at("dtype").get<std::string>() != "float32")
      throw ParseError(basepath + ".json", 0, 0, "dtype must be float32");
    v.units = sidecar.value("units", "");
    v.provenance = sidecar.value("provenance", "");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(basepath + ".json", 0, 0, e.what());
  }

  const std::int64_t count = v.voxel_count() * static_cast<std::int64_t>(v.samples_per_voxel());
  if (count <= 0) throw ParseError(basepath + ".json", 0, 0, "non-positive volume dims");

  std::ifstream raw(basepath + ".f32", std::ios::binary | std::ios::ate);
  if (!raw) throw ParseError(basepath + ".f32", 0, 0, "cannot open raw data");
  const std::int64_t bytes = static_cast<std::int64_t>(raw.tellg());
  if (bytes != count * static_cast<std::int64_t>(sizeof(float)))
    throw ParseError(basepath + ".f32", 0, 0,
                     "raw size " + std::to_string(bytes) + " does not match dims");
  raw.seekg(0);
  v.data.resize(static_cast<size_t>(count));
  raw.read(reinterpret_cast<char*>(v.data.data()), static_cast<std::streamsize>(bytes));
  if (!raw) throw ParseError(basepath + ".f32", 0, 0, "short read");
  return v;
}

}  // namespace ndsh
