#pragma once

#include <cstdint>
#include <filesystem>

#include "zoneprior/volgrid.hpp"

namespace zoneprior {

/// On-disk voxel types supported by the single-file NIfTI-1 subset.
enum class NiftiDtype : std::int16_t { kUint8 = 2, kInt16 = 4, kFloat32 = 16 };

struct NiftiInfo {
  GridGeometry geom;
  NiftiDtype dtype = NiftiDtype::kFloat32;
};

/// Reads only the header. Paths ending in ".gz" are gunzipped transparently.
NiftiInfo read_nifti_info(const std::filesystem::path& path);

/// Any supported dtype, converted to float intensities.
Volume read_volume(const std::filesystem::path& path);

/// Integer dtypes only; every value must be a valid zone label.
LabelVolume read_labels(const std::filesystem::path& path);

/// int16/uint8 targets require integral in-range intensities.
void write_volume(const Volume& v, const std::filesystem::path& path,
                  NiftiDtype dtype = NiftiDtype::kFloat32);
void write_volume(const LabelVolume& l, const std::filesystem::path& path);

}  // namespace zoneprior
