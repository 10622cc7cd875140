#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <utility>

#include <Eigen/Dense>

#include "zoneprior/volgrid.hpp"

namespace zoneprior {

/// Procedural prostate-like case: an ellipsoidal TZ inside a larger
/// co-centred ellipsoid whose posterior remainder forms the PZ crescent.
/// Lengths in millimetres; +y is posterior.
struct PhantomSpec {
  Shape3 shape{384, 384, 24};
  Eigen::Vector3d spacing{0.5, 0.5, 3.6};

  Range tz_semi_x{11.0, 17.0};
  Range tz_semi_y{9.0, 13.0};
  Range tz_semi_z{9.0, 13.0};
  Range pz_thickness{7.0, 11.0};
  double center_jitter_mm = 5.0;

  /// Elliptical body cross-section; air outside.
  double body_semi_x = 80.0;
  double body_semi_y = 60.0;

  /// Per-case region mean ~ N(mean, sd); then i.i.d. voxel noise.
  double air_mean = 0.05, air_sd = 0.01;
  double tissue_mean = 0.30, tissue_sd = 0.02;
  double tz_mean = 0.55, tz_sd = 0.02;
  double pz_mean = 0.85, pz_sd = 0.02;
  double noise_sd = 0.08;

  std::uint64_t seed = 0;

  void validate() const;
};

struct PhantomCase {
  Volume image;
  LabelVolume labels;
};

/// Deterministic in (spec, case_seed). Throws SizeError if the zones
/// do not fit inside the grid.
PhantomCase generate_phantom(const PhantomSpec& spec, std::uint64_t case_seed);

/// Seed of case `index` within a dataset: derive_seed({spec.seed, index}).
std::uint64_t phantom_case_seed(const PhantomSpec& spec, int index);

/// Optional per-case hook applied before writing (e.g. preprocessing).
using CaseTransform = std::function<PhantomCase(PhantomCase)>;

/// Writes `count` cases as case_NNN_image.nii / case_NNN_labels.nii plus
/// manifest.json under out_dir. Returns the manifest path.
std::filesystem::path generate_dataset(const PhantomSpec& spec, int count,
                                       const std::filesystem::path& out_dir,
                                       const CaseTransform& transform = {});

}  // namespace zoneprior
