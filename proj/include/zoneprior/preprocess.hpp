#pragma once

#include <filesystem>
#include <optional>
#include <utility>

#include <Eigen/Dense>

#include "zoneprior/volgrid.hpp"

namespace zoneprior {

/// Working-grid contract: crop a fixed physical in-plane window, keep the
/// slice spacing, then resample in-plane to the target grid.
struct PreprocessSpec {
  double inplane_extent_mm = 108.0;
  Shape3 target_shape{36, 36, 18};
  Eigen::Vector3d target_spacing{3.0, 3.0, 3.6};
  /// Crop centre in source voxels; volume centre when unset.
  std::optional<Eigen::Vector2d> crop_center;
  bool normalize = true;

  /// Spec whose crop/resample leave an already-processed grid unchanged.
  static PreprocessSpec identity_for(const GridGeometry& g);
};

/// In-plane crop to round(extent / spacing) voxels about the crop centre;
/// z centre-cropped or symmetrically zero-padded to target_shape.nz.
Volume crop_center(const Volume& v, const PreprocessSpec& spec);
LabelVolume crop_center(const LabelVolume& l, const PreprocessSpec& spec);

/// Voxel-extent aligned resampling; trilinear for intensities.
Volume resample(const Volume& v, const Shape3& target_shape, const Eigen::Vector3d& target_spacing);
/// Nearest-neighbour for labels.
LabelVolume resample(const LabelVolume& l, const Shape3& target_shape, const Eigen::Vector3d& target_spacing);

/// Per-volume z-score. Constant volumes map to zeros.
Volume normalize_intensity(const Volume& v);

struct PreprocessedCase {
  Volume image;
  LabelVolume labels;
};

PreprocessedCase preprocess_case(const Volume& image, const LabelVolume& labels, const PreprocessSpec& spec);

/// Runs preprocess_case on every manifest entry, writing NIfTI pairs and a
/// new manifest into out_dir. Returns the new manifest path.
std::filesystem::path preprocess_dataset(const std::filesystem::path& manifest_in,
                                         const std::filesystem::path& out_dir, const PreprocessSpec& spec);

}  // namespace zoneprior
