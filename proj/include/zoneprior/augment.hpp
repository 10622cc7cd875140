#pragma once

#include <cstdint>
#include <utility>

#include <Eigen/Dense>

#include "zoneprior/volgrid.hpp"

namespace zoneprior {

/// Randomized spatial augmentation ranges. Distances in voxels.
struct AugmentSpec {
  Eigen::Vector3d max_translation{3.0, 3.0, 1.0};
  double flip_probability = 0.5;  // left-right (x) only
  Range scale{1.0, 1.15};
  double max_rotation_deg = 10.0;  // about z
  double elastic_alpha = 2.0;
  double elastic_sigma = 4.0;
  std::uint64_t seed = 0;

  void validate() const;
  /// Ranges all zero and no flips.
  static AugmentSpec none();
};

struct TransformParams {
  Shape3 shape;
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  bool flip = false;
  double scale = 1.0;
  double rotation_deg = 0.0;
  /// voxels x 3 displacement in voxels; empty means no elastic term.
  MatX<double> displacement;

  static TransformParams identity(const Shape3& shape) {
    TransformParams t;
    t.shape = shape;
    return t;
  }
};

/// Seeded by derive_seed({spec.seed, epoch, index}) so the result does not
/// depend on which worker draws it or in what order.
TransformParams sample_transform(const AugmentSpec& spec, const Shape3& shape, int epoch, int index);

/// Uniform [-1,1] noise per axis, Gaussian-smoothed (stddev sigma voxels),
/// rescaled so the largest displacement magnitude equals alpha.
MatX<double> elastic_field(const Shape3& shape, double alpha, double sigma, std::uint64_t seed);

struct AugmentedCase {
  Volume image;
  LabelVolume labels;
};

/// One composite resampling pass. For output voxel p the source position is
/// obtained by applying flip, rotation, scaling and translation about the grid
/// centre, then adding the elastic displacement at p. Trilinear for the image,
/// nearest for labels; outside the grid reads as zero / background.
AugmentedCase apply_transform(const Volume& image, const LabelVolume& labels, const TransformParams& t);

}  // namespace zoneprior
