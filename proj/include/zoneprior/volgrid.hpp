#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "zoneprior/errors.hpp"

namespace zoneprior {

using Index = Eigen::Index;

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using ArrX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

/// Label values. Background is implicit in mask stacks.
enum Zone : std::uint8_t { kBackground = 0, kTz = 1, kPz = 2 };
inline constexpr int kNumClasses = 3;
inline constexpr int kNumZones = 2;

/// Closed interval [lo, hi].
struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Voxel grid extent. Linear index is x-fastest, matching NIfTI storage.
struct Shape3 {
  int nx = 1;
  int ny = 1;
  int nz = 1;

  Index voxels() const { return Index(nx) * ny * nz; }
  Index index(int x, int y, int z) const { return x + Index(nx) * (y + Index(ny) * z); }
  bool contains(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < nx && y < ny && z < nz;
  }
  bool operator==(const Shape3&) const = default;
  std::string str() const {
    return "(" + std::to_string(nx) + "," + std::to_string(ny) + "," + std::to_string(nz) + ")";
  }
};

/// Shape plus axis-aligned physical placement in millimetres.
struct GridGeometry {
  Shape3 shape;
  Eigen::Vector3d spacing = Eigen::Vector3d::Ones();
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();

  void validate() const {
    if (shape.nx < 1 || shape.ny < 1 || shape.nz < 1)
      throw ValidationError("grid shape entries must be >= 1, got " + shape.str());
    if (!(spacing.array() > 0.0).all() || !spacing.allFinite())
      throw ValidationError("grid spacing entries must be finite and > 0");
  }
  bool operator==(const GridGeometry& o) const {
    return shape == o.shape && spacing == o.spacing && origin == o.origin;
  }
};

template <typename Scalar>
struct VolumeT {
  GridGeometry geom;
  ArrX<Scalar> data;

  VolumeT() = default;
  explicit VolumeT(const GridGeometry& g, Scalar fill = Scalar(0))
      : geom(g), data(ArrX<Scalar>::Constant(g.shape.voxels(), fill)) {}

  const Shape3& shape() const { return geom.shape; }
  Scalar& at(int x, int y, int z) { return data(geom.shape.index(x, y, z)); }
  Scalar at(int x, int y, int z) const { return data(geom.shape.index(x, y, z)); }

  void validate() const {
    geom.validate();
    if (data.size() != geom.shape.voxels()) throw ValidationError("volume data size does not match shape");
    if (!data.allFinite()) throw ValidationError("volume contains NaN or Inf intensities");
  }
};

using Volume = VolumeT<float>;

struct LabelVolume {
  GridGeometry geom;
  ArrX<std::uint8_t> labels;

  LabelVolume() = default;
  explicit LabelVolume(const GridGeometry& g)
      : geom(g), labels(ArrX<std::uint8_t>::Zero(g.shape.voxels())) {}

  const Shape3& shape() const { return geom.shape; }
  std::uint8_t& at(int x, int y, int z) { return labels(geom.shape.index(x, y, z)); }
  std::uint8_t at(int x, int y, int z) const { return labels(geom.shape.index(x, y, z)); }

  Index count(std::uint8_t label) const { return (labels == label).count(); }

  void validate() const {
    geom.validate();
    if (labels.size() != geom.shape.voxels()) throw ValidationError("label data size does not match shape");
    if ((labels > std::uint8_t(kPz)).any()) throw ValidationError("label values must be in {0,1,2}");
  }
};

/// Per-voxel class probabilities: rows are voxels, columns (background, TZ, PZ).
template <typename Scalar>
struct ProbVolumeT {
  GridGeometry geom;
  MatX<Scalar> probs;

  const Shape3& shape() const { return geom.shape; }

  void validate(double tol = 1e-5) const {
    geom.validate();
    if (probs.rows() != geom.shape.voxels() || probs.cols() != kNumClasses)
      throw ValidationError("probability volume must be voxels x 3");
    if ((probs.array() < Scalar(0)).any() || (probs.array() > Scalar(1)).any())
      throw ValidationError("probabilities must lie in [0,1]");
    const double worst = (probs.rowwise().sum().array() - Scalar(1)).abs().maxCoeff();
    if (worst > tol) throw ValidationError("per-voxel probabilities must sum to 1");
  }
};

using ProbVolume = ProbVolumeT<float>;

/// Zone masks: rows are voxels, columns (TZ, PZ).
template <typename Scalar>
struct MaskStackT {
  Shape3 shape;
  MatX<Scalar> masks;
};

using MaskStack = MaskStackT<float>;

template <typename Scalar = float>
ProbVolumeT<Scalar> one_hot(const LabelVolume& l) {
  l.validate();
  ProbVolumeT<Scalar> p;
  p.geom = l.geom;
  p.probs = MatX<Scalar>::Zero(l.labels.size(), kNumClasses);
  for (Index v = 0; v < l.labels.size(); ++v) p.probs(v, l.labels(v)) = Scalar(1);
  return p;
}

/// Hard labels; ties resolve to the lowest class index.
template <typename Scalar>
LabelVolume argmax_labels(const ProbVolumeT<Scalar>& p) {
  LabelVolume l(p.geom);
  for (Index v = 0; v < p.probs.rows(); ++v) {
    int best = 0;
    for (int c = 1; c < kNumClasses; ++c)
      if (p.probs(v, c) > p.probs(v, best)) best = c;
    l.labels(v) = std::uint8_t(best);
  }
  return l;
}

template <typename Scalar = float>
MaskStackT<Scalar> to_mask_stack(const LabelVolume& l) {
  MaskStackT<Scalar> m{l.geom.shape, MatX<Scalar>::Zero(l.labels.size(), kNumZones)};
  m.masks.col(0) = (l.labels == std::uint8_t(kTz)).template cast<Scalar>().matrix();
  m.masks.col(1) = (l.labels == std::uint8_t(kPz)).template cast<Scalar>().matrix();
  return m;
}

template <typename Scalar>
MaskStackT<Scalar> to_mask_stack(const ProbVolumeT<Scalar>& p) {
  return {p.geom.shape, p.probs.rightCols(kNumZones)};
}

}  // namespace zoneprior
