#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "zoneprior/manifest.hpp"
#include "zoneprior/nifti.hpp"
#include "zoneprior/volgrid.hpp"

namespace zptest {

using namespace zoneprior;

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("zoneprior_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline GridGeometry geometry(Shape3 s, Eigen::Vector3d spacing = {1, 1, 1}) {
  GridGeometry g;
  g.shape = s;
  g.spacing = spacing;
  g.origin = Eigen::Vector3d::Zero();
  return g;
}

inline Volume random_volume(Shape3 s, std::uint64_t seed) {
  Volume v;
  v.geom = geometry(s);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n;
  v.data.resize(s.voxels());
  for (Index i = 0; i < v.data.size(); ++i) v.data(i) = n(rng);
  return v;
}

inline LabelVolume random_labels(Shape3 s, std::uint64_t seed) {
  LabelVolume l;
  l.geom = geometry(s);
  std::mt19937_64 rng(seed);
  l.labels.resize(s.voxels());
  for (Index i = 0; i < l.labels.size(); ++i) l.labels(i) = std::uint8_t(rng() % 3);
  return l;
}

/// Nested ellipsoid pair with a shifted centre per case; image intensities
/// follow the labels plus noise.
inline void blob_case(Shape3 s, std::uint64_t seed, Volume& image, LabelVolume& labels) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<float> noise(0.0f, 0.1f);
  const double cx = 0.5 * (s.nx - 1) + u(rng), cy = 0.5 * (s.ny - 1) + u(rng), cz = 0.5 * (s.nz - 1);
  image.geom = labels.geom = geometry(s);
  image.data.resize(s.voxels());
  labels.labels.resize(s.voxels());
  for (Index z = 0; z < s.nz; ++z)
    for (Index y = 0; y < s.ny; ++y)
      for (Index x = 0; x < s.nx; ++x) {
        const double dx = (x - cx) / (0.2 * s.nx), dy = (y - cy) / (0.2 * s.ny), dz = (z - cz) / (0.3 * s.nz);
        const double r2 = dx * dx + dy * dy + dz * dz;
        const double r2o = r2 / (1.7 * 1.7);
        std::uint8_t l = 0;
        if (r2 <= 1.0)
          l = kTz;
        else if (r2o <= 1.0 && y >= cy)
          l = kPz;
        const Index i = s.index(x, y, z);
        labels.labels(i) = l;
        image.data(i) = float(l) + noise(rng);
      }
}

/// Writes `n` blob cases plus manifest.json into dir; returns the manifest path.
inline std::filesystem::path blob_dataset(const std::filesystem::path& dir, int n, Shape3 s, std::uint64_t seed = 1) {
  std::filesystem::create_directories(dir);
  Manifest m;
  for (int i = 0; i < n; ++i) {
    Volume image;
    LabelVolume labels;
    blob_case(s, seed * 1000 + i, image, labels);
    const std::string id = "blob_" + std::to_string(i);
    const auto ip = dir / (id + "_image.nii"), lp = dir / (id + "_labels.nii");
    write_volume(image, ip);
    write_volume(labels, lp);
    m.cases.push_back({id, ip, lp});
  }
  const auto path = dir / "manifest.json";
  save_manifest(m, path);
  return path;
}

}  // namespace zptest
