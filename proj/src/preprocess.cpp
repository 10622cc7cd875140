#include "zoneprior/preprocess.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "zoneprior/manifest.hpp"
#include "zoneprior/nifti.hpp"

namespace zoneprior {

namespace fs = std::filesystem;

namespace {

auto& values(Volume& v) { return v.data; }
const auto& values(const Volume& v) { return v.data; }
auto& values(LabelVolume& l) { return l.labels; }
const auto& values(const LabelVolume& l) { return l.labels; }

struct Window {
  int start;
  int size;
};

template <typename V>
V crop_impl(const V& in, const PreprocessSpec& spec) {
  in.geom.validate();
  const Shape3& s = in.geom.shape;
  std::array<Window, 3> win;
  for (int axis = 0; axis < 2; ++axis) {
    const int n = axis == 0 ? s.nx : s.ny;
    const int w = int(std::lround(spec.inplane_extent_mm / in.geom.spacing(axis)));
    int start = (n - w) / 2;
    if (spec.crop_center) start = int(std::lround((*spec.crop_center)(axis) - (w - 1) / 2.0));
    if (w < 1 || start < 0 || start + w > n)
      throw SizeError("in-plane crop window of " + std::to_string(w) + " voxels does not fit in " + s.str());
    win[axis] = {start, w};
  }
  const int tz = spec.target_shape.nz;
  if (tz < 1) throw ValidationError("target z size must be >= 1");
  // Negative start means symmetric padding.
  win[2] = {s.nz >= tz ? (s.nz - tz) / 2 : -((tz - s.nz) / 2), tz};

  GridGeometry g = in.geom;
  g.shape = {win[0].size, win[1].size, win[2].size};
  for (int axis = 0; axis < 3; ++axis) g.origin(axis) += win[axis].start * g.spacing(axis);

  V out(g);
  auto& dst = values(out);
  const auto& src = values(in);
  for (int z = 0; z < g.shape.nz; ++z) {
    const int sz = z + win[2].start;
    if (sz < 0 || sz >= s.nz) continue;
    for (int y = 0; y < g.shape.ny; ++y) {
      const int sy = y + win[1].start;
      dst.segment(g.shape.index(0, y, z), g.shape.nx) = src.segment(s.index(win[0].start, sy, sz), g.shape.nx);
    }
  }
  return out;
}

/// Source sample positions for one axis, aligned on voxel extents.
std::vector<double> sample_positions(int n_out, double out_spacing, double in_spacing) {
  const double ratio = out_spacing / in_spacing;
  std::vector<double> pos(n_out);
  for (int i = 0; i < n_out; ++i) pos[i] = (i + 0.5) * ratio - 0.5;
  return pos;
}

GridGeometry resampled_geometry(const GridGeometry& in, const Shape3& shape, const Eigen::Vector3d& spacing) {
  if (shape.nx < 1 || shape.ny < 1 || shape.nz < 1)
    throw ValidationError("resample target shape must be positive, got " + shape.str());
  GridGeometry g{shape, spacing, in.origin + 0.5 * (spacing - in.spacing)};
  g.validate();
  return g;
}

struct Lerp {
  int i0, i1;
  double f;
};

std::vector<Lerp> lerp_table(int n_in, const std::vector<double>& pos) {
  std::vector<Lerp> t;
  t.reserve(pos.size());
  for (double p : pos) {
    const double c = std::clamp(p, 0.0, double(n_in - 1));
    const int i0 = int(std::floor(c));
    const int i1 = std::min(i0 + 1, n_in - 1);
    t.push_back({i0, i1, c - i0});
  }
  return t;
}

std::vector<int> nearest_table(int n_in, const std::vector<double>& pos) {
  std::vector<int> t;
  t.reserve(pos.size());
  for (double p : pos) t.push_back(std::clamp(int(std::floor(p + 0.5)), 0, n_in - 1));
  return t;
}

}  // namespace

PreprocessSpec PreprocessSpec::identity_for(const GridGeometry& g) {
  PreprocessSpec spec;
  spec.inplane_extent_mm = g.shape.nx * g.spacing.x();
  spec.target_shape = g.shape;
  spec.target_spacing = g.spacing;
  return spec;
}

Volume crop_center(const Volume& v, const PreprocessSpec& spec) { return crop_impl(v, spec); }
LabelVolume crop_center(const LabelVolume& l, const PreprocessSpec& spec) { return crop_impl(l, spec); }

Volume resample(const Volume& v, const Shape3& target_shape, const Eigen::Vector3d& target_spacing) {
  v.geom.validate();
  Volume out(resampled_geometry(v.geom, target_shape, target_spacing));
  const Shape3& s = v.geom.shape;
  const auto tx = lerp_table(s.nx, sample_positions(target_shape.nx, target_spacing.x(), v.geom.spacing.x()));
  const auto ty = lerp_table(s.ny, sample_positions(target_shape.ny, target_spacing.y(), v.geom.spacing.y()));
  const auto tz = lerp_table(s.nz, sample_positions(target_shape.nz, target_spacing.z(), v.geom.spacing.z()));
  auto lerp = [](double a, double b, double f) { return a + f * (b - a); };
  for (int z = 0; z < target_shape.nz; ++z) {
    for (int y = 0; y < target_shape.ny; ++y) {
      for (int x = 0; x < target_shape.nx; ++x) {
        auto at = [&](int i, int j, int k) { return double(v.data(s.index(i, j, k))); };
        const Lerp &lx = tx[x], &ly = ty[y], &lz = tz[z];
        const double c00 = lerp(at(lx.i0, ly.i0, lz.i0), at(lx.i1, ly.i0, lz.i0), lx.f);
        const double c10 = lerp(at(lx.i0, ly.i1, lz.i0), at(lx.i1, ly.i1, lz.i0), lx.f);
        const double c01 = lerp(at(lx.i0, ly.i0, lz.i1), at(lx.i1, ly.i0, lz.i1), lx.f);
        const double c11 = lerp(at(lx.i0, ly.i1, lz.i1), at(lx.i1, ly.i1, lz.i1), lx.f);
        out.at(x, y, z) = float(lerp(lerp(c00, c10, ly.f), lerp(c01, c11, ly.f), lz.f));
      }
    }
  }
  return out;
}

LabelVolume resample(const LabelVolume& l, const Shape3& target_shape, const Eigen::Vector3d& target_spacing) {
  l.geom.validate();
  LabelVolume out(resampled_geometry(l.geom, target_shape, target_spacing));
  const Shape3& s = l.geom.shape;
  const auto tx = nearest_table(s.nx, sample_positions(target_shape.nx, target_spacing.x(), l.geom.spacing.x()));
  const auto ty = nearest_table(s.ny, sample_positions(target_shape.ny, target_spacing.y(), l.geom.spacing.y()));
  const auto tz = nearest_table(s.nz, sample_positions(target_shape.nz, target_spacing.z(), l.geom.spacing.z()));
  for (int z = 0; z < target_shape.nz; ++z)
    for (int y = 0; y < target_shape.ny; ++y)
      for (int x = 0; x < target_shape.nx; ++x) out.at(x, y, z) = l.at(tx[x], ty[y], tz[z]);
  return out;
}

Volume normalize_intensity(const Volume& v) {
  const auto d = v.data.cast<double>();
  const double mean = d.mean();
  const double var = (d - mean).square().mean();
  Volume out = v;
  if (var <= 0.0) {
    out.data.setZero();
  } else {
    out.data = ((d - mean) / std::sqrt(var)).cast<float>();
  }
  return out;
}

PreprocessedCase preprocess_case(const Volume& image, const LabelVolume& labels, const PreprocessSpec& spec) {
  if (!(image.geom.shape == labels.geom.shape) || image.geom.spacing != labels.geom.spacing)
    throw ValidationError("image and labels must share shape and spacing");
  Volume img = resample(crop_center(image, spec), spec.target_shape, spec.target_spacing);
  LabelVolume lab = resample(crop_center(labels, spec), spec.target_shape, spec.target_spacing);
  if (spec.normalize) img = normalize_intensity(img);
  return {std::move(img), std::move(lab)};
}

fs::path preprocess_dataset(const fs::path& manifest_in, const fs::path& out_dir, const PreprocessSpec& spec) {
  const Manifest in = load_manifest(manifest_in);
  fs::create_directories(out_dir);
  Manifest out;
  for (const auto& c : in.cases) {
    auto processed = preprocess_case(read_volume(c.image_path), read_labels(c.label_path), spec);
    CaseEntry e{c.id, out_dir / (c.id + "_image.nii"), out_dir / (c.id + "_labels.nii")};
    write_volume(processed.image, e.image_path);
    write_volume(processed.labels, e.label_path);
    out.cases.push_back(std::move(e));
  }
  const fs::path path = out_dir / "manifest.json";
  save_manifest(out, path);
  return path;
}

}  // namespace zoneprior
