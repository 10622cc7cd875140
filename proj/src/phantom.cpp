#include "zoneprior/phantom.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <string>

#include "zoneprior/manifest.hpp"
#include "zoneprior/nifti.hpp"
#include "zoneprior/seeding.hpp"

namespace zoneprior {

namespace fs = std::filesystem;

void PhantomSpec::validate() const {
  GridGeometry{shape, spacing, Eigen::Vector3d::Zero()}.validate();
  for (const Range* r : {&tz_semi_x, &tz_semi_y, &tz_semi_z, &pz_thickness}) {
    if (!(r->lo <= r->hi) || r->lo <= 0.0) throw ValidationError("phantom ranges must satisfy 0 < lo <= hi");
  }
  if (center_jitter_mm < 0.0 || noise_sd < 0.0 || body_semi_x <= 0.0 || body_semi_y <= 0.0)
    throw ValidationError("phantom jitter, noise and body size must be non-negative");
  for (double sd : {air_sd, tissue_sd, tz_sd, pz_sd})
    if (sd < 0.0) throw ValidationError("phantom intensity stddevs must be non-negative");
}

PhantomCase generate_phantom(const PhantomSpec& spec, std::uint64_t case_seed) {
  spec.validate();
  std::mt19937_64 rng(case_seed);
  auto uniform = [&rng](const Range& r) { return std::uniform_real_distribution<double>(r.lo, r.hi)(rng); };
  auto jitter = [&rng, &spec]() {
    return std::uniform_real_distribution<double>(-spec.center_jitter_mm, spec.center_jitter_mm)(rng);
  };
  auto gauss = [&rng](double mean, double sd) { return std::normal_distribution<double>(mean, sd)(rng); };

  const Eigen::Vector3d tz(uniform(spec.tz_semi_x), uniform(spec.tz_semi_y), uniform(spec.tz_semi_z));
  const Eigen::Vector3d outer = tz.array() + uniform(spec.pz_thickness);

  const GridGeometry geom{spec.shape, spec.spacing, Eigen::Vector3d::Zero()};
  const Eigen::Vector3d extent =
      Eigen::Vector3d(spec.shape.nx - 1, spec.shape.ny - 1, spec.shape.nz - 1).cwiseProduct(spec.spacing);
  const Eigen::Vector3d center = 0.5 * extent + Eigen::Vector3d(jitter(), jitter(), jitter());

  if (((center - outer).array() < 0.0).any() || ((center + outer).array() > extent.array()).any())
    throw SizeError("phantom zones do not fit in a grid of " + spec.shape.str() + " voxels");

  const double air = gauss(spec.air_mean, spec.air_sd);
  const double tissue = gauss(spec.tissue_mean, spec.tissue_sd);
  const double tz_level = gauss(spec.tz_mean, spec.tz_sd);
  const double pz_level = gauss(spec.pz_mean, spec.pz_sd);

  PhantomCase out{Volume(geom), LabelVolume(geom)};
  std::normal_distribution<double> noise(0.0, 1.0);
  const Shape3& s = spec.shape;
  for (int z = 0; z < s.nz; ++z) {
    for (int y = 0; y < s.ny; ++y) {
      for (int x = 0; x < s.nx; ++x) {
        const Eigen::Vector3d d = Eigen::Vector3d(x, y, z).cwiseProduct(spec.spacing) - center;
        const double in_tz = d.cwiseQuotient(tz).squaredNorm();
        const double in_outer = d.cwiseQuotient(outer).squaredNorm();
        const double bx = (d.x() / spec.body_semi_x), by = (d.y() / spec.body_semi_y);

        double level = air;
        std::uint8_t label = kBackground;
        if (in_tz <= 1.0) {
          level = tz_level;
          label = kTz;
        } else if (in_outer <= 1.0 && d.y() >= 0.0) {
          level = pz_level;
          label = kPz;
        } else if (bx * bx + by * by <= 1.0) {
          level = tissue;
        }
        const Index v = s.index(x, y, z);
        out.labels.labels(v) = label;
        out.image.data(v) = float(level + spec.noise_sd * noise(rng));
      }
    }
  }
  if (out.labels.count(kTz) == 0 || out.labels.count(kPz) == 0)
    throw SizeError("phantom zones are smaller than one voxel on this grid");
  return out;
}

std::uint64_t phantom_case_seed(const PhantomSpec& spec, int index) {
  return derive_seed({spec.seed, std::uint64_t(index)});
}

fs::path generate_dataset(const PhantomSpec& spec, int count, const fs::path& out_dir,
                          const CaseTransform& transform) {
  if (count < 1) throw ValidationError("phantom dataset count must be >= 1");
  fs::create_directories(out_dir);
  Manifest manifest;
  for (int i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "case_%03d", i);
    PhantomCase c = generate_phantom(spec, phantom_case_seed(spec, i));
    if (transform) c = transform(std::move(c));
    CaseEntry entry{id, out_dir / (std::string(id) + "_image.nii"), out_dir / (std::string(id) + "_labels.nii")};
    write_volume(c.image, entry.image_path);
    write_volume(c.labels, entry.label_path);
    manifest.cases.push_back(std::move(entry));
  }
  const fs::path manifest_path = out_dir / "manifest.json";
  save_manifest(manifest, manifest_path);
  return manifest_path;
}

}  // namespace zoneprior
