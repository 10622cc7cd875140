#include "zoneprior/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "zoneprior/seeding.hpp"

namespace zoneprior {

void AugmentSpec::validate() const {
  if (!max_translation.allFinite() || (max_translation.array() < 0.0).any())
    throw ValidationError("augmentation translation ranges must be finite and >= 0");
  if (!(flip_probability >= 0.0 && flip_probability <= 1.0))
    throw ValidationError("flip probability must be in [0,1]");
  if (!std::isfinite(scale.lo) || !std::isfinite(scale.hi) || scale.lo <= 0.0 || scale.lo > scale.hi)
    throw ValidationError("scale range must satisfy 0 < lo <= hi");
  if (!std::isfinite(max_rotation_deg) || max_rotation_deg < 0.0)
    throw ValidationError("rotation range must be finite and >= 0");
  if (!std::isfinite(elastic_alpha) || elastic_alpha < 0.0 || !std::isfinite(elastic_sigma) || elastic_sigma <= 0.0)
    throw ValidationError("elastic alpha must be >= 0 and sigma > 0");
}

AugmentSpec AugmentSpec::none() {
  AugmentSpec s;
  s.max_translation.setZero();
  s.flip_probability = 0.0;
  s.scale = {1.0, 1.0};
  s.max_rotation_deg = 0.0;
  s.elastic_alpha = 0.0;
  return s;
}

TransformParams sample_transform(const AugmentSpec& spec, const Shape3& shape, int epoch, int index) {
  spec.validate();
  std::mt19937_64 rng(derive_seed({spec.seed, std::uint64_t(epoch), std::uint64_t(index)}));
  auto draw = [&rng](double lo, double hi) {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    return lo == hi ? lo : lo + u * (hi - lo);
  };
  TransformParams t = TransformParams::identity(shape);
  for (int i = 0; i < 3; ++i) t.translation(i) = draw(-spec.max_translation(i), spec.max_translation(i));
  t.flip = draw(0.0, 1.0) < spec.flip_probability;
  t.scale = draw(spec.scale.lo, spec.scale.hi);
  t.rotation_deg = draw(-spec.max_rotation_deg, spec.max_rotation_deg);
  const std::uint64_t elastic_seed = rng();
  if (spec.elastic_alpha > 0.0) t.displacement = elastic_field(shape, spec.elastic_alpha, spec.elastic_sigma, elastic_seed);
  return t;
}

namespace {

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, int(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= sum;
  return k;
}

/// Separable smoothing along one axis with edge replication.
void smooth_axis(Eigen::Ref<Eigen::VectorXd> f, const Shape3& s, int axis, const std::vector<double>& k) {
  const int radius = int(k.size() / 2);
  const int n = axis == 0 ? s.nx : axis == 1 ? s.ny : s.nz;
  const Index stride = axis == 0 ? 1 : axis == 1 ? s.nx : Index(s.nx) * s.ny;
  std::vector<double> line(n);
  for (int z = 0; z < (axis == 2 ? 1 : s.nz); ++z) {
    for (int y = 0; y < (axis == 1 ? 1 : s.ny); ++y) {
      for (int x = 0; x < (axis == 0 ? 1 : s.nx); ++x) {
        const Index base = s.index(x, y, z);
        for (int i = 0; i < n; ++i) line[i] = f(base + i * stride);
        for (int i = 0; i < n; ++i) {
          double acc = 0.0;
          for (int j = -radius; j <= radius; ++j) acc += k[j + radius] * line[std::clamp(i + j, 0, n - 1)];
          f(base + i * stride) = acc;
        }
      }
    }
  }
}

}  // namespace

MatX<double> elastic_field(const Shape3& shape, double alpha, double sigma, std::uint64_t seed) {
  if (!(alpha >= 0.0) || !(sigma > 0.0)) throw ValidationError("elastic field needs alpha >= 0 and sigma > 0");
  const Index n = shape.voxels();
  MatX<double> field = MatX<double>::Zero(n, 3);
  if (alpha == 0.0) return field;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int c = 0; c < 3; ++c)
    for (Index v = 0; v < n; ++v) field(v, c) = u(rng);
  const auto kernel = gaussian_kernel(sigma);
  for (int c = 0; c < 3; ++c)
    for (int axis = 0; axis < 3; ++axis) smooth_axis(field.col(c), shape, axis, kernel);
  const double peak = field.rowwise().norm().maxCoeff();
  if (peak > 0.0) field *= alpha / peak;
  return field;
}

AugmentedCase apply_transform(const Volume& image, const LabelVolume& labels, const TransformParams& t) {
  const Shape3& s = image.geom.shape;
  if (!(labels.geom.shape == s) || !(t.shape == s))
    throw ValidationError("image, labels and transform must share one grid shape");
  if (t.displacement.size() != 0 && (t.displacement.rows() != s.voxels() || t.displacement.cols() != 3))
    throw ValidationError("elastic displacement field does not match the grid");

  const Eigen::Vector3d center(0.5 * (s.nx - 1), 0.5 * (s.ny - 1), 0.5 * (s.nz - 1));
  const double theta = t.rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(theta), sn = std::sin(theta);

  AugmentedCase out{Volume(image.geom), LabelVolume(labels.geom)};
  auto img = [&](int x, int y, int z) { return s.contains(x, y, z) ? double(image.at(x, y, z)) : 0.0; };
  auto lerp = [](double a, double b, double f) { return a + f * (b - a); };

  for (int z = 0; z < s.nz; ++z) {
    for (int y = 0; y < s.ny; ++y) {
      for (int x = 0; x < s.nx; ++x) {
        Eigen::Vector3d u = Eigen::Vector3d(x, y, z) - center;
        if (t.flip) u.x() = -u.x();
        u = Eigen::Vector3d(c * u.x() + sn * u.y(), -sn * u.x() + c * u.y(), u.z());
        u /= t.scale;
        u -= t.translation;
        Eigen::Vector3d q = u + center;
        const Index v = s.index(x, y, z);
        if (t.displacement.size() != 0) q += t.displacement.row(v).transpose();

        const int nx = int(std::floor(q.x() + 0.5)), ny = int(std::floor(q.y() + 0.5)), nz = int(std::floor(q.z() + 0.5));
        out.labels.labels(v) = s.contains(nx, ny, nz) ? labels.at(nx, ny, nz) : std::uint8_t(kBackground);

        const int x0 = int(std::floor(q.x())), y0 = int(std::floor(q.y())), z0 = int(std::floor(q.z()));
        const double fx = q.x() - x0, fy = q.y() - y0, fz = q.z() - z0;
        const double c00 = lerp(img(x0, y0, z0), img(x0 + 1, y0, z0), fx);
        const double c10 = lerp(img(x0, y0 + 1, z0), img(x0 + 1, y0 + 1, z0), fx);
        const double c01 = lerp(img(x0, y0, z0 + 1), img(x0 + 1, y0, z0 + 1), fx);
        const double c11 = lerp(img(x0, y0 + 1, z0 + 1), img(x0 + 1, y0 + 1, z0 + 1), fx);
        out.image.data(v) = float(lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz));
      }
    }
  }
  return out;
}

}  // namespace zoneprior
