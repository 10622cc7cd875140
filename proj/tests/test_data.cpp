#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "zoneprior/augment.hpp"
#include "zoneprior/errors.hpp"
#include "zoneprior/phantom.hpp"
#include "zoneprior/preprocess.hpp"

using namespace zptest;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

PhantomSpec small_phantom() {
  PhantomSpec s;
  s.shape = {72, 72, 24};
  s.spacing = {2.5, 2.5, 3.6};
  return s;
}

double region_mean(const PhantomCase& c, int label) {
  double s = 0.0;
  long n = 0;
  for (Index i = 0; i < c.labels.labels.size(); ++i)
    if (c.labels.labels(i) == label) {
      s += c.image.data(i);
      ++n;
    }
  return s / double(n);
}

}  // namespace

TEST_CASE("phantom defaults, determinism and zone layout") {
  const PhantomSpec spec;
  const PhantomCase a = generate_phantom(spec, 11);
  const PhantomCase b = generate_phantom(spec, 11);
  CHECK(a.image.geom.shape == Shape3{384, 384, 24});
  CHECK(a.image.geom.spacing == Eigen::Vector3d(0.5, 0.5, 3.6));
  CHECK((a.image.data == b.image.data).all());
  CHECK((a.labels.labels == b.labels.labels).all());

  CHECK(a.labels.count(kTz) > 0);
  CHECK(a.labels.count(kPz) > 0);
  CHECK(region_mean(a, kPz) > region_mean(a, kTz));
  CHECK(region_mean(a, kTz) > region_mean(a, kBackground));

  // PZ lies posterior (+y) of the TZ centroid.
  double ty = 0, py = 0;
  const Shape3 s = a.labels.geom.shape;
  for (Index z = 0; z < s.nz; ++z)
    for (Index y = 0; y < s.ny; ++y)
      for (Index x = 0; x < s.nx; ++x) {
        const int l = a.labels.at(x, y, z);
        if (l == kTz) ty += y;
        if (l == kPz) py += y;
      }
  CHECK(py / double(a.labels.count(kPz)) > ty / double(a.labels.count(kTz)));

  const PhantomCase c = generate_phantom(spec, 12);
  CHECK_FALSE((c.labels.labels == a.labels.labels).all());
}

TEST_CASE("phantom spec validation") {
  PhantomSpec s = small_phantom();
  s.shape = {8, 8, 4};
  CHECK_THROWS_AS(generate_phantom(s, 1), SizeError);
  s = small_phantom();
  s.noise_sd = -1.0;
  CHECK_THROWS_AS(s.validate(), ValidationError);
}

TEST_CASE("generate_dataset writes readable, reproducible cases") {
  const auto d1 = scratch_dir("phantom1"), d2 = scratch_dir("phantom2");
  const PhantomSpec spec = small_phantom();
  const auto m1 = generate_dataset(spec, 64, d1);
  const Manifest m = load_manifest(m1);
  CHECK(m.cases.size() == 64);

  const auto one = generate_dataset(spec, 1, d2);
  const Manifest m2 = load_manifest(one);
  REQUIRE(m2.cases.size() == 1);
  CHECK(read_volume(m2.cases[0].image_path).geom.shape == spec.shape);
  CHECK(slurp(m2.cases[0].image_path) == slurp(m.cases[0].image_path));
  CHECK(slurp(m2.cases[0].label_path) == slurp(m.cases[0].label_path));

  generate_dataset(spec, 64, d1);
  CHECK(slurp(m1) == slurp(d1 / "manifest.json"));
}

TEST_CASE("crop_center shapes") {
  PreprocessSpec spec;
  for (auto [n, nz] : {std::pair{384, 24}, std::pair{640, 19}, std::pair{640, 27}, std::pair{384, 15}}) {
    Volume v;
    v.geom = geometry({n, n, nz}, {0.5, 0.5, 3.6});
    v.data.setConstant(v.geom.shape.voxels(), 1.0f);
    const Volume c = crop_center(v, spec);
    CHECK(c.geom.shape == Shape3{216, 216, 18});
    if (nz < 18) CHECK(c.at(0, 0, 0) == 0.0f);  // zero padding
  }

  Volume v = random_volume({216, 216, 18}, 5);
  v.geom.spacing = {0.5, 0.5, 3.6};
  const Volume c = crop_center(v, spec);
  CHECK((c.data == v.data).all());
  CHECK(c.geom.origin == v.geom.origin);

  Volume tiny;
  tiny.geom = geometry({100, 100, 18}, {0.5, 0.5, 3.6});
  tiny.data.setZero(tiny.geom.shape.voxels());
  CHECK_THROWS_AS(crop_center(tiny, spec), SizeError);
}

TEST_CASE("resample") {
  Volume ramp;
  ramp.geom = geometry({216, 216, 18}, {0.5, 0.5, 3.6});
  ramp.data.resize(ramp.geom.shape.voxels());
  for (Index z = 0; z < 18; ++z)
    for (Index y = 0; y < 216; ++y)
      for (Index x = 0; x < 216; ++x) ramp.at(x, y, z) = float(x);

  const Volume r = resample(ramp, {36, 36, 18}, {3.0, 3.0, 3.6});
  CHECK(r.geom.shape == Shape3{36, 36, 18});
  CHECK(r.geom.spacing == Eigen::Vector3d(3.0, 3.0, 3.6));
  // Output voxel i covers input voxels [6i, 6i+6); its centre sits at 6i + 2.5.
  for (Index x = 0; x < 36; ++x) CHECK(r.at(x, 7, 3) == doctest::Approx(6.0 * x + 2.5));
  CHECK(r.geom.origin.x() == doctest::Approx(1.25));

  const Volume same = resample(ramp, ramp.geom.shape, ramp.geom.spacing);
  CHECK((same.data == ramp.data).all());

  LabelVolume l = random_labels({216, 216, 18}, 2);
  l.geom.spacing = {0.5, 0.5, 3.6};
  const LabelVolume lr = resample(l, {36, 36, 18}, {3.0, 3.0, 3.6});
  CHECK(lr.labels.maxCoeff() <= 2);
  CHECK(lr.at(0, 0, 0) == l.at(3, 3, 0));  // nearest to 2.5 rounds to 3
}

TEST_CASE("normalize_intensity") {
  Volume c;
  c.geom = geometry({3, 3, 3});
  c.data.setConstant(27, 4.2f);
  CHECK(normalize_intensity(c).data.isZero());

  const Volume v = random_volume({6, 5, 4}, 8);
  Volume w = v;
  w.data = 3.5f * v.data + 2.0f;
  const Volume nv = normalize_intensity(v), nw = normalize_intensity(w);
  CHECK(nv.data.mean() == doctest::Approx(0.0).epsilon(1e-6));
  CHECK((nv.data - nw.data).abs().maxCoeff() < 1e-5f);
}

TEST_CASE("preprocess_case on a phantom, then a fixed point") {
  const PhantomCase pc = generate_phantom(PhantomSpec{}, 3);
  const auto p = preprocess_case(pc.image, pc.labels, PreprocessSpec{});
  CHECK(p.image.geom.shape == Shape3{36, 36, 18});
  CHECK(p.labels.geom.shape == Shape3{36, 36, 18});
  CHECK(p.image.geom.spacing == Eigen::Vector3d(3.0, 3.0, 3.6));
  CHECK(p.labels.count(kTz) > 0);
  CHECK(p.labels.count(kPz) > 0);

  PreprocessSpec id = PreprocessSpec::identity_for(p.image.geom);
  id.normalize = false;
  const auto q = preprocess_case(p.image, p.labels, id);
  CHECK((q.image.data == p.image.data).all());
  CHECK((q.labels.labels == p.labels.labels).all());

  const auto big = generate_phantom(PhantomSpec{}, 4);
  LabelVolume wrong = big.labels;
  wrong.geom.shape = {384, 384, 23};
  CHECK_THROWS(preprocess_case(big.image, wrong, PreprocessSpec{}));
}

TEST_CASE("sample_transform determinism and identity spec") {
  const AugmentSpec spec;
  const Shape3 s{12, 10, 6};
  const auto a = sample_transform(spec, s, 3, 7), b = sample_transform(spec, s, 3, 7);
  CHECK(a.translation == b.translation);
  CHECK(a.flip == b.flip);
  CHECK(a.scale == b.scale);
  CHECK(a.rotation_deg == b.rotation_deg);
  CHECK(a.displacement == b.displacement);
  const auto c = sample_transform(spec, s, 4, 7);
  CHECK(c.translation != a.translation);

  const auto none = sample_transform(AugmentSpec::none(), s, 1, 2);
  CHECK(none.translation.isZero());
  CHECK_FALSE(none.flip);
  CHECK(none.scale == 1.0);
  CHECK(none.rotation_deg == 0.0);
  CHECK(none.displacement.size() == 0);
}

TEST_CASE("elastic_field") {
  const Shape3 s{10, 9, 5};
  CHECK(elastic_field(s, 0.0, 4.0, 1).isZero());
  const auto f = elastic_field(s, 2.0, 2.0, 5);
  CHECK(f == elastic_field(s, 2.0, 2.0, 5));
  CHECK(f.rows() == s.voxels());
  CHECK(f.cols() == 3);
  CHECK(f.rowwise().norm().maxCoeff() == doctest::Approx(2.0));
}

TEST_CASE("apply_transform invariants") {
  const Shape3 s{9, 8, 5};
  const Volume img = random_volume(s, 1);
  const LabelVolume lab = random_labels(s, 2);

  const auto id = apply_transform(img, lab, TransformParams::identity(s));
  CHECK((id.image.data == img.data).all());
  CHECK((id.labels.labels == lab.labels).all());

  TransformParams flip = TransformParams::identity(s);
  flip.flip = true;
  const auto once = apply_transform(img, lab, flip);
  const auto twice = apply_transform(once.image, once.labels, flip);
  CHECK((twice.image.data == img.data).all());
  CHECK((twice.labels.labels == lab.labels).all());

  Volume delta = img;
  delta.data.setZero();
  delta.at(1, 3, 2) = 1.0f;
  const auto fd = apply_transform(delta, lab, flip);
  CHECK(fd.image.at(s.nx - 1 - 1, 3, 2) == 1.0f);
  CHECK(fd.image.data.sum() == 1.0f);

  const AugmentSpec spec;
  LabelVolume two = lab;
  for (Index i = 0; i < two.labels.size(); ++i) two.labels(i) = two.labels(i) == 2 ? 2 : 0;
  for (int k = 0; k < 100; ++k) {
    const auto t = sample_transform(spec, s, k, k % 7);
    const auto out = apply_transform(img, two, t);
    std::set<int> seen(out.labels.labels.data(), out.labels.labels.data() + out.labels.labels.size());
    CHECK(seen.count(1) == 0);
    CHECK(*seen.rbegin() <= 2);
  }
}
