#pragma once

#include <array>
#include <cstdint>
#include <random>

#include <json.hpp>

#include "zoneprior/nn/layers.hpp"
#include "zoneprior/volgrid.hpp"

namespace zoneprior {

struct UnetConfig {
  std::array<int, 3> filters{16, 32, 64};
  Shape3 input{36, 36, 18};
  /// Coefficient of the squared-kernel penalty.
  double l2 = 1e-5;
  std::uint64_t seed = 0;

  void validate() const;
  /// Grid of each level: input, after one pooling, after two.
  std::array<Shape3, 3> level_grids() const;
};

void to_json(nlohmann::json& j, const UnetConfig& c);
void from_json(const nlohmann::json& j, UnetConfig& c);

/// Three-level U-Net. Level 0 uses in-plane 3x3x1 kernels (z extent 1);
/// deeper levels use 3x3x3. Pooling is 2x2x2 max in ceil mode, upsampling a
/// stride-2 transposed convolution aimed at the skip tensor's grid, followed
/// by channel concatenation with the skip. A 1x1x1 head and per-voxel
/// softmax give (background, TZ, PZ) probabilities.
template <typename Scalar>
class UNet {
 public:
  using Seq = nn::Sequential<Scalar>;

  struct ForwardTrace {
    typename Seq::Trace enc0, enc1, bottom, dec1, dec0, head;
    nn::Tensor<Scalar> skip0, skip1, pooled0, pooled1, bottom_out, up1_in, dec1_out, up0_in;
    std::vector<Index> pool0_arg, pool1_arg;
    MatX<Scalar> probs;
  };

  explicit UNet(const UnetConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const auto grids = cfg_.level_grids();
    std::mt19937_64 rng(cfg_.seed);
    const auto [f0, f1, f2] = cfg_.filters;
    using nn::Conv3d;
    using nn::ConvSpec;
    const ConvSpec planar = ConvSpec::same(3, 3, 1);
    const ConvSpec cube = ConvSpec::same(3, 3, 3);

    auto pair = [&](Seq& s, const std::string& name, int cin, int cout, const ConvSpec& k) {
      s.push(Conv3d<Scalar>::create(ps_, name + ".conv1", cin, cout, k, rng));
      s.push(nn::Relu{});
      s.push(Conv3d<Scalar>::create(ps_, name + ".conv2", cout, cout, k, rng));
      s.push(nn::Relu{});
    };
    pair(enc0_, "level0.down", 1, f0, planar);
    pair(enc1_, "level1.down", f0, f1, cube);
    pair(bottom_, "level2", f1, f2, cube);
    up1_ = nn::ConvTranspose3d<Scalar>::create(ps_, "level1.up", f2, f1, ConvSpec::halve(), grids[1], rng);
    pair(dec1_, "level1.merge", 2 * f1, f1, cube);
    up0_ = nn::ConvTranspose3d<Scalar>::create(ps_, "level0.up", f1, f0, ConvSpec::halve(), grids[0], rng);
    pair(dec0_, "level0.merge", 2 * f0, f0, planar);
    head_.push(Conv3d<Scalar>::create(ps_, "head", f0, kNumClasses, ConvSpec::point(), rng));
  }

  const UnetConfig& config() const { return cfg_; }
  nn::ParamStore<Scalar>& params() { return ps_; }
  const nn::ParamStore<Scalar>& params() const { return ps_; }

  /// Per-voxel class probabilities (voxels x 3) for a single-channel image.
  MatX<Scalar> forward(const MatX<Scalar>& image, ForwardTrace* t = nullptr) const {
    if (image.rows() != cfg_.input.voxels() || image.cols() != 1)
      throw ValidationError("U-Net input must be " + cfg_.input.str() + " x 1");
    ForwardTrace local;
    ForwardTrace& tr = t ? *t : local;
    const nn::MaxPool2 pool;

    tr.skip0 = enc0_.forward(ps_, {cfg_.input, image}, &tr.enc0);
    tr.pooled0 = pool.forward(tr.skip0, &tr.pool0_arg);
    tr.skip1 = enc1_.forward(ps_, tr.pooled0, &tr.enc1);
    tr.pooled1 = pool.forward(tr.skip1, &tr.pool1_arg);
    tr.bottom_out = bottom_.forward(ps_, tr.pooled1, &tr.bottom);

    tr.up1_in = concat(up1_.forward(ps_, tr.bottom_out), tr.skip1);
    tr.dec1_out = dec1_.forward(ps_, tr.up1_in, &tr.dec1);
    tr.up0_in = concat(up0_.forward(ps_, tr.dec1_out), tr.skip0);
    const auto d0 = dec0_.forward(ps_, tr.up0_in, &tr.dec0);
    tr.probs = nn::softmax_rows(head_.forward(ps_, d0, &tr.head).data);
    return tr.probs;
  }

  /// Accumulates parameter gradients given d loss / d logits.
  void backward(const ForwardTrace& tr, const MatX<Scalar>& dlogits, nn::GradStore<Scalar>& grads,
                MatX<Scalar>* dimage = nullptr) const {
    const nn::MaxPool2 pool;
    const auto grids = cfg_.level_grids();
    const Index f0 = cfg_.filters[0], f1 = cfg_.filters[1];

    auto d = head_.backward(ps_, tr.head, {grids[0], dlogits}, &grads);
    d = dec0_.backward(ps_, tr.dec0, std::move(d), &grads);
    nn::Tensor<Scalar> dskip0{grids[0], d.data.rightCols(f0)};
    auto dd1 = up0_.backward(ps_, tr.dec1_out, {grids[0], d.data.leftCols(f0)}, &grads);
    d = dec1_.backward(ps_, tr.dec1, std::move(dd1), &grads);
    nn::Tensor<Scalar> dskip1{grids[1], d.data.rightCols(f1)};
    auto db = up1_.backward(ps_, tr.bottom_out, {grids[1], d.data.leftCols(f1)}, &grads);
    db = bottom_.backward(ps_, tr.bottom, std::move(db), &grads);

    dskip1.data += pool.backward(db, grids[1], tr.pool1_arg).data;
    auto dp0 = enc1_.backward(ps_, tr.enc1, std::move(dskip1), &grads);
    dskip0.data += pool.backward(dp0, grids[0], tr.pool0_arg).data;
    auto dx = enc0_.backward(ps_, tr.enc0, std::move(dskip0), &grads, dimage != nullptr);
    if (dimage) *dimage = std::move(dx.data);
  }

  void add_l2_grad(double coefficient, nn::GradStore<Scalar>& grads) const {
    for (int i = 0; i < ps_.size(); ++i)
      if (ps_.info(i).is_kernel) grads[i] += Scalar(2.0 * coefficient) * ps_[i];
  }

  /// Kernel extents along z of the level-0 convolutions.
  std::vector<int> level0_kernel_depths() const {
    std::vector<int> out;
    for (const auto* seq : {&enc0_, &dec0_})
      for (const auto& l : seq->layers())
        if (const auto* c = std::get_if<nn::Conv3d<Scalar>>(&l)) out.push_back(c->spec.kernel[2]);
    return out;
  }

 private:
  static nn::Tensor<Scalar> concat(const nn::Tensor<Scalar>& a, const nn::Tensor<Scalar>& b) {
    if (!(a.grid == b.grid))
      throw ValidationError("skip connection grids differ: " + a.grid.str() + " vs " + b.grid.str());
    nn::Tensor<Scalar> out{a.grid, MatX<Scalar>(a.data.rows(), a.data.cols() + b.data.cols())};
    out.data << a.data, b.data;
    return out;
  }

  UnetConfig cfg_;
  nn::ParamStore<Scalar> ps_;
  Seq enc0_, enc1_, bottom_, dec1_, dec0_, head_;
  nn::ConvTranspose3d<Scalar> up1_, up0_;
};

template <typename Scalar = float>
UNet<Scalar> init_unet(const UnetConfig& cfg) {
  return UNet<Scalar>(cfg);
}

template <typename Scalar>
ProbVolumeT<Scalar> unet_forward(const UNet<Scalar>& net, const VolumeT<Scalar>& image) {
  ProbVolumeT<Scalar> p;
  p.geom = image.geom;
  p.probs = net.forward(image.data.matrix());
  return p;
}

template <typename Scalar>
LabelVolume predict_labels(const UNet<Scalar>& net, const VolumeT<Scalar>& image) {
  return argmax_labels(unet_forward(net, image));
}

/// coefficient * sum of squared convolution-kernel weights.
template <typename Scalar>
double l2_penalty(const nn::ParamStore<Scalar>& ps, double coefficient) {
  if (!(coefficient >= 0.0)) throw ValidationError("L2 coefficient must be >= 0");
  double s = 0.0;
  for (int i = 0; i < ps.size(); ++i)
    if (ps.info(i).is_kernel) s += ps[i].template cast<double>().squaredNorm();
  return coefficient * s;
}

}  // namespace zoneprior
