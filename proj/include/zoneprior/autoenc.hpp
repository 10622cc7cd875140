#pragma once

#include <array>
#include <cstdint>
#include <random>

#include <json.hpp>

#include "zoneprior/nn/layers.hpp"
#include "zoneprior/volgrid.hpp"

namespace zoneprior {

/// Compressed shape representation: rows are latent voxels, columns channels.
template <typename Scalar>
struct EncodingT {
  Shape3 grid;
  MatX<Scalar> latent;
};

using Encoding = EncodingT<float>;

struct AeConfig {
  int latent_channels = 1;
  std::array<int, 2> filters{16, 32};
  Shape3 input{36, 36, 18};
  std::uint64_t seed = 0;

  void validate() const;
  /// Grid after the two stride-2 stages, e.g. (36,36,18) -> (9,9,5).
  Shape3 latent_grid() const;
  Shape3 mid_grid() const;
};

void to_json(nlohmann::json& j, const AeConfig& c);
void from_json(const nlohmann::json& j, AeConfig& c);

/// Fully convolutional autoencoder over two-channel (TZ, PZ) masks.
///
/// encoder: conv3 -> relu -> stride-2 conv3 -> relu -> conv3 -> relu ->
///          stride-2 conv3 -> relu -> 1x1x1 conv to K (linear latent)
/// decoder: 1x1x1 conv -> relu -> transposed conv3 -> relu -> conv3 -> relu ->
///          transposed conv3 -> relu -> conv3 to 2 channels -> logistic
///
/// Stride-2 stages map n -> ceil(n/2); transposed stages target the
/// encoder's grids exactly, so no output cropping is needed.
template <typename Scalar>
class Autoencoder {
 public:
  using Trace = typename nn::Sequential<Scalar>::Trace;

  struct ForwardTrace {
    Trace encoder;
    Trace decoder;
    MatX<Scalar> output;  // sigmoid probabilities
  };

  explicit Autoencoder(const AeConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(cfg_.seed);
    const auto [f0, f1] = cfg_.filters;
    const int k = cfg_.latent_channels;
    using nn::Conv3d;
    using nn::ConvSpec;
    using nn::ConvTranspose3d;
    encoder_.push(Conv3d<Scalar>::create(ps_, "encoder.conv1", kNumZones, f0, ConvSpec::same(3, 3, 3), rng));
    encoder_.push(nn::Relu{});
    encoder_.push(Conv3d<Scalar>::create(ps_, "encoder.down1", f0, f0, ConvSpec::halve(), rng));
    encoder_.push(nn::Relu{});
    encoder_.push(Conv3d<Scalar>::create(ps_, "encoder.conv2", f0, f1, ConvSpec::same(3, 3, 3), rng));
    encoder_.push(nn::Relu{});
    encoder_.push(Conv3d<Scalar>::create(ps_, "encoder.down2", f1, f1, ConvSpec::halve(), rng));
    encoder_.push(nn::Relu{});
    encoder_.push(Conv3d<Scalar>::create(ps_, "encoder.latent", f1, k, ConvSpec::point(), rng));
    encoder_param_count_ = ps_.size();

    decoder_.push(Conv3d<Scalar>::create(ps_, "decoder.expand", k, f1, ConvSpec::point(), rng));
    decoder_.push(nn::Relu{});
    decoder_.push(ConvTranspose3d<Scalar>::create(ps_, "decoder.up2", f1, f1, ConvSpec::halve(), cfg_.mid_grid(), rng));
    decoder_.push(nn::Relu{});
    decoder_.push(Conv3d<Scalar>::create(ps_, "decoder.conv2", f1, f0, ConvSpec::same(3, 3, 3), rng));
    decoder_.push(nn::Relu{});
    decoder_.push(ConvTranspose3d<Scalar>::create(ps_, "decoder.up1", f0, f0, ConvSpec::halve(), cfg_.input, rng));
    decoder_.push(nn::Relu{});
    decoder_.push(Conv3d<Scalar>::create(ps_, "decoder.out", f0, kNumZones, ConvSpec::same(3, 3, 3), rng));
  }

  const AeConfig& config() const { return cfg_; }
  nn::ParamStore<Scalar>& params() { return ps_; }
  const nn::ParamStore<Scalar>& params() const { return ps_; }
  /// Parameters [0, n) belong to the encoder.
  int encoder_param_count() const { return encoder_param_count_; }

  EncodingT<Scalar> encode(const MaskStackT<Scalar>& s, Trace* trace = nullptr) const {
    check_input(s);
    auto y = encoder_.forward(ps_, {s.shape, s.masks}, trace);
    return {y.grid, std::move(y.data)};
  }

  MaskStackT<Scalar> decode(const EncodingT<Scalar>& e, Trace* trace = nullptr) const {
    if (!(e.grid == cfg_.latent_grid()) || e.latent.rows() != e.grid.voxels() ||
        e.latent.cols() != cfg_.latent_channels)
      throw ValidationError("decode: encoding shape does not match the autoencoder");
    auto logits = decoder_.forward(ps_, {e.grid, e.latent}, trace);
    return {logits.grid, nn::sigmoid(logits.data)};
  }

  MaskStackT<Scalar> forward(const MaskStackT<Scalar>& s, ForwardTrace* trace = nullptr) const {
    auto out = decode(encode(s, trace ? &trace->encoder : nullptr), trace ? &trace->decoder : nullptr);
    if (trace) trace->output = out.masks;
    return out;
  }

  /// Accumulates gradients of a loss whose derivative with respect to the
  /// output logits is `dlogits`.
  void backward(const ForwardTrace& trace, const MatX<Scalar>& dlogits, nn::GradStore<Scalar>& grads) const {
    auto de = decoder_.backward(ps_, trace.decoder, {cfg_.input, dlogits}, &grads, true);
    encoder_.backward(ps_, trace.encoder, de, &grads, false);
  }

  /// Gradient of a latent-space loss with respect to the encoder input.
  /// Parameter gradients are not touched.
  MatX<Scalar> encoder_input_grad(const Trace& trace, const MatX<Scalar>& dlatent) const {
    return encoder_.backward(ps_, trace, {cfg_.latent_grid(), dlatent}, nullptr, true).data;
  }

 private:
  void check_input(const MaskStackT<Scalar>& s) const {
    if (!(s.shape == cfg_.input) || s.masks.rows() != s.shape.voxels() || s.masks.cols() != kNumZones)
      throw ValidationError("autoencoder input must be " + cfg_.input.str() + " x 2");
  }

  AeConfig cfg_;
  nn::ParamStore<Scalar> ps_;
  nn::Sequential<Scalar> encoder_;
  nn::Sequential<Scalar> decoder_;
  int encoder_param_count_ = 0;
};

template <typename Scalar = float>
Autoencoder<Scalar> init_autoencoder(const AeConfig& cfg) {
  return Autoencoder<Scalar>(cfg);
}

template <typename Scalar>
EncodingT<Scalar> encode(const Autoencoder<Scalar>& ae, const MaskStackT<Scalar>& s) {
  return ae.encode(s);
}

template <typename Scalar>
MaskStackT<Scalar> decode(const Autoencoder<Scalar>& ae, const EncodingT<Scalar>& e) {
  return ae.decode(e);
}

template <typename Scalar>
MaskStackT<Scalar> ae_forward(const Autoencoder<Scalar>& ae, const MaskStackT<Scalar>& s) {
  return ae.forward(s);
}

}  // namespace zoneprior
