#pragma once

#include <algorithm>
#include <array>
#include <limits>
#include <random>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "zoneprior/nn/tensor.hpp"

namespace zoneprior::nn {

/// Kernel / stride / zero-padding per axis, ordered (x, y, z).
struct ConvSpec {
  std::array<int, 3> kernel{3, 3, 3};
  std::array<int, 3> stride{1, 1, 1};
  std::array<int, 3> pad{1, 1, 1};

  int taps() const { return kernel[0] * kernel[1] * kernel[2]; }
  bool pointwise() const { return taps() == 1 && stride == std::array<int, 3>{1, 1, 1}; }

  /// Stride-1 convolution preserving the grid.
  static ConvSpec same(int kx, int ky, int kz) { return {{kx, ky, kz}, {1, 1, 1}, {kx / 2, ky / 2, kz / 2}}; }
  /// 3x3x3, stride 2, pad 1: n -> ceil(n / 2) on every axis.
  static ConvSpec halve() { return {{3, 3, 3}, {2, 2, 2}, {1, 1, 1}}; }
  static ConvSpec point() { return {{1, 1, 1}, {1, 1, 1}, {0, 0, 0}}; }
};

inline Shape3 conv_output_shape(const Shape3& in, const ConvSpec& s) {
  const std::array<int, 3> n{in.nx, in.ny, in.nz};
  std::array<int, 3> o{};
  for (int a = 0; a < 3; ++a) {
    const int span = n[a] + 2 * s.pad[a] - s.kernel[a];
    if (span < 0) throw ValidationError("convolution kernel larger than padded input " + in.str());
    o[a] = span / s.stride[a] + 1;
  }
  return {o[0], o[1], o[2]};
}

/// Output positions [lo, hi) whose tap kx lands inside [0, n_in).
inline std::pair<int, int> valid_span(int n_in, int n_out, int stride, int pad, int kx) {
  const int off = kx - pad;
  const int lo = std::clamp(off >= 0 ? 0 : (-off + stride - 1) / stride, 0, n_out);
  const int hi = std::clamp(n_in - 1 - off < 0 ? 0 : (n_in - 1 - off) / stride + 1, 0, n_out);
  return {lo, std::max(lo, hi)};
}

/// Patch matrix: one row per output voxel, column c * taps + tap for input
/// channel c, tap = (kz * ky_extent + ky) * kx_extent + kx. Zero padding.
template <typename Scalar>
void im2col(const MatX<Scalar>& x, const Shape3& in, const Shape3& out, const ConvSpec& s, MatX<Scalar>& cols) {
  const int taps = s.taps();
  cols.resize(out.voxels(), x.cols() * taps);
  for (Index c = 0; c < x.cols(); ++c) {
    const Scalar* src = x.col(c).data();
    for (int kz = 0; kz < s.kernel[2]; ++kz)
      for (int ky = 0; ky < s.kernel[1]; ++ky)
        for (int kx = 0; kx < s.kernel[0]; ++kx) {
          const Index col = c * taps + (kz * s.kernel[1] + ky) * s.kernel[0] + kx;
          const auto [lo, hi] = valid_span(in.nx, out.nx, s.stride[0], s.pad[0], kx);
          Scalar* dst = cols.col(col).data();
          for (int oz = 0; oz < out.nz; ++oz) {
            const int iz = oz * s.stride[2] - s.pad[2] + kz;
            for (int oy = 0; oy < out.ny; ++oy) {
              Scalar* d = dst + out.index(0, oy, oz);
              const int iy = oy * s.stride[1] - s.pad[1] + ky;
              if (iz < 0 || iz >= in.nz || iy < 0 || iy >= in.ny) {
                std::fill(d, d + out.nx, Scalar(0));
                continue;
              }
              const Scalar* row = src + in.index(0, iy, iz);
              const int off = kx - s.pad[0];
              std::fill(d, d + lo, Scalar(0));
              if (s.stride[0] == 1)
                std::copy(row + lo + off, row + hi + off, d + lo);
              else
                for (int ox = lo; ox < hi; ++ox) d[ox] = row[ox * s.stride[0] + off];
              std::fill(d + hi, d + out.nx, Scalar(0));
            }
          }
        }
  }
}

/// Adjoint of im2col: scatter-add patch columns back onto the input grid.
template <typename Scalar>
MatX<Scalar> col2im(const MatX<Scalar>& cols, const Shape3& in, const Shape3& out, const ConvSpec& s, Index channels) {
  const int taps = s.taps();
  MatX<Scalar> x = MatX<Scalar>::Zero(in.voxels(), channels);
  for (Index c = 0; c < channels; ++c) {
    Scalar* dst = x.col(c).data();
    for (int kz = 0; kz < s.kernel[2]; ++kz)
      for (int ky = 0; ky < s.kernel[1]; ++ky)
        for (int kx = 0; kx < s.kernel[0]; ++kx) {
          const Index col = c * taps + (kz * s.kernel[1] + ky) * s.kernel[0] + kx;
          const auto [lo, hi] = valid_span(in.nx, out.nx, s.stride[0], s.pad[0], kx);
          const Scalar* src = cols.col(col).data();
          for (int oz = 0; oz < out.nz; ++oz) {
            const int iz = oz * s.stride[2] - s.pad[2] + kz;
            if (iz < 0 || iz >= in.nz) continue;
            for (int oy = 0; oy < out.ny; ++oy) {
              const int iy = oy * s.stride[1] - s.pad[1] + ky;
              if (iy < 0 || iy >= in.ny) continue;
              const Scalar* d = src + out.index(0, oy, oz);
              Scalar* row = dst + in.index(0, iy, iz);
              const int off = kx - s.pad[0];
              for (int ox = lo; ox < hi; ++ox) row[ox * s.stride[0] + off] += d[ox];
            }
          }
        }
  }
  return x;
}

/// Convolution with bias. Weight is (cin * taps) x cout, stored in
/// checkpoints as [cout, cin, kz, ky, kx].
template <typename Scalar>
struct Conv3d {
  int weight = -1;
  int bias = -1;
  int cin = 0;
  int cout = 0;
  ConvSpec spec;

  static Conv3d create(ParamStore<Scalar>& ps, const std::string& name, int cin, int cout, const ConvSpec& spec,
                       std::mt19937_64& rng) {
    Conv3d l{-1, -1, cin, cout, spec};
    const int taps = spec.taps();
    l.weight = ps.add({name + ".weight", {cout, cin, spec.kernel[2], spec.kernel[1], spec.kernel[0]}, true},
                      he_normal<Scalar>(Index(cin) * taps, cout, double(cin) * taps, rng));
    l.bias = ps.add({name + ".bias", {cout}, false}, MatX<Scalar>::Zero(1, cout));
    return l;
  }

  Tensor<Scalar> forward(const ParamStore<Scalar>& ps, const Tensor<Scalar>& x) const {
    if (x.channels() != cin) throw ValidationError("conv: expected " + std::to_string(cin) + " input channels");
    Tensor<Scalar> y{conv_output_shape(x.grid, spec), {}};
    if (spec.pointwise()) {
      y.data.noalias() = x.data * ps[weight];
    } else {
      MatX<Scalar> cols;
      im2col(x.data, x.grid, y.grid, spec, cols);
      y.data.noalias() = cols * ps[weight];
    }
    y.data.rowwise() += ps[bias].row(0);
    return y;
  }

  Tensor<Scalar> backward(const ParamStore<Scalar>& ps, const Tensor<Scalar>& x, const Tensor<Scalar>& dy,
                          GradStore<Scalar>* grads, bool need_dx = true) const {
    Tensor<Scalar> dx{x.grid, {}};
    if (spec.pointwise()) {
      if (grads) {
        (*grads)[weight].noalias() += x.data.transpose() * dy.data;
        (*grads)[bias] += dy.data.colwise().sum();
      }
      if (need_dx) dx.data.noalias() = dy.data * ps[weight].transpose();
      return dx;
    }
    MatX<Scalar> cols;
    im2col(x.data, x.grid, dy.grid, spec, cols);
    if (grads) {
      (*grads)[weight].noalias() += cols.transpose() * dy.data;
      (*grads)[bias] += dy.data.colwise().sum();
    }
    if (need_dx) {
      cols.noalias() = dy.data * ps[weight].transpose();
      dx.data = col2im(cols, x.grid, dy.grid, spec, cin);
    }
    return dx;
  }
};

/// Transposed convolution onto an explicit output grid; the adjoint of a
/// Conv3d with the same spec mapping `out_grid` to the input grid. Weight is
/// (cout * taps) x cin, stored as [cin, cout, kz, ky, kx].
template <typename Scalar>
struct ConvTranspose3d {
  int weight = -1;
  int bias = -1;
  int cin = 0;
  int cout = 0;
  ConvSpec spec;
  Shape3 out_grid;

  static ConvTranspose3d create(ParamStore<Scalar>& ps, const std::string& name, int cin, int cout,
                                const ConvSpec& spec, const Shape3& out_grid, std::mt19937_64& rng) {
    ConvTranspose3d l{-1, -1, cin, cout, spec, out_grid};
    const int taps = spec.taps();
    const double fan_in = double(cin) * taps / (spec.stride[0] * spec.stride[1] * spec.stride[2]);
    l.weight = ps.add({name + ".weight", {cin, cout, spec.kernel[2], spec.kernel[1], spec.kernel[0]}, true},
                      he_normal<Scalar>(Index(cout) * taps, cin, fan_in, rng));
    l.bias = ps.add({name + ".bias", {cout}, false}, MatX<Scalar>::Zero(1, cout));
    return l;
  }

  Tensor<Scalar> forward(const ParamStore<Scalar>& ps, const Tensor<Scalar>& x) const {
    if (x.channels() != cin) throw ValidationError("transposed conv: unexpected input channel count");
    if (!(conv_output_shape(out_grid, spec) == x.grid))
      throw ValidationError("transposed conv: input grid " + x.grid.str() + " does not match target " +
                            out_grid.str());
    const MatX<Scalar> cols = x.data * ps[weight].transpose();
    Tensor<Scalar> y{out_grid, col2im(cols, out_grid, x.grid, spec, cout)};
    y.data.rowwise() += ps[bias].row(0);
    return y;
  }

  Tensor<Scalar> backward(const ParamStore<Scalar>& ps, const Tensor<Scalar>& x, const Tensor<Scalar>& dy,
                          GradStore<Scalar>* grads, bool need_dx = true) const {
    MatX<Scalar> cols;
    im2col(dy.data, out_grid, x.grid, spec, cols);
    if (grads) {
      (*grads)[weight].noalias() += cols.transpose() * x.data;
      (*grads)[bias] += dy.data.colwise().sum();
    }
    Tensor<Scalar> dx{x.grid, {}};
    if (need_dx) dx.data.noalias() = cols * ps[weight];
    return dx;
  }
};

struct Relu {
  template <typename Scalar>
  Tensor<Scalar> forward(const ParamStore<Scalar>&, const Tensor<Scalar>& x) const {
    return {x.grid, x.data.cwiseMax(Scalar(0))};
  }
  template <typename Scalar>
  Tensor<Scalar> backward(const ParamStore<Scalar>&, const Tensor<Scalar>& x, const Tensor<Scalar>& dy,
                          GradStore<Scalar>*, bool = true) const {
    return {x.grid, (dy.data.array() * (x.data.array() > Scalar(0)).template cast<Scalar>()).matrix()};
  }
};

/// 2x2x2 max pooling, ceil mode (partial windows at the far edges).
struct MaxPool2 {
  static Shape3 output_shape(const Shape3& in) { return {(in.nx + 1) / 2, (in.ny + 1) / 2, (in.nz + 1) / 2}; }

  template <typename Scalar>
  Tensor<Scalar> forward(const Tensor<Scalar>& x, std::vector<Index>* argmax) const {
    const Shape3& in = x.grid;
    Tensor<Scalar> y{output_shape(in), {}};
    y.data.resize(y.grid.voxels(), x.channels());
    if (argmax) argmax->assign(std::size_t(y.data.size()), 0);
    for (Index c = 0; c < x.channels(); ++c)
      for (int oz = 0; oz < y.grid.nz; ++oz)
        for (int oy = 0; oy < y.grid.ny; ++oy)
          for (int ox = 0; ox < y.grid.nx; ++ox) {
            Scalar best = -std::numeric_limits<Scalar>::infinity();
            Index best_at = 0;
            for (int dz = 0; dz < 2; ++dz)
              for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                  const int ix = 2 * ox + dx, iy = 2 * oy + dy, iz = 2 * oz + dz;
                  if (!in.contains(ix, iy, iz)) continue;
                  const Index v = in.index(ix, iy, iz);
                  if (x.data(v, c) > best) {
                    best = x.data(v, c);
                    best_at = v;
                  }
                }
            const Index o = y.grid.index(ox, oy, oz);
            y.data(o, c) = best;
            if (argmax) (*argmax)[std::size_t(o + c * y.data.rows())] = best_at;
          }
    return y;
  }

  template <typename Scalar>
  Tensor<Scalar> backward(const Tensor<Scalar>& dy, const Shape3& in, const std::vector<Index>& argmax) const {
    Tensor<Scalar> dx{in, MatX<Scalar>::Zero(in.voxels(), dy.channels())};
    for (Index c = 0; c < dy.channels(); ++c)
      for (Index o = 0; o < dy.data.rows(); ++o)
        dx.data(argmax[std::size_t(o + c * dy.data.rows())], c) += dy.data(o, c);
    return dx;
  }
};

template <typename Scalar>
using Layer = std::variant<Conv3d<Scalar>, ConvTranspose3d<Scalar>, Relu>;

/// Chain of layers. Forward records each layer's input so backward can run
/// without a second forward pass.
template <typename Scalar>
class Sequential {
 public:
  using Trace = std::vector<Tensor<Scalar>>;

  void push(Layer<Scalar> l) { layers_.push_back(std::move(l)); }
  const std::vector<Layer<Scalar>>& layers() const { return layers_; }

  Tensor<Scalar> forward(const ParamStore<Scalar>& ps, Tensor<Scalar> x, Trace* trace = nullptr) const {
    if (trace) trace->clear();
    for (const auto& layer : layers_) {
      Tensor<Scalar> y = std::visit([&](const auto& l) { return l.forward(ps, x); }, layer);
      if (trace) trace->push_back(std::move(x));
      x = std::move(y);
    }
    return x;
  }

  /// Accumulates parameter gradients into `grads` (skipped when null).
  Tensor<Scalar> backward(const ParamStore<Scalar>& ps, const Trace& trace, Tensor<Scalar> dy,
                          GradStore<Scalar>* grads, bool need_input_grad = true) const {
    for (std::size_t i = layers_.size(); i-- > 0;) {
      const bool need_dx = need_input_grad || i > 0;
      dy = std::visit([&](const auto& l) { return l.backward(ps, trace[i], dy, grads, need_dx); }, layers_[i]);
    }
    return dy;
  }

 private:
  std::vector<Layer<Scalar>> layers_;
};

template <typename Scalar>
MatX<Scalar> sigmoid(const MatX<Scalar>& z) {
  return (Scalar(1) + (-z.array()).exp()).inverse().matrix();
}

/// Row-wise softmax.
template <typename Scalar>
MatX<Scalar> softmax_rows(const MatX<Scalar>& z) {
  MatX<Scalar> p = (z.colwise() - z.rowwise().maxCoeff()).array().exp().matrix();
  p.array().colwise() /= p.rowwise().sum().array();
  return p;
}

/// Vector-Jacobian product of row-wise softmax.
template <typename Scalar>
MatX<Scalar> softmax_rows_backward(const MatX<Scalar>& p, const MatX<Scalar>& dp) {
  const auto dot = (p.array() * dp.array()).rowwise().sum();
  return (p.array() * (dp.array().colwise() - dot)).matrix();
}

}  // namespace zoneprior::nn
