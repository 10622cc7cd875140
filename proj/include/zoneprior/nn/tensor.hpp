#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "zoneprior/volgrid.hpp"

namespace zoneprior::nn {

/// Feature map: rows are voxels (x fastest), columns are channels.
template <typename Scalar>
struct Tensor {
  Shape3 grid;
  MatX<Scalar> data;

  Index channels() const { return data.cols(); }
};

struct ParamInfo {
  std::string name;
  /// Logical C-order shape used in checkpoints.
  std::vector<int> shape;
  /// Convolution kernels carry the L2 penalty; biases do not.
  bool is_kernel = false;
};

/// Named parameter matrices of one model.
template <typename Scalar>
class ParamStore {
 public:
  int add(ParamInfo info, MatX<Scalar> value) {
    info_.push_back(std::move(info));
    values_.push_back(std::move(value));
    return int(values_.size()) - 1;
  }

  int size() const { return int(values_.size()); }
  const MatX<Scalar>& operator[](int i) const { return values_[i]; }
  MatX<Scalar>& operator[](int i) { return values_[i]; }
  const ParamInfo& info(int i) const { return info_[i]; }

  Index scalar_count() const {
    Index n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }

  /// Zero matrices shaped like every parameter.
  std::vector<MatX<Scalar>> zeros_like() const {
    std::vector<MatX<Scalar>> z;
    z.reserve(values_.size());
    for (const auto& v : values_) z.push_back(MatX<Scalar>::Zero(v.rows(), v.cols()));
    return z;
  }

  template <typename Other>
  ParamStore<Other> cast() const {
    ParamStore<Other> out;
    for (int i = 0; i < size(); ++i) out.add(info_[i], values_[i].template cast<Other>());
    return out;
  }

  int find(const std::string& name) const {
    for (int i = 0; i < size(); ++i)
      if (info_[i].name == name) return i;
    return -1;
  }

 private:
  std::vector<ParamInfo> info_;
  std::vector<MatX<Scalar>> values_;
};

template <typename Scalar>
using GradStore = std::vector<MatX<Scalar>>;

/// Deterministic He-normal initialisation; draws in double so float and
/// double models built from one seed hold the same values.
template <typename Scalar>
MatX<Scalar> he_normal(Index rows, Index cols, double fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, std::sqrt(2.0 / fan_in));
  MatX<Scalar> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = Scalar(n(rng));
  return m;
}

}  // namespace zoneprior::nn
