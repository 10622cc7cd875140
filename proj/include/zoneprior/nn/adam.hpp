#pragma once

#include <cmath>
#include <vector>

#include "zoneprior/nn/tensor.hpp"

namespace zoneprior::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
};

/// Bias-corrected Adam over every parameter of a store.
template <typename Scalar>
class Adam {
 public:
  Adam(const ParamStore<Scalar>& ps, AdamConfig cfg) : cfg_(cfg), m_(ps.zeros_like()), v_(ps.zeros_like()) {}

  void step(ParamStore<Scalar>& ps, const GradStore<Scalar>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    const Scalar lr = Scalar(cfg_.learning_rate * std::sqrt(c2) / c1);
    const Scalar b1 = Scalar(cfg_.beta1), b2 = Scalar(cfg_.beta2);
    const Scalar eps = Scalar(cfg_.epsilon * std::sqrt(c2));
    for (int i = 0; i < ps.size(); ++i) {
      m_[i] = b1 * m_[i] + (Scalar(1) - b1) * grads[i];
      v_[i] = b2 * v_[i] + (Scalar(1) - b2) * grads[i].cwiseProduct(grads[i]);
      ps[i].array() -= lr * m_[i].array() / (v_[i].array().sqrt() + eps);
    }
  }

  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  GradStore<Scalar> m_;
  GradStore<Scalar> v_;
  long t_ = 0;
};

}  // namespace zoneprior::nn
