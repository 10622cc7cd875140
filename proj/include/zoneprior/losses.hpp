#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "zoneprior/volgrid.hpp"

namespace zoneprior {

enum class WeightSchedule { kConstant, kLinearDecay };

WeightSchedule parse_schedule(const std::string& name);
std::string to_string(WeightSchedule s);

struct LossConfig {
  /// background, TZ, PZ
  std::array<double, kNumClasses> class_weights{1.0, 2.0, 6.0};
  double global_weight = 0.2;
  WeightSchedule schedule = WeightSchedule::kConstant;
  double epsilon = 1e-7;

  void validate() const;
};

namespace detail {

template <typename Scalar>
void require_same_shape(const MatX<Scalar>& a, const MatX<Scalar>& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ValidationError(std::string(what) + ": shape mismatch");
}

}  // namespace detail

/// Mean over all entries of -[t ln p + (1-t) ln(1-p)], p clamped to [eps, 1-eps].
template <typename Scalar>
double bce(const MatX<Scalar>& pred, const MatX<Scalar>& target, double eps = 1e-7) {
  detail::require_same_shape(pred, target, "bce");
  double sum = 0.0;
  for (Index i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(double(pred.data()[i]), eps, 1.0 - eps);
    const double t = double(target.data()[i]);
    sum -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  return sum / double(pred.size());
}

/// d bce / d pred. Zero where the clamp is active.
template <typename Scalar>
MatX<Scalar> bce_grad(const MatX<Scalar>& pred, const MatX<Scalar>& target, double eps = 1e-7) {
  detail::require_same_shape(pred, target, "bce_grad");
  MatX<Scalar> g(pred.rows(), pred.cols());
  const double inv_n = 1.0 / double(pred.size());
  for (Index i = 0; i < pred.size(); ++i) {
    const double p = double(pred.data()[i]);
    const double t = double(target.data()[i]);
    g.data()[i] = (p < eps || p > 1.0 - eps) ? Scalar(0) : Scalar(inv_n * (p - t) / (p * (1.0 - p)));
  }
  return g;
}

/// Gradient of bce(sigmoid(z), t) with respect to the logits z, given p = sigmoid(z).
template <typename Scalar>
MatX<Scalar> bce_logit_grad(const MatX<Scalar>& pred, const MatX<Scalar>& target) {
  detail::require_same_shape(pred, target, "bce_logit_grad");
  return (pred - target) / Scalar(pred.size());
}

template <typename Scalar>
void require_one_hot(const MatX<Scalar>& target) {
  const bool binary = ((target.array() == Scalar(0)) || (target.array() == Scalar(1))).all();
  if (!binary || !(target.rowwise().sum().array() == Scalar(1)).all())
    throw ValidationError("weighted_cce: target must be one-hot per voxel");
}

/// Voxel mean of w[c] * -ln p_c, c the true class; p clamped below by eps.
template <typename Scalar>
double weighted_cce(const MatX<Scalar>& pred, const MatX<Scalar>& target, const LossConfig& cfg) {
  detail::require_same_shape(pred, target, "weighted_cce");
  if (pred.cols() != kNumClasses) throw ValidationError("weighted_cce: expected 3 class columns");
  require_one_hot(target);
  double sum = 0.0;
  for (Index v = 0; v < pred.rows(); ++v) {
    int c = 0;
    target.row(v).maxCoeff(&c);
    sum -= cfg.class_weights[c] * std::log(std::clamp(double(pred(v, c)), cfg.epsilon, 1.0));
  }
  return sum / double(pred.rows());
}

/// d weighted_cce / d pred.
template <typename Scalar>
MatX<Scalar> weighted_cce_grad(const MatX<Scalar>& pred, const MatX<Scalar>& target, const LossConfig& cfg) {
  detail::require_same_shape(pred, target, "weighted_cce_grad");
  require_one_hot(target);
  MatX<Scalar> g = MatX<Scalar>::Zero(pred.rows(), pred.cols());
  const double inv_n = 1.0 / double(pred.rows());
  for (Index v = 0; v < pred.rows(); ++v) {
    int c = 0;
    target.row(v).maxCoeff(&c);
    const double p = double(pred(v, c));
    if (p >= cfg.epsilon) g(v, c) = Scalar(-inv_n * cfg.class_weights[c] / p);
  }
  return g;
}

/// Gradient of weighted_cce(softmax(z)) with respect to the logits z, given p = softmax(z).
template <typename Scalar>
MatX<Scalar> weighted_cce_logit_grad(const MatX<Scalar>& pred, const MatX<Scalar>& target, const LossConfig& cfg) {
  detail::require_same_shape(pred, target, "weighted_cce_logit_grad");
  MatX<Scalar> g = pred - target;
  const double inv_n = 1.0 / double(pred.rows());
  for (Index v = 0; v < pred.rows(); ++v) {
    int c = 0;
    target.row(v).maxCoeff(&c);
    g.row(v) *= Scalar(inv_n * cfg.class_weights[c]);
  }
  return g;
}

/// Mean squared difference between two encodings.
template <typename Scalar>
double latent_loss(const MatX<Scalar>& e_pred, const MatX<Scalar>& e_gt) {
  detail::require_same_shape(e_pred, e_gt, "latent_loss");
  return (e_pred - e_gt).template cast<double>().squaredNorm() / double(e_pred.size());
}

/// d latent_loss / d e_pred.
template <typename Scalar>
MatX<Scalar> latent_loss_grad(const MatX<Scalar>& e_pred, const MatX<Scalar>& e_gt) {
  detail::require_same_shape(e_pred, e_gt, "latent_loss_grad");
  return (e_pred - e_gt) * Scalar(2.0 / double(e_pred.size()));
}

/// pix + lambda * glob.
inline double combined_loss(double pix, double glob, double lambda) {
  if (!(lambda >= 0.0)) throw ValidationError("global-loss weight must be >= 0");
  return pix + lambda * glob;
}

/// Global-loss weight for a 0-based epoch out of `total`.
double global_weight_schedule(const LossConfig& cfg, int epoch, int total);

}  // namespace zoneprior
