#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "introspect3d/core/tensor.hpp"

namespace i3d::nn {

inline std::pair<double, double> softmax2(double z0, double z1) {
  const double m = z0 > z1 ? z0 : z1;
  const double e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
  const double s = e0 + e1;
  return {e0 / s, e1 / s};
}

/// Class-weighted focal loss for one sample given normalised probabilities:
///   L = -w_label * (1 - p_label)^gamma * ln(p_label)
inline double focal_from_probs(double p0, double p1, int label, double gamma, double w0,
                               double w1) {
  if (std::abs(p0 + p1 - 1.0) > 1e-6 || p0 <= 0.0 || p1 <= 0.0 || p0 > 1.0 || p1 > 1.0)
    throw std::invalid_argument("focal_from_probs: probs must be a distribution in (0,1]");
  if (gamma < 0.0) throw std::invalid_argument("focal_from_probs: gamma must be >= 0");
  const double p = label == 0 ? p0 : p1;
  const double w = label == 0 ? w0 : w1;
  const double one_m = 1.0 - p;
  if (p >= 1.0) return 0.0;
  return -w * std::pow(one_m, gamma) * std::log(p);
}

/// Batch focal loss over N x 2 logits with its analytic gradient. All math
/// runs in double regardless of the tensor scalar type. The gradient uses
///   dL/dz_j = w * (delta_jy - p_j) * (gamma*(1-p_y)^(gamma-1)*p_y*ln(p_y)
///             - (1-p_y)^gamma)
/// which has no divisions and degrades gracefully at p_y -> 1. With gamma=0
/// and unit weights it reduces exactly to cross-entropy.
template <typename T>
double focal_loss_batch(const Tensor<T>& logits, const std::vector<int>& labels, double gamma,
                        double w0, double w1, Tensor<T>* grad = nullptr) {
  if (logits.rank() != 2 || logits.size(1) != 2)
    throw std::invalid_argument("focal_loss_batch: logits must be N x 2");
  const std::size_t N = logits.size(0);
  if (labels.size() != N) throw std::invalid_argument("focal_loss_batch: label count mismatch");
  if (grad && !grad->same_shape(logits)) *grad = Tensor<T>(logits.shape());

  double total = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    const auto [p0, p1] = softmax2(logits(n, 0), logits(n, 1));
    const int y = labels[n];
    const double py = y == 0 ? p0 : p1;
    const double w = y == 0 ? w0 : w1;
    const double one_m = 1.0 - py;
    const double lp = std::log(std::max(py, 1e-300));
    const double base = std::pow(one_m, gamma);  // pow(0,0) == 1
    total += -w * base * lp;
    if (grad) {
      double t = 0.0;
      if (gamma > 0.0 && one_m > 0.0) t = gamma * std::pow(one_m, gamma - 1.0) * py * lp;
      const double factor = w * (t - base);
      const double inv_n = 1.0 / static_cast<double>(N);
      (*grad)(n, 0) = static_cast<T>(factor * ((y == 0 ? 1.0 : 0.0) - p0) * inv_n);
      (*grad)(n, 1) = static_cast<T>(factor * ((y == 1 ? 1.0 : 0.0) - p1) * inv_n);
    }
  }
  if (!std::isfinite(total)) throw std::runtime_error("focal_loss_batch: non-finite loss");
  return total / static_cast<double>(N);
}

/// Numerically stable binary cross-entropy on a logit, with a positive-class
/// weight. Returns {loss, dloss/dlogit}.
inline std::pair<double, double> bce_with_logits(double z, double target, double pos_weight) {
  const auto softplus = [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); };
  const double sig = 1.0 / (1.0 + std::exp(-z));
  const double loss = pos_weight * target * softplus(-z) + (1.0 - target) * (z + softplus(-z));
  const double dz = (1.0 - target) * sig - pos_weight * target * (1.0 - sig);
  return {loss, dz};
}

/// Smooth-free L1: returns {loss, dloss/da}.
inline std::pair<double, double> l1_loss(double a, double b) {
  const double d = a - b;
  return {std::abs(d), d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)};
}

}  // namespace i3d::nn
