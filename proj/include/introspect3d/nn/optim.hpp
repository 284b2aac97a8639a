#pragma once

#include <vector>

#include "introspect3d/nn/module.hpp"

namespace i3d::nn {

/// SGD with classical momentum: v = mu*v + (g + wd*p); p -= lr*v.
template <typename T>
class Sgd {
 public:
  Sgd(Module<T>& model, double lr, double momentum = 0.9, double weight_decay = 0.0)
      : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {
    model.collect_params(params_);
    velocity_.reserve(params_.size());
    for (const auto& p : params_) velocity_.emplace_back(p.value->shape());
  }

  void zero_grad() {
    for (auto& p : params_) p.grad->fill(T(0));
  }

  void step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor<T>& value = *params_[i].value;
      Tensor<T>& grad = *params_[i].grad;
      Tensor<T>& vel = velocity_[i];
      for (std::size_t j = 0; j < value.numel(); ++j) {
        T g = grad[j];
        if (weight_decay_ != 0.0) g += static_cast<T>(weight_decay_) * value[j];
        vel[j] = static_cast<T>(momentum_) * vel[j] + g;
        value[j] -= static_cast<T>(lr_) * vel[j];
      }
    }
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  std::vector<ParamRef<T>> params_;
  std::vector<Tensor<T>> velocity_;
  double lr_, momentum_, weight_decay_;
};

}  // namespace i3d::nn
