#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "introspect3d/core/tensor.hpp"

namespace i3d::nn {

template <typename T>
struct ParamRef {
  Tensor<T>* value;
  Tensor<T>* grad;
};

/// Base class of the layer zoo. Layers cache what their backward pass needs
/// during forward; backward must see the gradient of the loss w.r.t. their
/// last forward output and returns the gradient w.r.t. that input.
template <typename T>
class Module {
 public:
  virtual ~Module() = default;

  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;

  /// Trainable parameters, in a stable order.
  virtual void collect_params(std::vector<ParamRef<T>>& out) { (void)out; }

  /// Parameters plus persistent buffers (e.g. batch-norm running stats),
  /// named for checkpointing.
  virtual void collect_state(const std::string& prefix,
                             std::vector<std::pair<std::string, Tensor<T>*>>& out) {
    (void)prefix;
    (void)out;
  }

  virtual void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }

  virtual const char* kind() const = 0;

 protected:
  bool training_ = false;
};

template <typename T>
class Sequential : public Module<T> {
 public:
  Sequential() = default;

  template <typename M, typename... Args>
  M* emplace(Args&&... args) {
    auto m = std::make_unique<M>(std::forward<Args>(args)...);
    M* raw = m.get();
    modules_.push_back(std::move(m));
    return raw;
  }

  void push(std::unique_ptr<Module<T>> m) { modules_.push_back(std::move(m)); }

  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> out = x;
    for (auto& m : modules_) out = m->forward(out);
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    Tensor<T> g = grad_out;
    for (auto it = modules_.rbegin(); it != modules_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }

  void collect_params(std::vector<ParamRef<T>>& out) override {
    for (auto& m : modules_) m->collect_params(out);
  }

  void collect_state(const std::string& prefix,
                     std::vector<std::pair<std::string, Tensor<T>*>>& out) override {
    for (std::size_t i = 0; i < modules_.size(); ++i)
      modules_[i]->collect_state(prefix + std::to_string(i) + ".", out);
  }

  void set_training(bool training) override {
    this->training_ = training;
    for (auto& m : modules_) m->set_training(training);
  }

  const char* kind() const override { return "Sequential"; }

  std::size_t size() const { return modules_.size(); }
  Module<T>& at(std::size_t i) { return *modules_.at(i); }
  const Module<T>& at(std::size_t i) const { return *modules_.at(i); }

 private:
  std::vector<std::unique_ptr<Module<T>>> modules_;
};

template <typename T>
inline std::size_t param_count(Module<T>& m) {
  std::vector<ParamRef<T>> ps;
  m.collect_params(ps);
  std::size_t n = 0;
  for (const auto& p : ps) n += p.value->numel();
  return n;
}

template <typename T>
inline void zero_grads(Module<T>& m) {
  std::vector<ParamRef<T>> ps;
  m.collect_params(ps);
  for (auto& p : ps) p.grad->fill(T(0));
}

}  // namespace i3d::nn
