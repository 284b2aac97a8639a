#pragma once

#include <algorithm>
#include <memory>

#include "introspect3d/nn/layers.hpp"

namespace i3d::nn {

/// Two-conv residual block with optional projection shortcut.
template <typename T>
class BasicBlock : public Module<T> {
 public:
  BasicBlock(std::size_t in_c, std::size_t out_c, std::size_t stride, Rng& rng)
      : conv1_(in_c, out_c, 3, stride, 1, false, rng),
        bn1_(out_c),
        conv2_(out_c, out_c, 3, 1, 1, false, rng),
        bn2_(out_c) {
    if (stride != 1 || in_c != out_c) {
      proj_conv_ = std::make_unique<Conv2d<T>>(in_c, out_c, 1, stride, 0, false, rng);
      proj_bn_ = std::make_unique<BatchNorm2d<T>>(out_c);
    }
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> main = relu1_.forward(bn1_.forward(conv1_.forward(x)));
    main = bn2_.forward(conv2_.forward(main));
    Tensor<T> shortcut = proj_conv_ ? proj_bn_->forward(proj_conv_->forward(x)) : x;
    for (std::size_t i = 0; i < main.numel(); ++i) main[i] += shortcut[i];
    return relu2_.forward(main);
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> d_sum = relu2_.backward(dy);
    Tensor<T> dx_main = conv1_.backward(bn1_.backward(relu1_.backward(
        conv2_.backward(bn2_.backward(d_sum)))));
    if (proj_conv_) {
      Tensor<T> dx_short = proj_conv_->backward(proj_bn_->backward(d_sum));
      for (std::size_t i = 0; i < dx_main.numel(); ++i) dx_main[i] += dx_short[i];
    } else {
      for (std::size_t i = 0; i < dx_main.numel(); ++i) dx_main[i] += d_sum[i];
    }
    return dx_main;
  }

  void collect_params(std::vector<ParamRef<T>>& out) override {
    conv1_.collect_params(out);
    bn1_.collect_params(out);
    conv2_.collect_params(out);
    bn2_.collect_params(out);
    if (proj_conv_) {
      proj_conv_->collect_params(out);
      proj_bn_->collect_params(out);
    }
  }

  void collect_state(const std::string& prefix,
                     std::vector<std::pair<std::string, Tensor<T>*>>& out) override {
    conv1_.collect_state(prefix + "conv1.", out);
    bn1_.collect_state(prefix + "bn1.", out);
    conv2_.collect_state(prefix + "conv2.", out);
    bn2_.collect_state(prefix + "bn2.", out);
    if (proj_conv_) {
      proj_conv_->collect_state(prefix + "proj_conv.", out);
      proj_bn_->collect_state(prefix + "proj_bn.", out);
    }
  }

  void set_training(bool training) override {
    this->training_ = training;
    conv1_.set_training(training);
    bn1_.set_training(training);
    relu1_.set_training(training);
    conv2_.set_training(training);
    bn2_.set_training(training);
    relu2_.set_training(training);
    if (proj_conv_) {
      proj_conv_->set_training(training);
      proj_bn_->set_training(training);
    }
  }

  const char* kind() const override { return "BasicBlock"; }

  Conv2d<T>& conv1() { return conv1_; }
  Conv2d<T>& conv2() { return conv2_; }
  const Conv2d<T>* proj() const { return proj_conv_.get(); }

 private:
  Conv2d<T> conv1_;
  BatchNorm2d<T> bn1_;
  ReLU<T> relu1_;
  Conv2d<T> conv2_;
  BatchNorm2d<T> bn2_;
  ReLU<T> relu2_;
  std::unique_ptr<Conv2d<T>> proj_conv_;
  std::unique_ptr<BatchNorm2d<T>> proj_bn_;
};

/// 18-layer residual feature extractor with a binary fully-connected head.
/// Stage widths follow the classic 64/128/256/512 progression scaled by a
/// width multiplier; the first conv accepts an arbitrary channel count so any
/// activation tensor can be fed directly.
template <typename T>
class ResNet : public Module<T> {
 public:
  ResNet(std::size_t in_channels, double width_multiplier, std::size_t n_classes, Rng& rng)
      : stem_conv_(in_channels, scaled(64, width_multiplier), 7, 2, 3, false, rng),
        stem_bn_(scaled(64, width_multiplier)),
        stem_pool_(3, 2, 1) {
    const std::size_t w1 = scaled(64, width_multiplier);
    const std::size_t w2 = scaled(128, width_multiplier);
    const std::size_t w3 = scaled(256, width_multiplier);
    const std::size_t w4 = scaled(512, width_multiplier);
    stages_.push_back(make_stage(w1, w1, 1, rng));
    stages_.push_back(make_stage(w1, w2, 2, rng));
    stages_.push_back(make_stage(w2, w3, 2, rng));
    stages_.push_back(make_stage(w3, w4, 2, rng));
    fc_ = std::make_unique<Linear<T>>(w4, n_classes, rng);
    in_channels_ = in_channels;
    widths_ = {w1, w2, w3, w4};
  }

  static std::size_t scaled(std::size_t base, double multiplier) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(base * multiplier)));
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> h = stem_pool_.forward(stem_relu_.forward(stem_bn_.forward(stem_conv_.forward(x))));
    for (auto& stage : stages_) h = stage->forward(h);
    if (capture_final_stage_) final_stage_activations_ = h;
    return fc_->forward(gap_.forward(h));
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> g = gap_.backward(fc_->backward(dy));
    for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) g = (*it)->backward(g);
    return stem_conv_.backward(stem_bn_.backward(stem_relu_.backward(stem_pool_.backward(g))));
  }

  void collect_params(std::vector<ParamRef<T>>& out) override {
    stem_conv_.collect_params(out);
    stem_bn_.collect_params(out);
    for (auto& stage : stages_) stage->collect_params(out);
    fc_->collect_params(out);
  }

  void collect_state(const std::string& prefix,
                     std::vector<std::pair<std::string, Tensor<T>*>>& out) override {
    stem_conv_.collect_state(prefix + "stem_conv.", out);
    stem_bn_.collect_state(prefix + "stem_bn.", out);
    for (std::size_t i = 0; i < stages_.size(); ++i)
      stages_[i]->collect_state(prefix + "stage" + std::to_string(i + 1) + ".", out);
    fc_->collect_state(prefix + "fc.", out);
  }

  void set_training(bool training) override {
    this->training_ = training;
    stem_conv_.set_training(training);
    stem_bn_.set_training(training);
    stem_relu_.set_training(training);
    stem_pool_.set_training(training);
    for (auto& stage : stages_) stage->set_training(training);
    gap_.set_training(training);
    fc_->set_training(training);
  }

  const char* kind() const override { return "ResNet"; }

  /// When enabled, forward() keeps a copy of the last residual stage's output
  /// (the final conv-stage activations used for Eigen-CAM).
  void set_capture_final_stage(bool enable) { capture_final_stage_ = enable; }
  const Tensor<T>& final_stage_activations() const { return final_stage_activations_; }

  const std::vector<std::size_t>& stage_widths() const { return widths_; }
  std::size_t in_channels() const { return in_channels_; }

  Conv2d<T>& stem_conv() { return stem_conv_; }
  MaxPool2d<T>& stem_pool() { return stem_pool_; }
  Sequential<T>& stage(std::size_t i) { return *stages_.at(i); }
  Linear<T>& fc() { return *fc_; }

 private:
  static std::unique_ptr<Sequential<T>> make_stage(std::size_t in_c, std::size_t out_c,
                                                   std::size_t stride, Rng& rng) {
    auto stage = std::make_unique<Sequential<T>>();
    stage->template emplace<BasicBlock<T>>(in_c, out_c, stride, rng);
    stage->template emplace<BasicBlock<T>>(out_c, out_c, 1, rng);
    return stage;
  }

  Conv2d<T> stem_conv_;
  BatchNorm2d<T> stem_bn_;
  ReLU<T> stem_relu_;
  MaxPool2d<T> stem_pool_;
  std::vector<std::unique_ptr<Sequential<T>>> stages_;
  GlobalAvgPool<T> gap_;
  std::unique_ptr<Linear<T>> fc_;
  std::size_t in_channels_ = 0;
  std::vector<std::size_t> widths_;
  bool capture_final_stage_ = false;
  Tensor<T> final_stage_activations_;
};

/// Plain MLP with ReLU hidden layers, used by the statistical-features mode.
template <typename T>
class Mlp : public Module<T> {
 public:
  Mlp(std::size_t in_dim, const std::vector<std::size_t>& hidden, std::size_t out_dim, Rng& rng) {
    std::size_t prev = in_dim;
    for (std::size_t h : hidden) {
      seq_.template emplace<Linear<T>>(prev, h, rng);
      seq_.template emplace<ReLU<T>>();
      prev = h;
    }
    seq_.template emplace<Linear<T>>(prev, out_dim, rng);
    in_dim_ = in_dim;
  }

  Tensor<T> forward(const Tensor<T>& x) override { return seq_.forward(x); }
  Tensor<T> backward(const Tensor<T>& dy) override { return seq_.backward(dy); }
  void collect_params(std::vector<ParamRef<T>>& out) override { seq_.collect_params(out); }
  void collect_state(const std::string& prefix,
                     std::vector<std::pair<std::string, Tensor<T>*>>& out) override {
    seq_.collect_state(prefix, out);
  }
  void set_training(bool training) override {
    this->training_ = training;
    seq_.set_training(training);
  }
  const char* kind() const override { return "Mlp"; }
  std::size_t in_dim() const { return in_dim_; }
  Sequential<T>& seq() { return seq_; }

 private:
  Sequential<T> seq_;
  std::size_t in_dim_ = 0;
};

}  // namespace i3d::nn
