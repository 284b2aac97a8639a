#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>

#include "introspect3d/core/rng.hpp"
#include "introspect3d/nn/module.hpp"

namespace i3d::nn {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using EMap = Eigen::Map<EMat<T>>;
template <typename T>
using ECMap = Eigen::Map<const EMat<T>>;

inline std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t stride,
                                std::size_t pad) {
  if (in + 2 * pad < k) throw std::invalid_argument("conv: input smaller than kernel");
  return (in + 2 * pad - k) / stride + 1;
}

namespace detail {

template <typename T>
void im2col(const T* x, std::size_t C, std::size_t H, std::size_t W, std::size_t k,
            std::size_t stride, std::size_t pad, std::size_t Ho, std::size_t Wo, T* cols) {
  const std::size_t hw = Ho * Wo;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        T* row = cols + ((c * k + ki) * k + kj) * hw;
        for (std::size_t oh = 0; oh < Ho; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + ki) -
                                    static_cast<std::ptrdiff_t>(pad);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) {
            for (std::size_t ow = 0; ow < Wo; ++ow) row[oh * Wo + ow] = T(0);
            continue;
          }
          const T* src = x + (c * H + static_cast<std::size_t>(ih)) * W;
          for (std::size_t ow = 0; ow < Wo; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + kj) -
                                      static_cast<std::ptrdiff_t>(pad);
            row[oh * Wo + ow] =
                (iw >= 0 && iw < static_cast<std::ptrdiff_t>(W)) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, std::size_t C, std::size_t H, std::size_t W, std::size_t k,
                std::size_t stride, std::size_t pad, std::size_t Ho, std::size_t Wo, T* x) {
  const std::size_t hw = Ho * Wo;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const T* row = cols + ((c * k + ki) * k + kj) * hw;
        for (std::size_t oh = 0; oh < Ho; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + ki) -
                                    static_cast<std::ptrdiff_t>(pad);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
          T* dst = x + (c * H + static_cast<std::size_t>(ih)) * W;
          for (std::size_t ow = 0; ow < Wo; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + kj) -
                                      static_cast<std::ptrdiff_t>(pad);
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(W))
              dst[iw] += row[oh * Wo + ow];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Square-kernel 2D convolution over NCHW batches, im2col + GEMM. Backward
/// recomputes the column buffer from the cached input to keep memory flat.
template <typename T>
class Conv2d : public Module<T> {
 public:
  Conv2d(std::size_t in_c, std::size_t out_c, std::size_t k, std::size_t stride,
         std::size_t pad, bool bias, Rng& rng)
      : in_c_(in_c), out_c_(out_c), k_(k), stride_(stride), pad_(pad), has_bias_(bias) {
    weight_ = Tensor<T>({out_c, in_c, k, k});
    weight_grad_ = Tensor<T>({out_c, in_c, k, k});
    // He initialisation, fan-out mode.
    const double std = std::sqrt(2.0 / static_cast<double>(out_c * k * k));
    for (auto& v : weight_.vec()) v = static_cast<T>(rng.normal() * std);
    if (has_bias_) {
      bias_ = Tensor<T>({out_c});
      bias_grad_ = Tensor<T>({out_c});
    }
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.rank() != 4 || x.size(1) != in_c_)
      throw std::invalid_argument("Conv2d: expected N x " + std::to_string(in_c_) +
                                  " x H x W input, got " + Tensor<T>::shape_str(x.shape()));
    input_ = x;
    const std::size_t N = x.size(0), H = x.size(2), W = x.size(3);
    const std::size_t Ho = conv_out_dim(H, k_, stride_, pad_);
    const std::size_t Wo = conv_out_dim(W, k_, stride_, pad_);
    Tensor<T> y({N, out_c_, Ho, Wo});
    const std::size_t K = in_c_ * k_ * k_;
    std::vector<T> cols(K * Ho * Wo);
    ECMap<T> Wm(weight_.data(), static_cast<Eigen::Index>(out_c_), static_cast<Eigen::Index>(K));
    for (std::size_t n = 0; n < N; ++n) {
      detail::im2col(x.data() + n * in_c_ * H * W, in_c_, H, W, k_, stride_, pad_, Ho, Wo,
                     cols.data());
      ECMap<T> Cm(cols.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(Ho * Wo));
      EMap<T> Ym(y.data() + n * out_c_ * Ho * Wo, static_cast<Eigen::Index>(out_c_),
                 static_cast<Eigen::Index>(Ho * Wo));
      Ym.noalias() = Wm * Cm;
      if (has_bias_)
        for (std::size_t c = 0; c < out_c_; ++c)
          Ym.row(static_cast<Eigen::Index>(c)).array() += bias_[c];
    }
    out_h_ = Ho;
    out_w_ = Wo;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const std::size_t N = input_.size(0), H = input_.size(2), W = input_.size(3);
    const std::size_t Ho = out_h_, Wo = out_w_;
    const std::size_t K = in_c_ * k_ * k_;
    Tensor<T> dx(input_.shape());
    std::vector<T> cols(K * Ho * Wo);
    std::vector<T> dcols(K * Ho * Wo);
    ECMap<T> Wm(weight_.data(), static_cast<Eigen::Index>(out_c_), static_cast<Eigen::Index>(K));
    EMap<T> dWm(weight_grad_.data(), static_cast<Eigen::Index>(out_c_),
                static_cast<Eigen::Index>(K));
    for (std::size_t n = 0; n < N; ++n) {
      detail::im2col(input_.data() + n * in_c_ * H * W, in_c_, H, W, k_, stride_, pad_, Ho, Wo,
                     cols.data());
      ECMap<T> Cm(cols.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(Ho * Wo));
      ECMap<T> dYm(dy.data() + n * out_c_ * Ho * Wo, static_cast<Eigen::Index>(out_c_),
                   static_cast<Eigen::Index>(Ho * Wo));
      dWm.noalias() += dYm * Cm.transpose();
      EMap<T> dCm(dcols.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(Ho * Wo));
      dCm.noalias() = Wm.transpose() * dYm;
      detail::col2im_add(dcols.data(), in_c_, H, W, k_, stride_, pad_, Ho, Wo,
                         dx.data() + n * in_c_ * H * W);
      if (has_bias_)
        for (std::size_t c = 0; c < out_c_; ++c)
          bias_grad_[c] += dYm.row(static_cast<Eigen::Index>(c)).sum();
    }
    return dx;
  }

  void collect_params(std::vector<ParamRef<T>>& out) override {
    out.push_back({&weight_, &weight_grad_});
    if (has_bias_) out.push_back({&bias_, &bias_grad_});
  }

  void collect_state(const std::string& prefix,
                     std::vector<std::pair<std::string, Tensor<T>*>>& out) override {
    out.emplace_back(prefix + "weight", &weight_);
    if (has_bias_) out.emplace_back(prefix + "bias", &bias_);
  }

  const char* kind() const override { return "Conv2d"; }

  std::size_t in_channels() const { return in_c_; }
  std::size_t out_channels() const { return out_c_; }
  std::size_t kernel() const { return k_; }
  std::size_t stride() const { return stride_; }
  std::size_t padding() const { return pad_; }

 private:
  std::size_t in_c_, out_c_, k_, stride_, pad_;
  bool has_bias_;
  Tensor<T> weight_, weight_grad_, bias_, bias_grad_;
  Tensor<T> input_;
  std::size_t out_h_ = 0, out_w_ = 0;
};

template <typename T>
class BatchNorm2d : public Module<T> {
 public:
  explicit BatchNorm2d(std::size_t channels, double momentum = 0.1, double eps = 1e-5)
      : c_(channels), momentum_(momentum), eps_(eps) {
    gamma_ = Tensor<T>::full({channels}, T(1));
    beta_ = Tensor<T>({channels});
    gamma_grad_ = Tensor<T>({channels});
    beta_grad_ = Tensor<T>({channels});
    running_mean_ = Tensor<T>({channels});
    running_var_ = Tensor<T>::full({channels}, T(1));
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.rank() != 4 || x.size(1) != c_)
      throw std::invalid_argument("BatchNorm2d: channel mismatch");
    const std::size_t N = x.size(0), H = x.size(2), W = x.size(3);
    const std::size_t plane = H * W;
    const double count = static_cast<double>(N * plane);
    Tensor<T> y(x.shape());
    if (this->training_) {
      xhat_ = Tensor<T>(x.shape());
      inv_std_.assign(c_, 0.0);
      for (std::size_t c = 0; c < c_; ++c) {
        double sum = 0.0, sq = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
          const T* p = x.data() + (n * c_ + c) * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            sum += p[i];
            sq += static_cast<double>(p[i]) * p[i];
          }
        }
        const double mean = sum / count;
        const double var = std::max(0.0, sq / count - mean * mean);
        const double inv = 1.0 / std::sqrt(var + eps_);
        inv_std_[c] = inv;
        const double g = gamma_[c], b = beta_[c];
        for (std::size_t n = 0; n < N; ++n) {
          const T* p = x.data() + (n * c_ + c) * plane;
          T* xh = xhat_.data() + (n * c_ + c) * plane;
          T* py = y.data() + (n * c_ + c) * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            const double v = (p[i] - mean) * inv;
            xh[i] = static_cast<T>(v);
            py[i] = static_cast<T>(g * v + b);
          }
        }
        // Running var uses the unbiased estimate, matching common practice.
        const double unbiased = count > 1.0 ? var * count / (count - 1.0) : var;
        running_mean_[c] = static_cast<T>((1.0 - momentum_) * running_mean_[c] + momentum_ * mean);
        running_var_[c] = static_cast<T>((1.0 - momentum_) * running_var_[c] + momentum_ * unbiased);
      }
    } else {
      for (std::size_t c = 0; c < c_; ++c) {
        const double inv = 1.0 / std::sqrt(static_cast<double>(running_var_[c]) + eps_);
        const double mean = running_mean_[c];
        const double g = gamma_[c], b = beta_[c];
        for (std::size_t n = 0; n < N; ++n) {
          const T* p = x.data() + (n * c_ + c) * plane;
          T* py = y.data() + (n * c_ + c) * plane;
          for (std::size_t i = 0; i < plane; ++i)
            py[i] = static_cast<T>(g * ((p[i] - mean) * inv) + b);
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const std::size_t N = dy.size(0), H = dy.size(2), W = dy.size(3);
    const std::size_t plane = H * W;
    const double count = static_cast<double>(N * plane);
    Tensor<T> dx(dy.shape());
    for (std::size_t c = 0; c < c_; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const T* pdy = dy.data() + (n * c_ + c) * plane;
        const T* pxh = xhat_.data() + (n * c_ + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          sum_dy += pdy[i];
          sum_dy_xhat += static_cast<double>(pdy[i]) * pxh[i];
        }
      }
      gamma_grad_[c] += static_cast<T>(sum_dy_xhat);
      beta_grad_[c] += static_cast<T>(sum_dy);
      const double g_inv = gamma_[c] * inv_std_[c];
      const double mean_dy = sum_dy / count;
      const double mean_dy_xhat = sum_dy_xhat / count;
      for (std::size_t n = 0; n < N; ++n) {
        const T* pdy = dy.data() + (n * c_ + c) * plane;
        const T* pxh = xhat_.data() + (n * c_ + c) * plane;
        T* pdx = dx.data() + (n * c_ + c) * plane;
        for (std::size_t i = 0; i < plane; ++i)
          pdx[i] = static_cast<T>(g_inv * (pdy[i] - mean_dy - pxh[i] * mean_dy_xhat));
      }
    }
    return dx;
  }

  void collect_params(std::vector<ParamRef<T>>& out) override {
    out.push_back({&gamma_, &gamma_grad_});
    out.push_back({&beta_, &beta_grad_});
  }

  void collect_state(const std::string& prefix,
                     std::vector<std::pair<std::string, Tensor<T>*>>& out) override {
    out.emplace_back(prefix + "gamma", &gamma_);
    out.emplace_back(prefix + "beta", &beta_);
    out.emplace_back(prefix + "running_mean", &running_mean_);
    out.emplace_back(prefix + "running_var", &running_var_);
  }

  const char* kind() const override { return "BatchNorm2d"; }
  std::size_t channels() const { return c_; }

 private:
  std::size_t c_;
  double momentum_, eps_;
  Tensor<T> gamma_, beta_, gamma_grad_, beta_grad_;
  Tensor<T> running_mean_, running_var_;
  Tensor<T> xhat_;
  std::vector<double> inv_std_;
};

template <typename T>
class ReLU : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    mask_.assign(x.numel(), 0);
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
      if (x[i] > T(0)) {
        y[i] = x[i];
        mask_[i] = 1;
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx(dy.shape());
    for (std::size_t i = 0; i < dy.numel(); ++i) dx[i] = mask_[i] ? dy[i] : T(0);
    return dx;
  }

  const char* kind() const override { return "ReLU"; }

 private:
  std::vector<unsigned char> mask_;
};

/// Max pooling with zero-free padding semantics: the maximum is taken over
/// in-bounds cells only.
template <typename T>
class MaxPool2d : public Module<T> {
 public:
  MaxPool2d(std::size_t k, std::size_t stride, std::size_t pad)
      : k_(k), stride_(stride), pad_(pad) {}

  Tensor<T> forward(const Tensor<T>& x) override {
    const std::size_t N = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
    const std::size_t Ho = conv_out_dim(H, k_, stride_, pad_);
    const std::size_t Wo = conv_out_dim(W, k_, stride_, pad_);
    in_shape_ = x.shape();
    Tensor<T> y({N, C, Ho, Wo});
    argmax_.assign(y.numel(), 0);
    std::size_t oi = 0;
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t c = 0; c < C; ++c) {
        const T* plane = x.data() + (n * C + c) * H * W;
        for (std::size_t oh = 0; oh < Ho; ++oh) {
          for (std::size_t ow = 0; ow < Wo; ++ow, ++oi) {
            T best = std::numeric_limits<T>::lowest();
            std::size_t best_idx = 0;
            for (std::size_t ki = 0; ki < k_; ++ki) {
              const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride_ + ki) -
                                        static_cast<std::ptrdiff_t>(pad_);
              if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
              for (std::size_t kj = 0; kj < k_; ++kj) {
                const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride_ + kj) -
                                          static_cast<std::ptrdiff_t>(pad_);
                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                const std::size_t idx = static_cast<std::size_t>(ih) * W +
                                        static_cast<std::size_t>(iw);
                if (plane[idx] > best) {
                  best = plane[idx];
                  best_idx = idx;
                }
              }
            }
            y[oi] = best;
            argmax_[oi] = (n * C + c) * H * W + best_idx;
          }
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx(in_shape_);
    for (std::size_t i = 0; i < dy.numel(); ++i) dx[argmax_[i]] += dy[i];
    return dx;
  }

  const char* kind() const override { return "MaxPool2d"; }
  std::size_t kernel() const { return k_; }
  std::size_t stride() const { return stride_; }
  std::size_t padding() const { return pad_; }

 private:
  std::size_t k_, stride_, pad_;
  std::vector<std::size_t> argmax_;
  std::vector<std::size_t> in_shape_;
};

/// N,C,H,W -> N,C spatial mean.
template <typename T>
class GlobalAvgPool : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    const std::size_t N = x.size(0), C = x.size(1), plane = x.size(2) * x.size(3);
    in_shape_ = x.shape();
    Tensor<T> y({N, C});
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t c = 0; c < C; ++c) {
        const T* p = x.data() + (n * C + c) * plane;
        double sum = 0.0;
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
        y(n, c) = static_cast<T>(sum / static_cast<double>(plane));
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx(in_shape_);
    const std::size_t N = in_shape_[0], C = in_shape_[1], plane = in_shape_[2] * in_shape_[3];
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c) {
        const T g = static_cast<T>(dy(n, c) / static_cast<T>(plane));
        T* p = dx.data() + (n * C + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) p[i] = g;
      }
    return dx;
  }

  const char* kind() const override { return "GlobalAvgPool"; }

 private:
  std::vector<std::size_t> in_shape_;
};

template <typename T>
class Linear : public Module<T> {
 public:
  Linear(std::size_t in_dim, std::size_t out_dim, Rng& rng) : in_(in_dim), out_(out_dim) {
    weight_ = Tensor<T>({out_dim, in_dim});
    weight_grad_ = Tensor<T>({out_dim, in_dim});
    bias_ = Tensor<T>({out_dim});
    bias_grad_ = Tensor<T>({out_dim});
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (auto& v : weight_.vec()) v = static_cast<T>(rng.uniform(-bound, bound));
    for (auto& v : bias_.vec()) v = static_cast<T>(rng.uniform(-bound, bound));
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.rank() != 2 || x.size(1) != in_)
      throw std::invalid_argument("Linear: expected N x " + std::to_string(in_) + " input, got " +
                                  Tensor<T>::shape_str(x.shape()));
    input_ = x;
    const std::size_t N = x.size(0);
    Tensor<T> y({N, out_});
    ECMap<T> Xm(x.data(), static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(in_));
    ECMap<T> Wm(weight_.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
    EMap<T> Ym(y.data(), static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(out_));
    Ym.noalias() = Xm * Wm.transpose();
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t o = 0; o < out_; ++o) y(n, o) += bias_[o];
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const std::size_t N = input_.size(0);
    ECMap<T> dYm(dy.data(), static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(out_));
    ECMap<T> Xm(input_.data(), static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(in_));
    EMap<T> dWm(weight_grad_.data(), static_cast<Eigen::Index>(out_),
                static_cast<Eigen::Index>(in_));
    dWm.noalias() += dYm.transpose() * Xm;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t o = 0; o < out_; ++o) bias_grad_[o] += dy(n, o);
    Tensor<T> dx({N, in_});
    ECMap<T> Wm(weight_.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
    EMap<T> dXm(dx.data(), static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(in_));
    dXm.noalias() = dYm * Wm;
    return dx;
  }

  void collect_params(std::vector<ParamRef<T>>& out) override {
    out.push_back({&weight_, &weight_grad_});
    out.push_back({&bias_, &bias_grad_});
  }

  void collect_state(const std::string& prefix,
                     std::vector<std::pair<std::string, Tensor<T>*>>& out) override {
    out.emplace_back(prefix + "weight", &weight_);
    out.emplace_back(prefix + "bias", &bias_);
  }

  const char* kind() const override { return "Linear"; }
  std::size_t in_dim() const { return in_; }
  std::size_t out_dim() const { return out_; }

 private:
  std::size_t in_, out_;
  Tensor<T> weight_, weight_grad_, bias_, bias_grad_;
  Tensor<T> input_;
};

}  // namespace i3d::nn
