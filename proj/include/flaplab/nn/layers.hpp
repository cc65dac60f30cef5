#pragma once

// Differentiable layers. Each layer caches what it needs from forward() so
// that the following backward() can accumulate parameter gradients and
// return the gradient with respect to its input.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "flaplab/error.hpp"
#include "flaplab/nn/tensor.hpp"
#include "flaplab/rng.hpp"

namespace flaplab::nn {

enum class LayerKind { kDense, kConv, kRelu, kFlatten, kConcat };

struct ParamView {
  std::span<double> value;
  std::span<double> grad;
};

class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const noexcept = 0;
  virtual Shape output_shape(const Shape& input) const = 0;
  // `extra` is consumed only by the concat layer.
  virtual Tensor forward(const Tensor& input, std::span<const double> extra) = 0;
  // Accumulates parameter gradients. The returned tensor is dLoss/dinput,
  // left empty when `want_input_grad` is false.
  virtual Tensor backward(const Tensor& grad_out, bool want_input_grad) = 0;
  virtual std::vector<ParamView> parameters() { return {}; }
  virtual void initialize(Xorshift64Star& /*rng*/) {}
  virtual std::unique_ptr<Layer> clone() const = 0;
  // Topology line for snapshots, e.g. "dense 3 50".
  virtual std::string describe() const = 0;
  // Appends the on/off state of any piecewise-linear units from the last
  // forward(); empty for smooth layers.
  virtual void append_activation_pattern(std::vector<char>& /*out*/) const {}
};

// y = W x + b, W is out x in.
class Dense final : public Layer {
 public:
  Dense(std::size_t in, std::size_t out)
      : in_(in), out_(out), w_(in * out, 0.0), b_(out, 0.0), gw_(in * out, 0.0), gb_(out, 0.0) {
    if (in == 0 || out == 0) throw DomainError("dense layer dimensions must be positive");
  }

  std::size_t inputs() const noexcept { return in_; }
  std::size_t outputs() const noexcept { return out_; }
  std::span<double> weights() noexcept { return w_; }
  std::span<double> bias() noexcept { return b_; }
  std::span<const double> weight_grad() const noexcept { return gw_; }
  std::span<const double> bias_grad() const noexcept { return gb_; }

  LayerKind kind() const noexcept override { return LayerKind::kDense; }

  Shape output_shape(const Shape& input) const override {
    if (element_count(input) != in_ || input.size() != 1)
      throw DomainError("dense layer expects [" + std::to_string(in_) + "], got " +
                        to_string(input));
    return {out_};
  }

  Tensor forward(const Tensor& input, std::span<const double>) override {
    output_shape(input.dims);
    x_ = input.data;
    Tensor y(Shape{out_});
    for (std::size_t o = 0; o < out_; ++o) {
      const double* row = &w_[o * in_];
      double acc = b_[o];
      for (std::size_t i = 0; i < in_; ++i) acc += row[i] * x_[i];
      y[o] = acc;
    }
    return y;
  }

  Tensor backward(const Tensor& grad_out, bool want_input_grad) override {
    Tensor gx;
    if (want_input_grad) gx = Tensor(Shape{in_});
    for (std::size_t o = 0; o < out_; ++o) {
      const double g = grad_out[o];
      if (g == 0.0) continue;
      gb_[o] += g;
      double* grow = &gw_[o * in_];
      const double* row = &w_[o * in_];
      for (std::size_t i = 0; i < in_; ++i) grow[i] += g * x_[i];
      if (want_input_grad)
        for (std::size_t i = 0; i < in_; ++i) gx[i] += g * row[i];
    }
    return gx;
  }

  std::vector<ParamView> parameters() override { return {{w_, gw_}, {b_, gb_}}; }

  void initialize(Xorshift64Star& rng) override {
    const double limit = std::sqrt(6.0 / static_cast<double>(in_ + out_));
    for (auto& w : w_) w = rng.uniform(-limit, limit);
    std::fill(b_.begin(), b_.end(), 0.0);
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }

  std::string describe() const override {
    return "dense " + std::to_string(in_) + " " + std::to_string(out_);
  }

 private:
  std::size_t in_, out_;
  std::vector<double> w_, b_, gw_, gb_;
  std::vector<double> x_;
};

// Valid (unpadded) strided 2-D convolution over a C x H x W input.
// Output spatial size is floor((in - kernel) / stride) + 1.
class Conv2d final : public Layer {
 public:
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         std::size_t stride, std::size_t in_h, std::size_t in_w)
      : c_(in_channels), k_(out_channels), ks_(kernel), stride_(stride), in_h_(in_h), in_w_(in_w) {
    if (c_ == 0 || k_ == 0 || ks_ == 0 || stride_ == 0)
      throw DomainError("conv layer dimensions must be positive");
    if (in_h < ks_ || in_w < ks_) throw DomainError("conv input smaller than kernel");
    out_h_ = (in_h_ - ks_) / stride_ + 1;
    out_w_ = (in_w_ - ks_) / stride_ + 1;
    w_.assign(k_ * c_ * ks_ * ks_, 0.0);
    gw_.assign(w_.size(), 0.0);
    b_.assign(k_, 0.0);
    gb_.assign(k_, 0.0);
  }

  static constexpr std::size_t out_dim(std::size_t in, std::size_t kernel, std::size_t stride) {
    return (in - kernel) / stride + 1;
  }

  std::span<double> weights() noexcept { return w_; }
  std::span<double> bias() noexcept { return b_; }

  LayerKind kind() const noexcept override { return LayerKind::kConv; }

  Shape output_shape(const Shape& input) const override {
    if (input != Shape{c_, in_h_, in_w_})
      throw DomainError("conv layer expects " + to_string({c_, in_h_, in_w_}) + ", got " +
                        to_string(input));
    return {k_, out_h_, out_w_};
  }

  Tensor forward(const Tensor& input, std::span<const double>) override {
    output_shape(input.dims);
    x_ = input.data;
    Tensor y(Shape{k_, out_h_, out_w_});
    const std::size_t plane = out_h_ * out_w_;
    for (std::size_t k = 0; k < k_; ++k) {
      double* yk = &y.data[k * plane];
      std::fill(yk, yk + plane, b_[k]);
      for (std::size_t c = 0; c < c_; ++c) {
        const double* xc = &x_[c * in_h_ * in_w_];
        for (std::size_t u = 0; u < ks_; ++u) {
          for (std::size_t v = 0; v < ks_; ++v) {
            const double w = w_[weight_index(k, c, u, v)];
            for (std::size_t i = 0; i < out_h_; ++i) {
              const double* xrow = xc + (i * stride_ + u) * in_w_ + v;
              double* yrow = yk + i * out_w_;
              for (std::size_t j = 0; j < out_w_; ++j) yrow[j] += w * xrow[j * stride_];
            }
          }
        }
      }
    }
    return y;
  }

  Tensor backward(const Tensor& grad_out, bool want_input_grad) override {
    Tensor gx;
    if (want_input_grad) gx = Tensor(Shape{c_, in_h_, in_w_});
    const std::size_t plane = out_h_ * out_w_;
    for (std::size_t k = 0; k < k_; ++k) {
      const double* gk = &grad_out.data[k * plane];
      double bsum = 0.0;
      for (std::size_t p = 0; p < plane; ++p) bsum += gk[p];
      gb_[k] += bsum;
      for (std::size_t c = 0; c < c_; ++c) {
        const double* xc = &x_[c * in_h_ * in_w_];
        double* gxc = want_input_grad ? &gx.data[c * in_h_ * in_w_] : nullptr;
        for (std::size_t u = 0; u < ks_; ++u) {
          for (std::size_t v = 0; v < ks_; ++v) {
            const std::size_t wi = weight_index(k, c, u, v);
            const double w = w_[wi];
            double acc = 0.0;
            for (std::size_t i = 0; i < out_h_; ++i) {
              const std::size_t base = (i * stride_ + u) * in_w_ + v;
              const double* grow = gk + i * out_w_;
              for (std::size_t j = 0; j < out_w_; ++j) {
                acc += grow[j] * xc[base + j * stride_];
                if (gxc) gxc[base + j * stride_] += grow[j] * w;
              }
            }
            gw_[wi] += acc;
          }
        }
      }
    }
    return gx;
  }

  std::vector<ParamView> parameters() override { return {{w_, gw_}, {b_, gb_}}; }

  void initialize(Xorshift64Star& rng) override {
    const double area = static_cast<double>(ks_ * ks_);
    const double limit = std::sqrt(6.0 / (static_cast<double>(c_) * area +
                                          static_cast<double>(k_) * area));
    for (auto& w : w_) w = rng.uniform(-limit, limit);
    std::fill(b_.begin(), b_.end(), 0.0);
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2d>(*this); }

  std::string describe() const override {
    return "conv " + std::to_string(c_) + " " + std::to_string(k_) + " " + std::to_string(ks_) +
           " " + std::to_string(stride_) + " " + std::to_string(in_h_) + " " +
           std::to_string(in_w_);
  }

 private:
  std::size_t weight_index(std::size_t k, std::size_t c, std::size_t u, std::size_t v) const {
    return ((k * c_ + c) * ks_ + u) * ks_ + v;
  }

  std::size_t c_, k_, ks_, stride_, in_h_, in_w_, out_h_ = 0, out_w_ = 0;
  std::vector<double> w_, b_, gw_, gb_;
  std::vector<double> x_;
};

class Relu final : public Layer {
 public:
  LayerKind kind() const noexcept override { return LayerKind::kRelu; }
  Shape output_shape(const Shape& input) const override { return input; }

  Tensor forward(const Tensor& input, std::span<const double>) override {
    Tensor y = input;
    for (auto& v : y.data) v = v > 0.0 ? v : 0.0;
    mask_.resize(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) mask_[i] = input[i] > 0.0;
    return y;
  }

  Tensor backward(const Tensor& grad_out, bool want_input_grad) override {
    if (!want_input_grad) return {};
    Tensor gx = grad_out;
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (!mask_[i]) gx[i] = 0.0;
    return gx;
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<Relu>(*this); }
  std::string describe() const override { return "relu"; }
  void append_activation_pattern(std::vector<char>& out) const override {
    out.insert(out.end(), mask_.begin(), mask_.end());
  }

 private:
  std::vector<char> mask_;
};

class Flatten final : public Layer {
 public:
  LayerKind kind() const noexcept override { return LayerKind::kFlatten; }
  Shape output_shape(const Shape& input) const override { return {element_count(input)}; }

  Tensor forward(const Tensor& input, std::span<const double>) override {
    in_dims_ = input.dims;
    return Tensor(Shape{input.size()}, input.data);
  }

  Tensor backward(const Tensor& grad_out, bool want_input_grad) override {
    if (!want_input_grad) return {};
    return Tensor(in_dims_, grad_out.data);
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<Flatten>(*this); }
  std::string describe() const override { return "flatten"; }

 private:
  Shape in_dims_;
};

// Appends `count` caller-supplied features to a flat vector.
class ConcatExtra final : public Layer {
 public:
  explicit ConcatExtra(std::size_t count) : count_(count) {}

  std::size_t count() const noexcept { return count_; }
  LayerKind kind() const noexcept override { return LayerKind::kConcat; }

  Shape output_shape(const Shape& input) const override {
    if (input.size() != 1) throw DomainError("concat expects a flat input, got " + to_string(input));
    return {input[0] + count_};
  }

  Tensor forward(const Tensor& input, std::span<const double> extra) override {
    output_shape(input.dims);
    if (extra.size() != count_)
      throw DomainError("concat expects " + std::to_string(count_) + " extra features, got " +
                        std::to_string(extra.size()));
    in_size_ = input.size();
    Tensor y(Shape{in_size_ + count_});
    std::copy(input.data.begin(), input.data.end(), y.data.begin());
    std::copy(extra.begin(), extra.end(), y.data.begin() + static_cast<std::ptrdiff_t>(in_size_));
    return y;
  }

  Tensor backward(const Tensor& grad_out, bool want_input_grad) override {
    if (!want_input_grad) return {};
    return Tensor(Shape{in_size_},
                  std::vector<double>(grad_out.data.begin(),
                                      grad_out.data.begin() + static_cast<std::ptrdiff_t>(in_size_)));
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<ConcatExtra>(*this); }
  std::string describe() const override { return "concat " + std::to_string(count_); }

 private:
  std::size_t count_;
  std::size_t in_size_ = 0;
};

}  // namespace flaplab::nn
