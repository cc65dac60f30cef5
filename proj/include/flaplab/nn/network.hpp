#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <type_traits>
#include <utility>
#include <vector>

#include "flaplab/error.hpp"
#include "flaplab/nn/layers.hpp"
#include "flaplab/nn/tensor.hpp"
#include "flaplab/rng.hpp"

namespace flaplab::nn {

// Ordered stack of layers with a fixed input shape. Stateful between a
// forward() and the backward() that follows it.
class Network {
 public:
  Network() = default;
  explicit Network(Shape input_shape) : input_shape_(std::move(input_shape)) {
    shapes_.push_back(input_shape_);
  }

  Network(const Network& other)
      : input_shape_(other.input_shape_), shapes_(other.shapes_), extra_(other.extra_) {
    layers_.reserve(other.layers_.size());
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
  }
  Network& operator=(const Network& other) {
    if (this != &other) *this = Network(other);
    return *this;
  }
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  // Appends a layer, checking it accepts the current output shape.
  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    Shape out = layer->output_shape(shapes_.back());
    if constexpr (std::is_same_v<L, ConcatExtra>) extra_ += layer->count();
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    shapes_.push_back(std::move(out));
    return ref;
  }

  const Shape& input_shape() const noexcept { return input_shape_; }
  const Shape& output_shape() const noexcept { return shapes_.back(); }
  // shapes()[0] is the input; shapes()[i + 1] is the output of layer i.
  const std::vector<Shape>& shapes() const noexcept { return shapes_; }
  std::size_t extra_count() const noexcept { return extra_; }
  std::size_t layer_count() const noexcept { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }

  std::vector<ParamView> parameters() {
    std::vector<ParamView> out;
    for (auto& l : layers_)
      for (auto& p : l->parameters()) out.push_back(p);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto& p : parameters()) n += p.value.size();
    return n;
  }

  // Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
  void initialize(std::uint64_t seed) {
    Xorshift64Star rng(seed);
    for (auto& l : layers_) l->initialize(rng);
    zero_grad();
  }

  Tensor forward(const Tensor& input, std::span<const double> extra = {}) {
    if (input.dims != input_shape_)
      throw DomainError("network expects input " + to_string(input_shape_) + ", got " +
                        to_string(input.dims));
    if (extra.size() != extra_)
      throw DomainError("network expects " + std::to_string(extra_) + " extra features, got " +
                        std::to_string(extra.size()));
    Tensor x = input;
    std::size_t consumed = 0;
    for (auto& l : layers_) {
      std::span<const double> slice;
      if (l->kind() == LayerKind::kConcat) {
        const std::size_t n = static_cast<ConcatExtra&>(*l).count();
        slice = extra.subspan(consumed, n);
        consumed += n;
      }
      x = l->forward(x, slice);
    }
    has_forward_ = true;
    return x;
  }

  // Accumulates dLoss/dparam given dLoss/doutput for the last forward().
  void backward(const Tensor& loss_grad) {
    if (!has_forward_) throw UsageError("backward() without a preceding forward()");
    if (loss_grad.dims != output_shape())
      throw DomainError("loss gradient shape " + to_string(loss_grad.dims) +
                        " does not match output " + to_string(output_shape()));
    Tensor g = loss_grad;
    for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(g, i > 0);
    has_forward_ = false;
  }

  void zero_grad() {
    for (auto& p : parameters()) std::fill(p.grad.begin(), p.grad.end(), 0.0);
  }

  // param <- param - eta * grad, then gradients are cleared.
  void sgd_step(double eta) {
    for (auto& p : parameters()) {
      for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] -= eta * p.grad[i];
      std::fill(p.grad.begin(), p.grad.end(), 0.0);
    }
  }

  // Flat copy of every parameter in layer order.
  // ReLU on/off states from the last forward().
  std::vector<char> activation_pattern() const {
    std::vector<char> out;
    for (const auto& l : layers_) l->append_activation_pattern(out);
    return out;
  }

  std::vector<double> flat_parameters() {
    std::vector<double> out;
    for (auto& p : parameters()) out.insert(out.end(), p.value.begin(), p.value.end());
    return out;
  }

  void set_flat_parameters(std::span<const double> values) {
    std::size_t at = 0;
    auto params = parameters();
    std::size_t total = 0;
    for (auto& p : params) total += p.value.size();
    if (values.size() != total)
      throw DomainError("expected " + std::to_string(total) + " parameters, got " +
                        std::to_string(values.size()));
    for (auto& p : params)
      for (auto& v : p.value) v = values[at++];
  }

 private:
  Shape input_shape_;
  std::vector<Shape> shapes_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::size_t extra_ = 0;
  bool has_forward_ = false;
};

inline void sgd_step(Network& net, double eta) { net.sgd_step(eta); }

// Half squared error 0.5 * |out - target|^2 and its gradient out - target.
inline double half_squared_error(const Tensor& out, const Tensor& target, Tensor* grad = nullptr) {
  if (out.dims != target.dims) throw DomainError("target shape does not match output");
  double loss = 0.0;
  if (grad) *grad = Tensor(out.dims);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d = out[i] - target[i];
    loss += 0.5 * d * d;
    if (grad) (*grad)[i] = d;
  }
  return loss;
}

struct GradCheckOptions {
  double h = 1e-4;
  std::size_t max_samples = 200;  // all parameters when the net is smaller
  std::uint64_t sample_seed = 7;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Samples whose +-h perturbation flipped a ReLU, where the loss is not
  // differentiable across the stencil and central differences are invalid.
  std::size_t skipped_kinks = 0;
};

// Compares backprop gradients of 0.5 * |net(input) - target|^2 with central
// differences on a sample of parameters, reporting the largest
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8). Parameters and
// gradient buffers are left as they were found (gradients zeroed).
inline GradCheckResult grad_check_detailed(Network& net, const Tensor& input,
                                           std::span<const double> extra, const Tensor& target,
                                           const GradCheckOptions& opt = {}) {
  net.zero_grad();
  Tensor g;
  half_squared_error(net.forward(input, extra), target, &g);
  const std::vector<char> pattern = net.activation_pattern();
  net.backward(g);

  auto params = net.parameters();
  struct Ref {
    std::size_t block, index;
  };
  std::vector<Ref> all;
  for (std::size_t b = 0; b < params.size(); ++b)
    for (std::size_t i = 0; i < params[b].value.size(); ++i) all.push_back({b, i});
  std::vector<Ref> picks;
  if (all.size() <= opt.max_samples) {
    picks = all;
  } else {
    Xorshift64Star rng(opt.sample_seed);
    for (std::size_t s = 0; s < opt.max_samples; ++s)
      picks.push_back(all[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(all.size()) - 1))]);
  }

  GradCheckResult out;
  for (const auto& r : picks) {
    double& w = params[r.block].value[r.index];
    const double analytic = params[r.block].grad[r.index];
    const double saved = w;
    w = saved + opt.h;
    const double lp = half_squared_error(net.forward(input, extra), target);
    const bool kink_plus = net.activation_pattern() != pattern;
    w = saved - opt.h;
    const double lm = half_squared_error(net.forward(input, extra), target);
    const bool kink_minus = net.activation_pattern() != pattern;
    w = saved;
    if (kink_plus || kink_minus) {
      ++out.skipped_kinks;
      continue;
    }
    const double numeric = (lp - lm) / (2.0 * opt.h);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    out.max_rel_error = std::max(out.max_rel_error, std::abs(analytic - numeric) / denom);
    ++out.checked;
  }
  net.zero_grad();
  return out;
}

inline double grad_check(Network& net, const Tensor& input, std::span<const double> extra,
                         const Tensor& target, const GradCheckOptions& opt = {}) {
  return grad_check_detailed(net, input, extra, target, opt).max_rel_error;
}

}  // namespace flaplab::nn
