#pragma once

// Minimal dense/convolutional layer stack with hand-written backpropagation.
// Tensors are row-major; images use [N, C, H, W].
//
// Every layer has two forward paths: forward() caches what backward() needs
// and (for batch norm) uses batch statistics, infer() is const and uses the
// stored running statistics, so a trained model can be shared across threads.

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "deid/error.hpp"

namespace deid::nn {

struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);
  Tensor(std::vector<int> shape, std::vector<double> data);

  std::size_t numel() const noexcept { return data.size(); }
  int dim(std::size_t i) const { return shape.at(i); }
  int batch() const { return shape.at(0); }
  /// Elements per batch item.
  std::size_t item_size() const { return data.size() / static_cast<std::size_t>(shape.at(0)); }
  bool operator==(const Tensor&) const = default;
};

std::size_t shape_numel(const std::vector<int>& shape);
std::string shape_string(const std::vector<int>& shape);

struct Param {
  std::string name;
  std::vector<double> value;
  std::vector<double> grad;

  Param(std::string n, std::size_t size) : name(std::move(n)), value(size, 0.0), grad(size, 0.0) {}
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string kind() const = 0;

  /// Training-mode forward; caches activations for backward().
  virtual Tensor forward(const Tensor& x) = 0;
  /// Inference-mode forward; no side effects.
  virtual Tensor infer(const Tensor& x) const = 0;
  /// Accumulates parameter gradients and returns dL/dx for the last forward().
  virtual Tensor backward(const Tensor& grad_out) = 0;

  virtual std::vector<Param*> params() { return {}; }
  virtual std::vector<const Param*> params() const { return {}; }
  /// Non-trainable state that must be checkpointed (running statistics).
  virtual std::vector<std::vector<double>*> buffers() { return {}; }
  virtual std::vector<const std::vector<double>*> buffers() const { return {}; }
};

class Linear final : public Layer {
 public:
  Linear(int in, int out, std::mt19937_64& rng);
  std::string kind() const override { return "linear"; }
  Tensor forward(const Tensor& x) override;
  Tensor infer(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }
  std::vector<const Param*> params() const override { return {&weight_, &bias_}; }

  int in_features() const noexcept { return in_; }
  int out_features() const noexcept { return out_; }

 private:
  int in_, out_;
  Param weight_;  // [out, in]
  Param bias_;    // [out]
  Tensor input_;
};

/// 3x3 convolution, stride 1, zero padding 1 (spatial size preserved).
class Conv2d final : public Layer {
 public:
  Conv2d(int in_channels, int out_channels, std::mt19937_64& rng);
  std::string kind() const override { return "conv3x3"; }
  Tensor forward(const Tensor& x) override;
  Tensor infer(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }
  std::vector<const Param*> params() const override { return {&weight_, &bias_}; }

 private:
  int cin_, cout_;
  Param weight_;  // [cout, cin, 3, 3]
  Param bias_;    // [cout]
  Tensor input_;
};

/// Nearest-neighbour upscaling by a factor of two.
class Upsample2x final : public Layer {
 public:
  std::string kind() const override { return "upsample2x"; }
  Tensor forward(const Tensor& x) override;
  Tensor infer(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  std::vector<int> in_shape_;
};

/// 2x2 average pooling, stride 2 (odd trailing rows/cols are dropped).
class AvgPool2 final : public Layer {
 public:
  std::string kind() const override { return "avgpool2"; }
  Tensor forward(const Tensor& x) override;
  Tensor infer(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  std::vector<int> in_shape_;
};

/// Batch normalization over N (and H, W for 4-d input) per channel.
/// Training mode normalizes with the biased batch variance and folds the batch
/// statistics into the running ones: running = momentum*running + (1-momentum)*batch.
class BatchNorm final : public Layer {
 public:
  explicit BatchNorm(int channels, double eps = 1e-5, double momentum = 0.9);
  std::string kind() const override { return "batchnorm"; }
  Tensor forward(const Tensor& x) override;
  Tensor infer(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Param*> params() override { return {&gamma_, &beta_}; }
  std::vector<const Param*> params() const override { return {&gamma_, &beta_}; }
  std::vector<std::vector<double>*> buffers() override { return {&running_mean_, &running_var_}; }
  std::vector<const std::vector<double>*> buffers() const override { return {&running_mean_, &running_var_}; }

  /// Statistics of the most recent training-mode forward.
  const std::vector<double>& batch_mean() const noexcept { return batch_mean_; }
  const std::vector<double>& batch_var() const noexcept { return batch_var_; }
  /// Normalized pre-affine activations x_hat of the last training forward.
  const Tensor& normalized() const noexcept { return xhat_; }

  /// Overwrites the running statistics with the statistics of the last
  /// training-mode batch.
  void adopt_batch_statistics();

 private:
  int channels_;
  double eps_, momentum_;
  Param gamma_, beta_;
  std::vector<double> running_mean_, running_var_;
  std::vector<double> batch_mean_, batch_var_;
  Tensor xhat_;
};

class LeakyReLU final : public Layer {
 public:
  explicit LeakyReLU(double slope = 0.01) : slope_(slope) {}
  std::string kind() const override { return "leaky_relu"; }
  Tensor forward(const Tensor& x) override;
  Tensor infer(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  double slope_;
  Tensor input_;
};

class Sigmoid final : public Layer {
 public:
  std::string kind() const override { return "sigmoid"; }
  Tensor forward(const Tensor& x) override;
  Tensor infer(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  Tensor output_;
};

/// Reinterprets each batch item with a new per-item shape (e.g. flatten, or
/// FC output -> feature map).
class Reshape final : public Layer {
 public:
  explicit Reshape(std::vector<int> item_shape) : item_shape_(std::move(item_shape)) {}
  std::string kind() const override { return "reshape"; }
  Tensor forward(const Tensor& x) override;
  Tensor infer(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  std::vector<int> item_shape_;
  std::vector<int> in_shape_;
};

class Sequential {
 public:
  Sequential() = default;
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Tensor forward(const Tensor& x);
  Tensor infer(const Tensor& x) const;
  Tensor backward(const Tensor& grad_out);

  std::vector<Param*> params();
  std::vector<const Param*> params() const;
  std::vector<std::vector<double>*> buffers();
  std::vector<const std::vector<double>*> buffers() const;

  std::size_t size() const noexcept { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

struct LossAndGrad {
  double loss = 0.0;
  Tensor grad;  // dL/dpred
};

/// Mean over all elements of (pred - target)^2.
LossAndGrad mse(const Tensor& pred, const Tensor& target);

/// Mean over the batch of -log softmax(logits)[label]; logits are [N, C].
LossAndGrad softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment update over a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<Param*> params, AdamConfig cfg);
  void step();
  void zero_grad();
  long steps() const noexcept { return t_; }

 private:
  std::vector<Param*> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

}  // namespace deid::nn
