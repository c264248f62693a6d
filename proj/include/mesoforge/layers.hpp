#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mesoforge/ops.hpp"
#include "mesoforge/param_store.hpp"

namespace mesoforge {

/// Whatever a layer's forward pass must keep for its backward pass.
struct LayerCache {
  virtual ~LayerCache() = default;
};

struct ForwardContext {
  Mode mode = Mode::Infer;
  /// Required by dropout in Train mode.
  Rng* rng = nullptr;
  /// Batch-norm running statistics are written here in Train mode.
  ParamStore* running_stats = nullptr;
  /// Replaces every batch-norm momentum when set (running-stat
  /// re-estimation uses a cumulative average).
  std::optional<float> bn_momentum;
};

/// A node of the model graph. Layers are immutable; parameters live in a
/// ParamStore and are addressed by slot.
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  const std::string& name() const { return name_; }
  virtual std::string kind() const = 0;
  virtual Shape output_shape(const Shape& input) const = 0;

  /// When `cache` is non-null the layer stores what backward() needs.
  virtual Tensor forward(const Tensor& x, const ParamStore& params,
                         ForwardContext& ctx,
                         std::unique_ptr<LayerCache>* cache) const = 0;

  /// Adds parameter gradients into `grads` and returns the input gradient
  /// (a 1-element placeholder when `need_grad_x` is false).
  virtual Tensor backward(const Tensor& grad_out, const LayerCache& cache,
                          const ParamStore& params, Gradients& grads,
                          bool need_grad_x) const = 0;

  /// Parameter slots owned by this layer, including nested layers.
  virtual std::vector<std::size_t> param_slots() const { return {}; }

 private:
  std::string name_;
};

using LayerPtr = std::unique_ptr<Layer>;
using LayerList = std::vector<LayerPtr>;

class Conv2dLayer final : public Layer {
 public:
  Conv2dLayer(std::string name, ops::ConvSpec spec, std::size_t weight_slot,
              std::optional<std::size_t> bias_slot);
  std::string kind() const override { return "conv2d"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& x, const ParamStore& params, ForwardContext& ctx,
                 std::unique_ptr<LayerCache>* cache) const override;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache,
                  const ParamStore& params, Gradients& grads,
                  bool need_grad_x) const override;
  std::vector<std::size_t> param_slots() const override;

  const ops::ConvSpec& spec() const { return spec_; }
  std::size_t weight_slot() const { return weight_slot_; }
  std::optional<std::size_t> bias_slot() const { return bias_slot_; }

 private:
  ops::ConvSpec spec_;
  std::size_t weight_slot_;
  std::optional<std::size_t> bias_slot_;
};

class BatchNormLayer final : public Layer {
 public:
  struct Slots {
    std::size_t gamma, beta, running_mean, running_var;
  };
  BatchNormLayer(std::string name, Slots slots, float epsilon, float momentum);
  std::string kind() const override { return "batchnorm"; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& x, const ParamStore& params, ForwardContext& ctx,
                 std::unique_ptr<LayerCache>* cache) const override;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache,
                  const ParamStore& params, Gradients& grads,
                  bool need_grad_x) const override;
  std::vector<std::size_t> param_slots() const override;
  const Slots& slots() const { return slots_; }
  float epsilon() const { return epsilon_; }

 private:
  Slots slots_;
  float epsilon_;
  float momentum_;
};

class ReluLayer final : public Layer {
 public:
  using Layer::Layer;
  std::string kind() const override { return "relu"; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& x, const ParamStore& params, ForwardContext& ctx,
                 std::unique_ptr<LayerCache>* cache) const override;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache,
                  const ParamStore& params, Gradients& grads,
                  bool need_grad_x) const override;
};

class LeakyReluLayer final : public Layer {
 public:
  LeakyReluLayer(std::string name, float slope)
      : Layer(std::move(name)), slope_(slope) {}
  std::string kind() const override { return "leaky_relu"; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& x, const ParamStore& params, ForwardContext& ctx,
                 std::unique_ptr<LayerCache>* cache) const override;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache,
                  const ParamStore& params, Gradients& grads,
                  bool need_grad_x) const override;
  float slope() const { return slope_; }

 private:
  float slope_;
};

class SigmoidLayer final : public Layer {
 public:
  using Layer::Layer;
  std::string kind() const override { return "sigmoid"; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& x, const ParamStore& params, ForwardContext& ctx,
                 std::unique_ptr<LayerCache>* cache) const override;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache,
                  const ParamStore& params, Gradients& grads,
                  bool need_grad_x) const override;
};

class MaxPoolLayer final : public Layer {
 public:
  MaxPoolLayer(std::string name, ops::PoolSpec spec)
      : Layer(std::move(name)), spec_(spec) {}
  std::string kind() const override { return "maxpool2d"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& x, const ParamStore& params, ForwardContext& ctx,
                 std::unique_ptr<LayerCache>* cache) const override;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache,
                  const ParamStore& params, Gradients& grads,
                  bool need_grad_x) const override;
  const ops::PoolSpec& spec() const { return spec_; }

 private:
  ops::PoolSpec spec_;
};

/// (n, c, h, w) -> (n, c*h*w, 1, 1); channel-major order.
class FlattenLayer final : public Layer {
 public:
  using Layer::Layer;
  std::string kind() const override { return "flatten"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& x, const ParamStore& params, ForwardContext& ctx,
                 std::unique_ptr<LayerCache>* cache) const override;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache,
                  const ParamStore& params, Gradients& grads,
                  bool need_grad_x) const override;
};

class DropoutLayer final : public Layer {
 public:
  DropoutLayer(std::string name, float rate);
  std::string kind() const override { return "dropout"; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& x, const ParamStore& params, ForwardContext& ctx,
                 std::unique_ptr<LayerCache>* cache) const override;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache,
                  const ParamStore& params, Gradients& grads,
                  bool need_grad_x) const override;
  float rate() const { return rate_; }

 private:
  float rate_;
};

class DenseLayer final : public Layer {
 public:
  DenseLayer(std::string name, std::size_t weight_slot, std::size_t bias_slot,
             int in_features, int out_features);
  std::string kind() const override { return "dense"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& x, const ParamStore& params, ForwardContext& ctx,
                 std::unique_ptr<LayerCache>* cache) const override;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache,
                  const ParamStore& params, Gradients& grads,
                  bool need_grad_x) const override;
  std::vector<std::size_t> param_slots() const override;

  std::size_t weight_slot() const { return weight_slot_; }
  std::size_t bias_slot() const { return bias_slot_; }
  int in_features() const { return in_features_; }
  int out_features() const { return out_features_; }

 private:
  std::size_t weight_slot_;
  std::size_t bias_slot_;
  int in_features_;
  int out_features_;
};

/// Parallel branches over one input whose outputs are concatenated along
/// channels in branch order.
class InceptionLayer final : public Layer {
 public:
  InceptionLayer(std::string name, std::vector<LayerList> branches);
  std::string kind() const override { return "inception"; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& x, const ParamStore& params, ForwardContext& ctx,
                 std::unique_ptr<LayerCache>* cache) const override;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache,
                  const ParamStore& params, Gradients& grads,
                  bool need_grad_x) const override;
  std::vector<std::size_t> param_slots() const override;

  const std::vector<LayerList>& branches() const { return branches_; }

 private:
  std::vector<LayerList> branches_;
};

}  // namespace mesoforge
