#include "mesoforge/layers.hpp"

namespace mesoforge {

namespace {

template <typename T>
const T& cache_as(const LayerCache& cache, const Layer& layer) {
  const auto* typed = dynamic_cast<const T*>(&cache);
  if (!typed) {
    throw std::logic_error("layer '" + layer.name() +
                           "' received a cache of the wrong type");
  }
  return *typed;
}

struct InputCache : LayerCache {
  Tensor x;
};

struct OutputCache : LayerCache {
  Tensor y;
};

struct BatchNormCache : LayerCache {
  ops::BatchNormSaved saved;
};

struct PoolCache : LayerCache {
  Shape input_shape;
  std::vector<std::uint32_t> argmax;
};

struct ShapeCache : LayerCache {
  Shape input_shape;
};

struct DropoutCache : LayerCache {
  std::vector<float> mask;
};

struct InceptionCache : LayerCache {
  std::vector<std::vector<std::unique_ptr<LayerCache>>> branches;
  std::vector<int> channels;
};

std::span<const float> span_of(const ParamStore& params,
                               std::optional<std::size_t> slot) {
  if (!slot) return {};
  return params.value(*slot).data();
}

}  // namespace

// ---------------------------------------------------------------------------

Conv2dLayer::Conv2dLayer(std::string name, ops::ConvSpec spec,
                         std::size_t weight_slot,
                         std::optional<std::size_t> bias_slot)
    : Layer(std::move(name)),
      spec_(spec),
      weight_slot_(weight_slot),
      bias_slot_(bias_slot) {}

Shape Conv2dLayer::output_shape(const Shape& input) const {
  const ops::ConvGeometry g = ops::conv_geometry(input, spec_);
  return {input.n, spec_.out_channels, g.out_h, g.out_w};
}

Tensor Conv2dLayer::forward(const Tensor& x, const ParamStore& params,
                            ForwardContext&,
                            std::unique_ptr<LayerCache>* cache) const {
  Tensor y = ops::conv2d(x, params.value(weight_slot_),
                         span_of(params, bias_slot_), spec_);
  if (cache) {
    auto c = std::make_unique<InputCache>();
    c->x = x;
    *cache = std::move(c);
  }
  return y;
}

Tensor Conv2dLayer::backward(const Tensor& grad_out, const LayerCache& cache,
                             const ParamStore& params, Gradients& grads,
                             bool need_grad_x) const {
  const auto& c = cache_as<InputCache>(cache, *this);
  ops::ConvGrads g = ops::conv2d_backward(c.x, params.value(weight_slot_),
                                          grad_out, spec_, need_grad_x);
  grads.accumulate(weight_slot_, g.grad_weights.data());
  if (bias_slot_) grads.accumulate(*bias_slot_, g.grad_bias);
  return std::move(g.grad_x);
}

std::vector<std::size_t> Conv2dLayer::param_slots() const {
  std::vector<std::size_t> slots{weight_slot_};
  if (bias_slot_) slots.push_back(*bias_slot_);
  return slots;
}

// ---------------------------------------------------------------------------

BatchNormLayer::BatchNormLayer(std::string name, Slots slots, float epsilon,
                               float momentum)
    : Layer(std::move(name)),
      slots_(slots),
      epsilon_(epsilon),
      momentum_(momentum) {}

Tensor BatchNormLayer::forward(const Tensor& x, const ParamStore& params,
                               ForwardContext& ctx,
                               std::unique_ptr<LayerCache>* cache) const {
  auto to_vec = [&](std::size_t slot) {
    const auto d = params.value(slot).data();
    return std::vector<float>(d.begin(), d.end());
  };
  ops::BatchNormState state;
  state.gamma = to_vec(slots_.gamma);
  state.beta = to_vec(slots_.beta);
  state.running_mean = to_vec(slots_.running_mean);
  state.running_var = to_vec(slots_.running_var);
  state.epsilon = epsilon_;
  state.momentum = ctx.bn_momentum.value_or(momentum_);

  std::unique_ptr<BatchNormCache> c;
  if (cache) c = std::make_unique<BatchNormCache>();
  Tensor y = ops::batchnorm(x, state, ctx.mode, c ? &c->saved : nullptr);

  if (ctx.mode == Mode::Train) {
    if (!ctx.running_stats) {
      throw std::logic_error("batchnorm '" + name() +
                             "' in Train mode needs writable running stats");
    }
    std::ranges::copy(state.running_mean,
                      ctx.running_stats->values(slots_.running_mean).begin());
    std::ranges::copy(state.running_var,
                      ctx.running_stats->values(slots_.running_var).begin());
  }
  if (cache) *cache = std::move(c);
  return y;
}

Tensor BatchNormLayer::backward(const Tensor& grad_out, const LayerCache& cache,
                                const ParamStore& params, Gradients& grads,
                                bool) const {
  const auto& c = cache_as<BatchNormCache>(cache, *this);
  ops::BatchNormGrads g = ops::batchnorm_backward(
      grad_out, params.value(slots_.gamma).data(), c.saved);
  grads.accumulate(slots_.gamma, g.grad_gamma);
  grads.accumulate(slots_.beta, g.grad_beta);
  return std::move(g.grad_x);
}

std::vector<std::size_t> BatchNormLayer::param_slots() const {
  return {slots_.gamma, slots_.beta, slots_.running_mean, slots_.running_var};
}

// ---------------------------------------------------------------------------

Tensor ReluLayer::forward(const Tensor& x, const ParamStore&, ForwardContext&,
                          std::unique_ptr<LayerCache>* cache) const {
  Tensor y = ops::relu(x);
  if (cache) {
    auto c = std::make_unique<OutputCache>();
    c->y = y;
    *cache = std::move(c);
  }
  return y;
}

Tensor ReluLayer::backward(const Tensor& grad_out, const LayerCache& cache,
                           const ParamStore&, Gradients&, bool) const {
  // y > 0 exactly where x > 0.
  return ops::relu_backward(cache_as<OutputCache>(cache, *this).y, grad_out);
}

Tensor LeakyReluLayer::forward(const Tensor& x, const ParamStore&,
                               ForwardContext&,
                               std::unique_ptr<LayerCache>* cache) const {
  if (cache) {
    auto c = std::make_unique<InputCache>();
    c->x = x;
    *cache = std::move(c);
  }
  return ops::leaky_relu(x, slope_);
}

Tensor LeakyReluLayer::backward(const Tensor& grad_out, const LayerCache& cache,
                                const ParamStore&, Gradients&, bool) const {
  return ops::leaky_relu_backward(cache_as<InputCache>(cache, *this).x,
                                  grad_out, slope_);
}

Tensor SigmoidLayer::forward(const Tensor& x, const ParamStore&,
                             ForwardContext&,
                             std::unique_ptr<LayerCache>* cache) const {
  Tensor y = ops::sigmoid(x);
  if (cache) {
    auto c = std::make_unique<OutputCache>();
    c->y = y;
    *cache = std::move(c);
  }
  return y;
}

Tensor SigmoidLayer::backward(const Tensor& grad_out, const LayerCache& cache,
                              const ParamStore&, Gradients&, bool) const {
  return ops::sigmoid_backward(cache_as<OutputCache>(cache, *this).y,
                               grad_out);
}

// ---------------------------------------------------------------------------

Shape MaxPoolLayer::output_shape(const Shape& input) const {
  const ops::Extent2 stride = spec_.effective_stride();
  check_shape(input.h >= spec_.window.h &&
                  (input.h - spec_.window.h) % stride.h == 0 &&
                  input.w >= spec_.window.w &&
                  (input.w - spec_.window.w) % stride.w == 0,
              "maxpool '" + name() + "': input " + input.str() +
                  " not divisible by window " +
                  std::to_string(spec_.window.h) + "x" +
                  std::to_string(spec_.window.w));
  return {input.n, input.c, (input.h - spec_.window.h) / stride.h + 1,
          (input.w - spec_.window.w) / stride.w + 1};
}

Tensor MaxPoolLayer::forward(const Tensor& x, const ParamStore&,
                             ForwardContext&,
                             std::unique_ptr<LayerCache>* cache) const {
  ops::PoolResult r = ops::maxpool2d(x, spec_);
  if (cache) {
    auto c = std::make_unique<PoolCache>();
    c->input_shape = x.shape();
    c->argmax = std::move(r.argmax);
    *cache = std::move(c);
  }
  return std::move(r.out);
}

Tensor MaxPoolLayer::backward(const Tensor& grad_out, const LayerCache& cache,
                              const ParamStore&, Gradients&, bool) const {
  const auto& c = cache_as<PoolCache>(cache, *this);
  return ops::maxpool2d_backward(c.input_shape, c.argmax, grad_out);
}

// ---------------------------------------------------------------------------

Shape FlattenLayer::output_shape(const Shape& input) const {
  return {input.n, static_cast<int>(input.item()), 1, 1};
}

Tensor FlattenLayer::forward(const Tensor& x, const ParamStore&,
                             ForwardContext&,
                             std::unique_ptr<LayerCache>* cache) const {
  if (cache) {
    auto c = std::make_unique<ShapeCache>();
    c->input_shape = x.shape();
    *cache = std::move(c);
  }
  return x.reshaped(output_shape(x.shape()));
}

Tensor FlattenLayer::backward(const Tensor& grad_out, const LayerCache& cache,
                              const ParamStore&, Gradients&, bool) const {
  return grad_out.reshaped(cache_as<ShapeCache>(cache, *this).input_shape);
}

// ---------------------------------------------------------------------------

DropoutLayer::DropoutLayer(std::string name, float rate)
    : Layer(std::move(name)), rate_(rate) {
  if (!(rate >= 0.0f && rate < 1.0f)) {
    throw std::invalid_argument("dropout rate must be in [0, 1)");
  }
}

Tensor DropoutLayer::forward(const Tensor& x, const ParamStore&,
                             ForwardContext& ctx,
                             std::unique_ptr<LayerCache>* cache) const {
  ops::DropoutResult r;
  if (ctx.mode == Mode::Train && rate_ > 0.0f) {
    if (!ctx.rng) {
      throw std::logic_error("dropout '" + name() +
                             "' in Train mode needs an rng");
    }
    r = ops::dropout(x, rate_, ctx.mode, *ctx.rng);
  } else {
    r.out = x;
  }
  if (cache) {
    auto c = std::make_unique<DropoutCache>();
    c->mask = std::move(r.mask);
    *cache = std::move(c);
  }
  return std::move(r.out);
}

Tensor DropoutLayer::backward(const Tensor& grad_out, const LayerCache& cache,
                              const ParamStore&, Gradients&, bool) const {
  return ops::dropout_backward(grad_out,
                               cache_as<DropoutCache>(cache, *this).mask);
}

// ---------------------------------------------------------------------------

DenseLayer::DenseLayer(std::string name, std::size_t weight_slot,
                       std::size_t bias_slot, int in_features, int out_features)
    : Layer(std::move(name)),
      weight_slot_(weight_slot),
      bias_slot_(bias_slot),
      in_features_(in_features),
      out_features_(out_features) {}

Shape DenseLayer::output_shape(const Shape& input) const {
  check_shape(input.item() == static_cast<std::size_t>(in_features_),
              "dense '" + name() + "': input width " +
                  std::to_string(input.item()) + " != " +
                  std::to_string(in_features_));
  return {input.n, out_features_, 1, 1};
}

Tensor DenseLayer::forward(const Tensor& x, const ParamStore& params,
                           ForwardContext&,
                           std::unique_ptr<LayerCache>* cache) const {
  Tensor y = ops::dense(x, params.value(weight_slot_),
                        params.value(bias_slot_).data());
  if (cache) {
    auto c = std::make_unique<InputCache>();
    c->x = x;
    *cache = std::move(c);
  }
  return y;
}

Tensor DenseLayer::backward(const Tensor& grad_out, const LayerCache& cache,
                            const ParamStore& params, Gradients& grads,
                            bool) const {
  ops::DenseGrads g = ops::dense_backward(cache_as<InputCache>(cache, *this).x,
                                          params.value(weight_slot_), grad_out);
  grads.accumulate(weight_slot_, g.grad_weights.data());
  grads.accumulate(bias_slot_, g.grad_bias);
  return std::move(g.grad_x);
}

std::vector<std::size_t> DenseLayer::param_slots() const {
  return {weight_slot_, bias_slot_};
}

// ---------------------------------------------------------------------------

InceptionLayer::InceptionLayer(std::string name, std::vector<LayerList> branches)
    : Layer(std::move(name)), branches_(std::move(branches)) {
  if (branches_.empty()) {
    throw std::invalid_argument("inception layer needs at least one branch");
  }
}

Shape InceptionLayer::output_shape(const Shape& input) const {
  Shape out = input;
  out.c = 0;
  for (const LayerList& branch : branches_) {
    Shape s = input;
    for (const LayerPtr& layer : branch) s = layer->output_shape(s);
    check_shape(s.h == input.h && s.w == input.w,
                "inception '" + name() + "': branch changes spatial size");
    out.c += s.c;
  }
  return out;
}

Tensor InceptionLayer::forward(const Tensor& x, const ParamStore& params,
                               ForwardContext& ctx,
                               std::unique_ptr<LayerCache>* cache) const {
  std::unique_ptr<InceptionCache> c;
  if (cache) c = std::make_unique<InceptionCache>();
  std::vector<Tensor> outputs;
  outputs.reserve(branches_.size());
  for (const LayerList& branch : branches_) {
    std::vector<std::unique_ptr<LayerCache>> branch_caches(branch.size());
    Tensor h = x;
    for (std::size_t i = 0; i < branch.size(); ++i) {
      h = branch[i]->forward(h, params, ctx, c ? &branch_caches[i] : nullptr);
    }
    if (c) {
      c->channels.push_back(h.shape().c);
      c->branches.push_back(std::move(branch_caches));
    }
    outputs.push_back(std::move(h));
  }
  Tensor y = ops::channel_concat(outputs);
  if (cache) *cache = std::move(c);
  return y;
}

Tensor InceptionLayer::backward(const Tensor& grad_out, const LayerCache& cache,
                                const ParamStore& params, Gradients& grads,
                                bool need_grad_x) const {
  const auto& c = cache_as<InceptionCache>(cache, *this);
  std::vector<Tensor> parts = ops::channel_split(grad_out, c.channels);
  Tensor grad_x;
  bool have_grad = false;
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    const LayerList& branch = branches_[b];
    Tensor g = std::move(parts[b]);
    for (std::size_t i = branch.size(); i-- > 0;) {
      const bool need = i > 0 || need_grad_x;
      g = branch[i]->backward(g, *c.branches[b][i], params, grads, need);
    }
    if (!need_grad_x) continue;
    if (!have_grad) {
      grad_x = std::move(g);
      have_grad = true;
    } else {
      for (std::size_t k = 0; k < grad_x.size(); ++k) grad_x[k] += g[k];
    }
  }
  return grad_x;
}

std::vector<std::size_t> InceptionLayer::param_slots() const {
  std::vector<std::size_t> slots;
  for (const LayerList& branch : branches_) {
    for (const LayerPtr& layer : branch) {
      for (std::size_t s : layer->param_slots()) slots.push_back(s);
    }
  }
  return slots;
}

}  // namespace mesoforge
