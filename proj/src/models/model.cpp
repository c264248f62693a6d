#include "mesoforge/model.hpp"

#include <cmath>

namespace mesoforge {

std::string to_string(Arch arch) {
  switch (arch) {
    case Arch::Meso4:
      return "meso4";
    case Arch::MesoInception4:
      return "mesoinception4";
  }
  return "unknown";
}

Arch parse_arch(std::string_view text) {
  if (text == "meso4") return Arch::Meso4;
  if (text == "mesoinception4") return Arch::MesoInception4;
  throw std::invalid_argument("unknown architecture '" + std::string(text) +
                              "' (expected meso4 or mesoinception4)");
}

namespace {

Tensor glorot_uniform(Shape shape, int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor t(shape);
  for (float& v : t.data()) v = static_cast<float>(rng.uniform(-limit, limit));
  return t;
}

LayerPtr make_conv(ParamStore& params, Rng& rng, const std::string& name,
                   int in_c, int out_c, int kernel, int dilation = 1) {
  ops::ConvSpec spec;
  spec.out_channels = out_c;
  spec.kernel = {kernel, kernel};
  spec.dilation = {dilation, dilation};
  spec.padding = ops::Padding::Same;
  spec.has_bias = true;
  const int area = kernel * kernel;
  const std::size_t w = params.add(
      name + ".weight",
      glorot_uniform(Shape{out_c, in_c, kernel, kernel}, in_c * area,
                     out_c * area, rng),
      true);
  const std::size_t b =
      params.add(name + ".bias", Tensor(Shape{1, 1, 1, out_c}), true);
  return std::make_unique<Conv2dLayer>(name, spec, w, b);
}

LayerPtr make_batchnorm(ParamStore& params, const std::string& name,
                        int channels, const ModelOptions& o) {
  const Shape vec{1, 1, 1, channels};
  BatchNormLayer::Slots slots{
      params.add(name + ".gamma", Tensor(vec, 1.0f), true),
      params.add(name + ".beta", Tensor(vec, 0.0f), true),
      params.add(name + ".running_mean", Tensor(vec, 0.0f), false),
      params.add(name + ".running_var", Tensor(vec, 1.0f), false)};
  return std::make_unique<BatchNormLayer>(name, slots, o.bn_epsilon,
                                          o.bn_momentum);
}

LayerPtr make_dense(ParamStore& params, Rng& rng, const std::string& name,
                    int in, int out) {
  const std::size_t w = params.add(
      name + ".weight", glorot_uniform(Shape{1, 1, in, out}, in, out, rng),
      true);
  const std::size_t b =
      params.add(name + ".bias", Tensor(Shape{1, 1, 1, out}), true);
  return std::make_unique<DenseLayer>(name, w, b, in, out);
}

LayerPtr make_pool(const std::string& name, int window) {
  ops::PoolSpec spec;
  spec.window = {window, window};
  return std::make_unique<MaxPoolLayer>(name, spec);
}

void validate_options(const ModelOptions& o) {
  const int reduction = 8 * o.final_pool;
  if (o.final_pool < 1 || o.input_size < reduction ||
      o.input_size % reduction != 0) {
    throw std::invalid_argument(
        "input_size " + std::to_string(o.input_size) +
        " must be a positive multiple of 8 * final_pool (" +
        std::to_string(reduction) + ")");
  }
  for (const InceptionParams& p : {o.inception1, o.inception2}) {
    if (p.a < 1 || p.b < 1 || p.c < 1 || p.d < 1) {
      throw std::invalid_argument("inception widths must all be >= 1");
    }
  }
}

int flat_features(const ModelOptions& o) {
  const int side = o.input_size / (8 * o.final_pool);
  return 16 * side * side;
}

/// conv(16, 5x5) -> BN -> ReLU -> pool, shared by both architectures.
void append_conv_block(LayerList& layers, ParamStore& params, Rng& rng,
                       const ModelOptions& o, int index, int in_c, int out_c,
                       int kernel, int pool) {
  const std::string i = std::to_string(index);
  layers.push_back(make_conv(params, rng, "conv" + i, in_c, out_c, kernel));
  layers.push_back(make_batchnorm(params, "bn" + i, out_c, o));
  layers.push_back(std::make_unique<ReluLayer>("relu" + i));
  layers.push_back(make_pool("pool" + i, pool));
}

void append_head(LayerList& layers, ParamStore& params, Rng& rng,
                 const ModelOptions& o) {
  layers.push_back(std::make_unique<FlattenLayer>("flatten"));
  layers.push_back(std::make_unique<DropoutLayer>("dropout1", o.dropout_rate));
  layers.push_back(make_dense(params, rng, "dense1", flat_features(o), 16));
  layers.push_back(std::make_unique<LeakyReluLayer>("leaky_relu", o.leaky_slope));
  layers.push_back(std::make_unique<DropoutLayer>("dropout2", o.dropout_rate));
  layers.push_back(make_dense(params, rng, "dense2", 16, 1));
  layers.push_back(std::make_unique<SigmoidLayer>("sigmoid"));
}

}  // namespace

LayerPtr make_inception_module(ParamStore& params, Rng& rng,
                               const std::string& prefix, int in_channels,
                               const InceptionParams& p) {
  std::vector<LayerList> branches(4);
  auto conv_relu = [&](LayerList& branch, const std::string& name, int in_c,
                       int out_c, int kernel, int dilation) {
    branch.push_back(make_conv(params, rng, prefix + "." + name, in_c, out_c,
                               kernel, dilation));
    branch.push_back(std::make_unique<ReluLayer>(prefix + "." + name + "_relu"));
  };
  conv_relu(branches[0], "b1_conv1x1", in_channels, p.a, 1, 1);
  conv_relu(branches[1], "b2_conv1x1", in_channels, p.b, 1, 1);
  conv_relu(branches[1], "b2_conv3x3", p.b, p.b, 3, 1);
  conv_relu(branches[2], "b3_conv1x1", in_channels, p.c, 1, 1);
  conv_relu(branches[2], "b3_conv3x3_d2", p.c, p.c, 3, 2);
  conv_relu(branches[3], "b4_conv1x1", in_channels, p.d, 1, 1);
  conv_relu(branches[3], "b4_conv3x3_d3", p.d, p.d, 3, 3);
  return std::make_unique<InceptionLayer>(prefix, std::move(branches));
}

ModelGraph build_meso4(Rng& rng, const ModelOptions& o) {
  validate_options(o);
  const InitInfo init{"glorot_uniform", rng.next_u64()};
  Rng init_rng(init.seed);
  ParamStore params;
  LayerList layers;
  // Conv -> BN -> ReLU -> pool.
  append_conv_block(layers, params, init_rng, o, 1, 3, 8, 3, 2);
  append_conv_block(layers, params, init_rng, o, 2, 8, 8, 5, 2);
  append_conv_block(layers, params, init_rng, o, 3, 8, 16, 5, 2);
  append_conv_block(layers, params, init_rng, o, 4, 16, 16, 5, o.final_pool);
  append_head(layers, params, init_rng, o);
  return ModelGraph(Arch::Meso4, o, std::move(params), std::move(layers), init);
}

ModelGraph build_mesoinception4(Rng& rng, const ModelOptions& o) {
  validate_options(o);
  const InitInfo init{"glorot_uniform", rng.next_u64()};
  Rng init_rng(init.seed);
  ParamStore params;
  LayerList layers;
  const int c1 = o.inception1.out_channels();
  const int c2 = o.inception2.out_channels();
  layers.push_back(
      make_inception_module(params, init_rng, "inception1", 3, o.inception1));
  layers.push_back(make_batchnorm(params, "bn1", c1, o));
  layers.push_back(make_pool("pool1", 2));
  layers.push_back(
      make_inception_module(params, init_rng, "inception2", c1, o.inception2));
  layers.push_back(make_batchnorm(params, "bn2", c2, o));
  layers.push_back(make_pool("pool2", 2));
  append_conv_block(layers, params, init_rng, o, 3, c2, 16, 5, 2);
  append_conv_block(layers, params, init_rng, o, 4, 16, 16, 5, o.final_pool);
  append_head(layers, params, init_rng, o);
  return ModelGraph(Arch::MesoInception4, o, std::move(params),
                    std::move(layers), init);
}

ModelGraph build_model(Arch arch, Rng& rng, const ModelOptions& options) {
  return arch == Arch::Meso4 ? build_meso4(rng, options)
                             : build_mesoinception4(rng, options);
}

// ---------------------------------------------------------------------------

ModelGraph::ModelGraph(Arch arch, ModelOptions options, ParamStore params,
                       LayerList layers, InitInfo init)
    : arch_(arch),
      options_(options),
      params_(std::move(params)),
      layers_(std::move(layers)),
      init_(std::move(init)) {
  // Every slot must be owned by exactly one layer.
  std::vector<int> owners(params_.size(), 0);
  for (const LayerPtr& layer : layers_) {
    for (std::size_t slot : layer->param_slots()) ++owners.at(slot);
  }
  for (std::size_t i = 0; i < owners.size(); ++i) {
    if (owners[i] != 1) {
      throw std::logic_error("parameter '" + params_[i].name + "' is used by " +
                             std::to_string(owners[i]) + " layers");
    }
  }
  // Shape-check the whole chain once.
  layer_output_shape(layers_.size() - 1);
}

std::optional<std::size_t> ModelGraph::find_layer(std::string_view name) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i]->name() == name) return i;
  }
  return std::nullopt;
}

Shape ModelGraph::input_shape(int batch) const {
  return {batch, 3, options_.input_size, options_.input_size};
}

Shape ModelGraph::layer_output_shape(std::size_t index, int batch) const {
  Shape s = input_shape(batch);
  for (std::size_t i = 0; i <= index && i < layers_.size(); ++i) {
    s = layers_[i]->output_shape(s);
  }
  return s;
}

Tensor ModelGraph::forward(const Tensor& x, ForwardContext& ctx, Tape* tape,
                           std::size_t stop) const {
  const Shape expected = input_shape(x.shape().n);
  check_shape(x.shape() == expected, "model input shape " + x.shape().str() +
                                         " != expected " + expected.str());
  const std::size_t end = std::min(stop, layers_.size());
  if (tape) {
    tape->caches.clear();
    tape->caches.resize(end);
  }
  Tensor h = x;
  for (std::size_t i = 0; i < end; ++i) {
    h = layers_[i]->forward(h, params_, ctx, tape ? &tape->caches[i] : nullptr);
  }
  return h;
}

Tensor ModelGraph::backward(const Tape& tape, const Tensor& grad_out,
                            Gradients& grads, bool need_input_grad) const {
  Tensor g = grad_out;
  for (std::size_t i = tape.caches.size(); i-- > 0;) {
    if (!tape.caches[i]) {
      throw std::logic_error("tape has no cache for layer '" +
                             layers_[i]->name() + "'");
    }
    const bool need = i > 0 || need_input_grad;
    g = layers_[i]->backward(g, *tape.caches[i], params_, grads, need);
  }
  return g;
}

std::vector<float> ModelGraph::predict(const Tensor& x) const {
  ForwardContext ctx;
  ctx.mode = Mode::Infer;
  const Tensor y = forward(x, ctx);
  return {y.data().begin(), y.data().end()};
}

}  // namespace mesoforge
