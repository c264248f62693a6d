#include "mesoforge/introspect.hpp"

#include <algorithm>
#include <cmath>

namespace mesoforge {

void ActMaxConfig::validate() const {
  if (!(lambda >= 0.0)) throw std::invalid_argument("actmax: lambda must be >= 0");
  if (!(p >= 1.0)) throw std::invalid_argument("actmax: p must be >= 1");
  if (iterations < 1) throw std::invalid_argument("actmax: iterations must be >= 1");
  if (!(step > 0.0)) throw std::invalid_argument("actmax: step must be positive");
  if (!(init_lo >= 0.0 && init_hi <= 1.0 && init_lo <= init_hi)) {
    throw std::invalid_argument("actmax: start range must lie within [0, 1]");
  }
}

double pnorm(const Tensor& x, double p) {
  double peak = 0.0;
  for (float v : x.data()) peak = std::max(peak, std::fabs(static_cast<double>(v)));
  if (peak == 0.0) return 0.0;
  // Scaling by the peak keeps |x|^p representable for large p.
  double sum = 0.0;
  for (float v : x.data()) sum += std::pow(std::fabs(v) / peak, p);
  return peak * std::pow(sum, 1.0 / p);
}

namespace {

void check_unit(const ModelGraph& model, std::size_t layer, int unit) {
  if (layer >= model.layer_count()) {
    throw std::out_of_range("layer index " + std::to_string(layer) +
                            " out of range, valid layers are 0.." +
                            std::to_string(model.layer_count() - 1));
  }
  const int units = model.layer_output_shape(layer, 1).c;
  if (unit < 0 || unit >= units) {
    throw std::out_of_range("unit " + std::to_string(unit) + " out of range for layer " +
                            std::to_string(layer) + " ('" + model.layer(layer).name() +
                            "'), valid units are 0.." + std::to_string(units - 1));
  }
}

}  // namespace

Objective actmax_objective(const ModelGraph& model, const Tensor& x,
                           std::size_t layer, int unit, double lambda, double p,
                           bool with_grad) {
  check_unit(model, layer, unit);
  check_shape(x.shape() == model.input_shape(1),
              "actmax: input shape " + x.shape().str() + " != expected " +
                  model.input_shape(1).str());
  ForwardContext ctx;
  ctx.mode = Mode::Infer;
  Tape tape;
  const Tensor out = model.forward(x, ctx, with_grad ? &tape : nullptr, layer + 1);
  const Shape& s = out.shape();
  const std::size_t plane = s.plane();
  double act = 0.0;
  const float* ch = out.ptr() + out.offset(0, unit, 0, 0);
  for (std::size_t k = 0; k < plane; ++k) act += ch[k];
  act /= static_cast<double>(plane);

  Objective obj;
  obj.activation = act;
  obj.norm = pnorm(x, p);
  obj.value = act - lambda * obj.norm;
  if (!with_grad) return obj;

  Tensor g_out(s);
  std::fill_n(g_out.ptr() + g_out.offset(0, unit, 0, 0), plane,
              static_cast<float>(1.0 / static_cast<double>(plane)));
  Gradients unused(model.params());
  obj.grad = model.backward(tape, g_out, unused, true);
  if (lambda > 0.0 && obj.norm > 0.0) {
    // d||x||_p / dx_k = sign(x_k) * (|x_k| / ||x||_p)^(p - 1)
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double v = x[k];
      const double d = std::copysign(std::pow(std::fabs(v) / obj.norm, p - 1.0), v);
      obj.grad[k] = static_cast<float>(obj.grad[k] - lambda * d);
    }
  }
  return obj;
}

ActMaxResult activation_maximize(const ModelGraph& model, const ActMaxConfig& config) {
  config.validate();
  check_unit(model, config.layer, config.unit);
  Rng rng(config.seed);
  Tensor x(model.input_shape(1));
  for (float& v : x.data()) {
    v = static_cast<float>(rng.uniform(config.init_lo, config.init_hi));
  }
  ActMaxResult result;
  Objective obj = actmax_objective(model, x, config.layer, config.unit, config.lambda,
                                   config.p, true);
  result.trace.push_back(obj.value);
  for (int it = 0; it < config.iterations; ++it) {
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double v = x[k] + config.step * obj.grad[k];
      x[k] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    obj = actmax_objective(model, x, config.layer, config.unit, config.lambda,
                           config.p, it + 1 < config.iterations);
    result.trace.push_back(obj.value);
  }
  result.final_activation = obj.activation;
  result.image = std::move(x);
  return result;
}

ClassActivation mean_class_activation(const ModelGraph& model,
                                      const DatasetManifest& manifest,
                                      const ImageLoader& loader, std::size_t layer,
                                      int batch_size) {
  if (layer >= model.layer_count()) {
    throw std::out_of_range("layer index " + std::to_string(layer) +
                            " out of range, valid layers are 0.." +
                            std::to_string(model.layer_count() - 1));
  }
  const ClassCounts counts = manifest.counts();
  if (counts.forged == 0 || counts.real == 0) {
    throw DataError("mean_class_activation needs images of both classes");
  }
  const Shape s = model.layer_output_shape(layer, 1);
  ClassActivation out;
  out.layer = layer;
  out.channels = s.c;
  out.height = s.h;
  out.width = s.w;

  ForwardContext ctx;
  ctx.mode = Mode::Infer;
  for (int label : {kLabelForged, kLabelReal}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
      if (manifest.records[i].label == label) members.push_back(i);
    }
    std::vector<double> sum(s.item(), 0.0);
    for (std::size_t first = 0; first < members.size(); first += batch_size) {
      const std::size_t last = std::min(members.size(), first + batch_size);
      const std::vector<std::size_t> idx(members.begin() + first, members.begin() + last);
      const Batch batch = load_batch(manifest, idx, loader);
      const Tensor y = model.forward(batch.images, ctx, nullptr, layer + 1);
      for (int n = 0; n < y.shape().n; ++n) {
        const auto item = y.item(n);
        for (std::size_t k = 0; k < item.size(); ++k) sum[k] += item[k];
      }
    }
    const double count = static_cast<double>(members.size());
    for (double& v : sum) v /= count;
    if (label == kLabelForged) {
      out.forged = std::move(sum);
      out.forged_count = static_cast<std::int64_t>(members.size());
    } else {
      out.real = std::move(sum);
      out.real_count = static_cast<std::int64_t>(members.size());
    }
  }
  return out;
}

Tensor activation_grid(std::span<const double> maps, int channels, int height,
                       int width, int columns) {
  check_shape(channels >= 1 && height >= 1 && width >= 1 && columns >= 1,
              "activation_grid: dimensions must be positive");
  check_shape(maps.size() == static_cast<std::size_t>(channels) * height * width,
              "activation_grid: map data does not match (channels, height, width)");
  const int cols = std::min(columns, channels);
  const int rows = (channels + cols - 1) / cols;
  Tensor img(Shape{1, 3, rows * (height + 1) - 1, cols * (width + 1) - 1});
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  for (int c = 0; c < channels; ++c) {
    const auto map = maps.subspan(c * plane, plane);
    const auto [lo, hi] = std::ranges::minmax(map);
    const double range = hi - lo;
    const int top = (c / cols) * (height + 1);
    const int left = (c % cols) * (width + 1);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double v = range > 0.0 ? (map[y * width + x] - lo) / range : 0.0;
        for (int ch = 0; ch < 3; ++ch) img.at(0, ch, top + y, left + x) = static_cast<float>(v);
      }
    }
  }
  return img;
}

SignSplit sign_split(std::span<const float> weights) {
  SignSplit s;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const int idx = static_cast<int>(i);
    if (weights[i] < 0.0f) {
      s.negative.push_back(idx);
    } else if (weights[i] > 0.0f) {
      s.positive.push_back(idx);
    } else {
      s.zero.push_back(idx);
    }
  }
  return s;
}

namespace {

std::vector<std::size_t> dense_layers(const ModelGraph& model) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    if (dynamic_cast<const DenseLayer*>(&model.layer(i))) out.push_back(i);
  }
  if (out.size() < 2) {
    throw std::logic_error("model has no hidden dense layer");
  }
  return out;
}

}  // namespace

std::size_t hidden_dense_layer(const ModelGraph& model) {
  const auto dense = dense_layers(model);
  return dense[dense.size() - 2];
}

SignSplit hidden_neuron_sign_split(const ModelGraph& model) {
  const auto dense = dense_layers(model);
  const auto& head = dynamic_cast<const DenseLayer&>(model.layer(dense.back()));
  if (head.out_features() != 1) {
    throw std::logic_error("final dense layer must have a single output");
  }
  return sign_split(model.params().value(head.weight_slot()).data());
}

}  // namespace mesoforge
