#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "mesoforge/ops.hpp"

namespace mesoforge::ops {

namespace {

void same_shape(const Tensor& a, const Tensor& b, const char* op) {
  check_shape(a.shape() == b.shape(), std::string(op) + ": shape " +
                                          a.shape().str() + " != " +
                                          b.shape().str());
}

constexpr float kSigmoidLow = std::numeric_limits<float>::min();
// Largest float below one.
constexpr float kSigmoidHigh = 1.0f - 0x1.0p-24f;

}  // namespace

Tensor relu(const Tensor& x) {
  Tensor y(x.shape());
  const float* in = x.ptr();
  float* out = y.ptr();
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = std::max(in[i], 0.0f);
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
  same_shape(x, grad_out, "relu_backward");
  Tensor g(x.shape());
  const float* in = x.ptr();
  const float* go = grad_out.ptr();
  float* out = g.ptr();
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > 0.0f ? go[i] : 0.0f;
  return g;
}

Tensor leaky_relu(const Tensor& x, float slope) {
  Tensor y(x.shape());
  const float* in = x.ptr();
  float* out = y.ptr();
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > 0.0f ? in[i] : slope * in[i];
  return y;
}

Tensor leaky_relu_backward(const Tensor& x, const Tensor& grad_out,
                           float slope) {
  same_shape(x, grad_out, "leaky_relu_backward");
  Tensor g(x.shape());
  const float* in = x.ptr();
  const float* go = grad_out.ptr();
  float* out = g.ptr();
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > 0.0f ? go[i] : slope * go[i];
  return g;
}

Tensor sigmoid(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = 1.0 / (1.0 + std::exp(-static_cast<double>(x[i])));
    y[i] = std::clamp(static_cast<float>(v), kSigmoidLow, kSigmoidHigh);
  }
  return y;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& grad_out) {
  same_shape(y, grad_out, "sigmoid_backward");
  Tensor g(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) {
    g[i] = grad_out[i] * y[i] * (1.0f - y[i]);
  }
  return g;
}

DropoutResult dropout(const Tensor& x, float rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0f && rate < 1.0f)) {
    throw std::invalid_argument("dropout rate must be in [0, 1), got " +
                                std::to_string(rate));
  }
  if (mode == Mode::Infer || rate == 0.0f) return {x, {}};
  DropoutResult result{Tensor(x.shape()), std::vector<float>(x.size())};
  const float keep_scale = 1.0f / (1.0f - rate);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float m = rng.uniform() < rate ? 0.0f : keep_scale;
    result.mask[i] = m;
    result.out[i] = x[i] * m;
  }
  return result;
}

Tensor dropout_backward(const Tensor& grad_out, std::span<const float> mask) {
  if (mask.empty()) return grad_out;
  check_shape(mask.size() == grad_out.size(),
              "dropout backward: mask length mismatch");
  Tensor g(grad_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = grad_out[i] * mask[i];
  return g;
}

Tensor channel_concat(std::span<const Tensor> xs) {
  check_shape(!xs.empty(), "channel_concat needs at least one tensor");
  const Shape first = xs.front().shape();
  int channels = 0;
  for (const Tensor& t : xs) {
    const Shape& s = t.shape();
    check_shape(s.n == first.n, "channel_concat: batch " + std::to_string(s.n) +
                                    " != " + std::to_string(first.n));
    check_shape(s.h == first.h, "channel_concat: height " +
                                    std::to_string(s.h) + " != " +
                                    std::to_string(first.h));
    check_shape(s.w == first.w, "channel_concat: width " + std::to_string(s.w) +
                                    " != " + std::to_string(first.w));
    channels += s.c;
  }
  Tensor out(Shape{first.n, channels, first.h, first.w});
  for (int n = 0; n < first.n; ++n) {
    float* dst = out.item(n).data();
    for (const Tensor& t : xs) {
      const auto src = t.item(n);
      std::memcpy(dst, src.data(), src.size() * sizeof(float));
      dst += src.size();
    }
  }
  return out;
}

std::vector<Tensor> channel_split(const Tensor& x,
                                  std::span<const int> channels) {
  const Shape& s = x.shape();
  int total = 0;
  for (int c : channels) {
    check_shape(c >= 1, "channel_split part must have >= 1 channel");
    total += c;
  }
  check_shape(total == s.c, "channel_split: parts sum to " +
                                std::to_string(total) + " channels, tensor has " +
                                std::to_string(s.c));
  std::vector<Tensor> parts;
  parts.reserve(channels.size());
  for (int c : channels) parts.emplace_back(Shape{s.n, c, s.h, s.w});
  for (int n = 0; n < s.n; ++n) {
    const float* src = x.item(n).data();
    for (Tensor& part : parts) {
      auto dst = part.item(n);
      std::memcpy(dst.data(), src, dst.size() * sizeof(float));
      src += dst.size();
    }
  }
  return parts;
}

}  // namespace mesoforge::ops
