#pragma once

// Differentiable layer primitives. Each forward has a matching backward that
// computes exact gradients; none of them keep hidden state.

#include <cstdint>
#include <span>
#include <vector>

#include "mesoforge/rng.hpp"
#include "mesoforge/tensor.hpp"

namespace mesoforge {

enum class Mode { Train, Infer };

namespace ops {

// ---------------------------------------------------------------------------
// Convolution

enum class Padding { Same, Valid };

struct Extent2 {
  int h = 1;
  int w = 1;
  bool operator==(const Extent2&) const = default;
};

struct ConvSpec {
  int out_channels = 1;
  Extent2 kernel{3, 3};
  Extent2 stride{1, 1};
  Extent2 dilation{1, 1};
  Padding padding = Padding::Same;
  bool has_bias = true;

  /// (k - 1) * d + 1 along each axis.
  Extent2 effective_kernel() const {
    return {(kernel.h - 1) * dilation.h + 1, (kernel.w - 1) * dilation.w + 1};
  }
};

/// Output geometry and leading (top/left) zero padding of a convolution.
struct ConvGeometry {
  int out_h = 0;
  int out_w = 0;
  int pad_top = 0;
  int pad_left = 0;
};

/// Same: out = ceil(in / stride), total padding split with the odd pixel on
/// the bottom/right. Valid: out = floor((in - effective) / stride) + 1.
ConvGeometry conv_geometry(const Shape& input, const ConvSpec& spec);

/// Checks weights (outC, inC, kh, kw) and bias against the spec and input.
void validate_conv(const Shape& input, const Tensor& weights,
                   std::span<const float> bias, const ConvSpec& spec);

/// im2col + GEMM convolution; the path used by the models.
Tensor conv2d(const Tensor& x, const Tensor& weights,
              std::span<const float> bias, const ConvSpec& spec);

/// Direct nested-loop convolution with identical semantics.
Tensor conv2d_direct(const Tensor& x, const Tensor& weights,
                     std::span<const float> bias, const ConvSpec& spec);

struct ConvGrads {
  Tensor grad_x;  // left as a 1-element placeholder when not requested
  Tensor grad_weights;
  std::vector<float> grad_bias;
};

ConvGrads conv2d_backward(const Tensor& x, const Tensor& weights,
                          const Tensor& grad_out, const ConvSpec& spec,
                          bool need_grad_x = true);

// ---------------------------------------------------------------------------
// Max pooling

struct PoolSpec {
  Extent2 window{2, 2};
  /// Zero means "same as window".
  Extent2 stride{0, 0};

  Extent2 effective_stride() const {
    return {stride.h > 0 ? stride.h : window.h,
            stride.w > 0 ? stride.w : window.w};
  }
};

struct PoolResult {
  Tensor out;
  /// Flat input offset of the selected element, one per output element.
  std::vector<std::uint32_t> argmax;
};

/// Ties resolve to the first maximum in row-major window order.
PoolResult maxpool2d(const Tensor& x, const PoolSpec& spec);

Tensor maxpool2d_backward(const Shape& input_shape,
                          std::span<const std::uint32_t> argmax,
                          const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Batch normalization

struct BatchNormState {
  std::vector<float> gamma;
  std::vector<float> beta;
  std::vector<float> running_mean;
  std::vector<float> running_var;
  float epsilon = 1e-3f;
  float momentum = 0.99f;

  explicit BatchNormState(int channels = 0)
      : gamma(channels, 1.0f),
        beta(channels, 0.0f),
        running_mean(channels, 0.0f),
        running_var(channels, 1.0f) {}

  int channels() const { return static_cast<int>(gamma.size()); }
};

/// Quantities saved by the forward pass for the backward pass.
struct BatchNormSaved {
  Mode mode = Mode::Infer;
  Tensor x_hat;
  std::vector<float> inv_std;
};

/// Train: normalizes by batch statistics over (n, h, w) and folds them into
/// the running statistics with `momentum`. Infer: uses running statistics.
Tensor batchnorm(const Tensor& x, BatchNormState& state, Mode mode,
                 BatchNormSaved* saved = nullptr);

struct BatchNormGrads {
  Tensor grad_x;
  std::vector<float> grad_gamma;
  std::vector<float> grad_beta;
};

/// Full batch-statistics gradient in Train mode; fixed-statistics gradient
/// in Infer mode.
BatchNormGrads batchnorm_backward(const Tensor& grad_out,
                                  std::span<const float> gamma,
                                  const BatchNormSaved& saved);

// ---------------------------------------------------------------------------
// Dense

/// x is (n, c, h, w) read as n rows of width c*h*w. Weights are stored
/// (1, 1, in, out) so that rows equal the input width. Output is
/// (n, out, 1, 1).
Tensor dense(const Tensor& x, const Tensor& weights,
             std::span<const float> bias);

struct DenseGrads {
  Tensor grad_x;  // shaped like x
  Tensor grad_weights;
  std::vector<float> grad_bias;
};

DenseGrads dense_backward(const Tensor& x, const Tensor& weights,
                          const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Activations

Tensor relu(const Tensor& x);
/// Subgradient 0 at exactly zero.
Tensor relu_backward(const Tensor& x, const Tensor& grad_out);

Tensor leaky_relu(const Tensor& x, float slope);
Tensor leaky_relu_backward(const Tensor& x, const Tensor& grad_out,
                           float slope);

/// Clamped to the open interval (0, 1) in single precision.
Tensor sigmoid(const Tensor& x);
Tensor sigmoid_backward(const Tensor& y, const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Dropout

struct DropoutResult {
  Tensor out;
  /// Per-element multiplier: 0 or 1/(1-rate). Empty when the op was the
  /// identity.
  std::vector<float> mask;
};

/// Inverted dropout. Infer mode and rate 0 are exact identities.
DropoutResult dropout(const Tensor& x, float rate, Mode mode, Rng& rng);
Tensor dropout_backward(const Tensor& grad_out, std::span<const float> mask);

// ---------------------------------------------------------------------------
// Channel concatenation

Tensor channel_concat(std::span<const Tensor> xs);
/// Inverse of channel_concat for the given per-part channel counts.
std::vector<Tensor> channel_split(const Tensor& x, std::span<const int> channels);

}  // namespace ops
}  // namespace mesoforge
