#pragma once

// Double-precision naive-loop primitives and a forward pass of a whole model
// graph built from them, used as finite-difference oracles. In float32 the
// rounding noise of central differences reaches the 1e-2 tolerance; in
// double a step of 1e-6 is both smooth and exact enough.

#include <cstdint>
#include <span>
#include <vector>

#include "mesoforge/model.hpp"
#include "mesoforge/ops.hpp"

namespace oracle {

struct DTensor {
  mesoforge::Shape shape;
  std::vector<double> v;

  DTensor() = default;
  explicit DTensor(mesoforge::Shape s) : shape(s), v(s.numel(), 0.0) {}
  std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape.c + c) * shape.h + h) * shape.w + w;
  }
  double& at(int n, int c, int h, int w) { return v[offset(n, c, h, w)]; }
  double at(int n, int c, int h, int w) const { return v[offset(n, c, h, w)]; }
};

/// Weights (out, in, kh, kw); `bias` may be null.
DTensor conv2d(const DTensor& x, std::span<const double> w, const std::vector<double>* bias,
               const mesoforge::ops::ConvSpec& spec);
/// Train mode uses the biased batch variance; Infer mode the running values.
DTensor batchnorm(const DTensor& x, const std::vector<double>& gamma,
                  const std::vector<double>& beta, const std::vector<double>& running_mean,
                  const std::vector<double>& running_var, double eps, mesoforge::Mode mode);
DTensor maxpool(const DTensor& x, const mesoforge::ops::PoolSpec& spec);
DTensor concat(const std::vector<DTensor>& parts);
/// Weights (in, out) row-major, one output per bias entry.
DTensor dense(const DTensor& x, std::span<const double> w, const std::vector<double>& b);

class ReferenceNet {
 public:
  /// Copies the model's parameters. In Train mode batch normalization uses
  /// batch statistics and dropout draws its masks the way the model does
  /// from Rng(dropout_seed), once, for the given input shape.
  ReferenceNet(const mesoforge::ModelGraph& model, mesoforge::Mode mode,
               const mesoforge::Shape& input_shape, std::uint64_t dropout_seed);

  std::vector<double>& param(std::size_t slot) { return params_.at(slot); }
  DTensor forward(const DTensor& x) const;

  /// Mean of 0.5 * (score - label)^2, as the training loss.
  double loss(const DTensor& x, std::span<const float> labels) const;

 private:
  DTensor run(const mesoforge::Layer& layer, DTensor x, std::size_t& dropout_index) const;

  const mesoforge::ModelGraph& model_;
  mesoforge::Mode mode_;
  std::vector<std::vector<double>> params_;
  std::vector<std::vector<float>> masks_;
};

DTensor to_double(const mesoforge::Tensor& t);

}  // namespace oracle
