#pragma once

// Independent reference implementations used only by tests. They share no
// code with the library beyond the Tensor container.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mesoforge/rng.hpp"
#include "mesoforge/tensor.hpp"

namespace oracle {

using mesoforge::Rng;
using mesoforge::Shape;
using mesoforge::Tensor;

Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0);

/// Direct convolution with explicit zero padding. `same` pads so that the
/// output is ceil(in / stride), odd padding on the bottom/right.
Tensor conv2d(const Tensor& x, const Tensor& w, std::span<const float> bias, int stride_h,
              int stride_w, int dil_h, int dil_w, bool same);

struct Pooled {
  Tensor out;
  std::vector<std::size_t> argmax;  // flat input offsets
};
/// Scans each window and keeps the first strict maximum in row-major order.
Pooled maxpool(const Tensor& x, int window_h, int window_w);

struct BnOut {
  Tensor y;
  std::vector<double> mean;
  std::vector<double> var;  // biased
};
BnOut batchnorm_train(const Tensor& x, std::span<const float> gamma,
                      std::span<const float> beta, double eps);
Tensor batchnorm_infer(const Tensor& x, std::span<const float> gamma,
                       std::span<const float> beta, std::span<const float> mean,
                       std::span<const float> var, double eps);

/// Weights (1, 1, in, out).
Tensor dense(const Tensor& x, const Tensor& w, std::span<const float> bias);

/// Central differences of f with respect to every element of `x`.
std::vector<double> numeric_gradient(const std::function<double(const Tensor&)>& f,
                                     const Tensor& x, double h);

/// max_k |a_k - n_k| / max(|a_k|, |n_k|, floor), with
/// floor = floor_fraction * max_k |n_k| + 1e-6. The floor keeps elements whose
/// true gradient is near zero from dominating through rounding noise.
double max_relative_error(std::span<const float> analytic, std::span<const double> numeric,
                          double floor_fraction = 1e-2);

/// sum_k x_k * r_k in double: a scalar loss with a dense random cotangent.
double weighted_sum(const Tensor& x, const Tensor& r);

/// Textbook ADAM on one scalar, all in double.
struct ScalarAdam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double m = 0.0;
  double v = 0.0;
  int t = 0;
  double step(double w, double g, double lr);
};

/// ROC points (fpr, tpr) at every threshold in `thresholds`, by direct
/// counting; a score at or above the threshold is predicted real (1).
struct Point {
  double fpr;
  double tpr;
};
std::vector<Point> roc_by_scan(std::span<const double> scores, std::span<const int> labels,
                               std::span<const double> thresholds);

/// Trapezoid area of points sorted by threshold descending, as an exact
/// fraction numerator / denominator over integer counts.
struct Fraction {
  std::int64_t num;
  std::int64_t den;
};
Fraction auc_by_scan(std::span<const double> scores, std::span<const int> labels,
                     std::span<const double> thresholds);

/// Mann-Whitney U / (pos * neg), ties counting one half.
double mann_whitney_auc(std::span<const double> scores, std::span<const int> labels);

/// Monte-Carlo fixture: `videos` balanced videos of `frames` frames whose
/// per-frame score lands on the correct side of 0.5 with probability
/// `frame_accuracy`, independently.
struct VideoFixture {
  std::vector<std::vector<double>> scores;  // per video
  std::vector<int> labels;
};
VideoFixture noisy_videos(int videos, int frames, double frame_accuracy, std::uint64_t seed);

}  // namespace oracle
