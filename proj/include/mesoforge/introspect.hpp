#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mesoforge/data.hpp"
#include "mesoforge/model.hpp"

namespace mesoforge {

/// Maximises E(x) = f_ij(x) - lambda * ||x||_p over input images x, where
/// f_ij is the spatial mean of channel j of layer i's output. For a dense
/// layer that is the neuron's pre-activation value.
struct ActMaxConfig {
  std::size_t layer = 0;
  int unit = 0;
  double lambda = 10.0;
  double p = 6.0;
  double step = 0.05;
  int iterations = 100;
  std::uint64_t seed = 0;
  /// The start image is uniform noise in [init_lo, init_hi].
  double init_lo = 0.4;
  double init_hi = 0.6;

  void validate() const;
};

/// (sum |x_k|^p)^(1/p) over every element; zero for an all-zero tensor.
double pnorm(const Tensor& x, double p);

struct Objective {
  double value = 0.0;       // E(x)
  double activation = 0.0;  // f_ij(x)
  double norm = 0.0;        // ||x||_p
  Tensor grad;              // dE/dx when requested
};

/// Evaluates E(x) in inference mode for a single image (1, 3, S, S).
/// Throws std::out_of_range listing the valid layer and unit ranges.
Objective actmax_objective(const ModelGraph& model, const Tensor& x,
                           std::size_t layer, int unit, double lambda, double p,
                           bool with_grad);

struct ActMaxResult {
  Tensor image;
  /// E(x) of the start image followed by E after each step.
  std::vector<double> trace;
  double final_activation = 0.0;
};

/// Plain gradient ascent with a fixed step, clamping x to [0, 1] after
/// every step.
ActMaxResult activation_maximize(const ModelGraph& model, const ActMaxConfig& config);

/// Per-class mean output maps of one layer.
struct ClassActivation {
  std::size_t layer = 0;
  int channels = 0;
  int height = 0;
  int width = 0;
  std::int64_t forged_count = 0;
  std::int64_t real_count = 0;
  std::vector<double> forged;  // (channels, height, width), mean over images
  std::vector<double> real;
};

/// Each class is scored separately in manifest order, `batch_size` images at
/// a time. A single-class manifest raises DataError.
ClassActivation mean_class_activation(const ModelGraph& model,
                                      const DatasetManifest& manifest,
                                      const ImageLoader& loader,
                                      std::size_t layer, int batch_size = 75);

/// Tiles the maps (channels, height, width) into a grid of `columns` maps
/// separated by one-pixel gaps, each map rescaled to [0, 1]. A constant map
/// renders as 0. Returns a greyscale image of shape (1, 3, H, W).
Tensor activation_grid(std::span<const double> maps, int channels, int height,
                       int width, int columns = 4);

struct SignSplit {
  std::vector<int> negative;  // push the score toward forged
  std::vector<int> positive;  // push the score toward real
  std::vector<int> zero;
};

SignSplit sign_split(std::span<const float> weights);

/// Splits the last hidden layer's neurons by the sign of the weight that
/// connects each of them to the output neuron.
SignSplit hidden_neuron_sign_split(const ModelGraph& model);

/// Index of the last hidden dense layer (the input of the final dense
/// layer).
std::size_t hidden_dense_layer(const ModelGraph& model);

}  // namespace mesoforge
