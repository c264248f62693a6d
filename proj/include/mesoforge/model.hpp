#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mesoforge/layers.hpp"

namespace mesoforge {

enum class Arch { Meso4, MesoInception4 };

std::string to_string(Arch arch);
/// Accepts "meso4" and "mesoinception4".
Arch parse_arch(std::string_view text);

/// Branch widths of one inception module: a 1x1 branch, then 1x1 -> 3x3
/// branches at dilation 1, 2 and 3 with b, c and d filters.
struct InceptionParams {
  int a = 1;
  int b = 1;
  int c = 1;
  int d = 1;

  int out_channels() const { return a + b + c + d; }
  bool operator==(const InceptionParams&) const = default;
};

inline constexpr InceptionParams kInception1{1, 4, 4, 1};
inline constexpr InceptionParams kInception2{1, 4, 4, 2};

struct ModelOptions {
  /// Square input side. 256 for the published networks; smaller values are
  /// used for fast gradient checks.
  int input_size = 256;
  /// Window of the last max-pool (4 for 256 inputs).
  int final_pool = 4;
  InceptionParams inception1 = kInception1;
  InceptionParams inception2 = kInception2;
  float dropout_rate = 0.5f;
  float leaky_slope = 0.1f;
  float bn_epsilon = 1e-3f;
  float bn_momentum = 0.99f;
};

struct InitInfo {
  std::string scheme = "glorot_uniform";
  std::uint64_t seed = 0;
};

/// Per-forward record of layer caches, consumed by backward().
struct Tape {
  std::vector<std::unique_ptr<LayerCache>> caches;
};

/// Layer sequence (with nested inception branches) over a ParamStore.
/// Input (n, 3, S, S); output (n, 1, 1, 1) scores in (0, 1).
class ModelGraph {
 public:
  static constexpr std::size_t kAll = std::numeric_limits<std::size_t>::max();

  ModelGraph(Arch arch, ModelOptions options, ParamStore params,
             LayerList layers, InitInfo init);

  Arch arch() const { return arch_; }
  const ModelOptions& options() const { return options_; }
  const InitInfo& init_info() const { return init_; }
  void set_init_info(InitInfo init) { init_ = std::move(init); }
  const ParamStore& params() const { return params_; }
  ParamStore& params() { return params_; }

  std::size_t layer_count() const { return layers_.size(); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }
  std::optional<std::size_t> find_layer(std::string_view name) const;

  Shape input_shape(int batch = 1) const;
  /// Output shape of layer `index` for the given batch size.
  Shape layer_output_shape(std::size_t index, int batch = 1) const;

  /// Runs layers [0, stop). Train mode needs ctx.rng and
  /// ctx.running_stats; pass `tape` to enable backward().
  Tensor forward(const Tensor& x, ForwardContext& ctx, Tape* tape = nullptr,
                 std::size_t stop = kAll) const;

  /// Backpropagates through every layer recorded on `tape`, accumulating
  /// parameter gradients. Returns d(loss)/d(input) when requested.
  Tensor backward(const Tape& tape, const Tensor& grad_out, Gradients& grads,
                  bool need_input_grad = false) const;

  /// Inference-mode scores, one per batch item.
  std::vector<float> predict(const Tensor& x) const;

 private:
  Arch arch_;
  ModelOptions options_;
  ParamStore params_;
  LayerList layers_;
  InitInfo init_;
};

ModelGraph build_meso4(Rng& rng, const ModelOptions& options = {});
ModelGraph build_mesoinception4(Rng& rng, const ModelOptions& options = {});
ModelGraph build_model(Arch arch, Rng& rng, const ModelOptions& options = {});

/// The module alone: four branches over `x` concatenated in order, each conv
/// followed by ReLU. Registers its parameters under `prefix`.
LayerPtr make_inception_module(ParamStore& params, Rng& rng,
                               const std::string& prefix, int in_channels,
                               const InceptionParams& p);

// ---------------------------------------------------------------------------
// Parameter accounting

struct ParamCounts {
  std::int64_t trainable = 0;
  std::int64_t non_trainable = 0;
  bool operator==(const ParamCounts&) const = default;
};

ParamCounts count_params(const ModelGraph& model);

struct LayerParamCount {
  std::string layer;
  std::string kind;
  std::int64_t trainable = 0;
  std::int64_t non_trainable = 0;
};

/// One row per top-level layer that owns parameters, in graph order.
std::vector<LayerParamCount> param_breakdown(const ModelGraph& model);

/// Closed-form trainable count of one inception module.
std::int64_t inception_trainable_params(int in_channels,
                                        const InceptionParams& p);

/// Closed-form trainable count of MesoInception-4 for the given modules.
std::int64_t mesoinception4_trainable_params(const InceptionParams& first,
                                             const InceptionParams& second,
                                             const ModelOptions& options = {});

inline constexpr std::int64_t kMeso4PublishedTrainable = 27'977;
inline constexpr std::int64_t kMesoInception4PublishedTrainable = 28'615;

struct InceptionVariant {
  InceptionParams first;
  InceptionParams second;
  std::int64_t trainable = 0;
  int distance = 0;  // L1 distance from the requested module widths
};

/// Compares the count implied by the requested module widths with the
/// published MesoInception-4 total and lists the variants, within +-1 of
/// each width, that reproduce the published total exactly.
struct ReconciliationReport {
  InceptionParams first;
  InceptionParams second;
  std::int64_t trainable = 0;
  std::int64_t published = kMesoInception4PublishedTrainable;
  std::vector<InceptionVariant> exact_matches;

  std::int64_t delta() const { return trainable - published; }
  bool matches_published() const { return delta() == 0; }
  std::string render() const;
};

ReconciliationReport reconcile_mesoinception4(
    const InceptionParams& first = kInception1,
    const InceptionParams& second = kInception2);

}  // namespace mesoforge
