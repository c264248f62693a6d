#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "mesoforge/data.hpp"
#include "mesoforge/model.hpp"
#include "mesoforge/optim.hpp"

namespace mesoforge {

struct TrainConfig {
  int epochs = 30;
  /// Stop after this many epochs without a strict validation-loss
  /// improvement. Ignored without a validation set.
  int patience = 5;
  int batch_size = 75;
  /// Stop after this many optimizer steps in total; negative means no cap.
  std::int64_t max_steps = -1;
  AdamConfig adam;
  /// Applied to training batches only; nullopt disables augmentation.
  std::optional<AugmentConfig> augment = AugmentConfig{};
  std::uint64_t seed = 0;
  /// At the end of every epoch, re-estimate batch-norm running statistics as
  /// the plain average over this many un-augmented training batches.
  /// Zero keeps the exponential moving averages from training.
  int bn_recalibration_batches = 8;

  void validate() const;
};

/// One optimizer step.
struct LossRecord {
  std::int64_t iteration = 0;
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // mean step loss over the epoch
  std::optional<double> val_loss;
  std::optional<double> val_accuracy;
  bool improved = false;
};

struct TrainResult {
  std::vector<LossRecord> trace;
  std::vector<EpochRecord> epochs;
  /// Epoch whose parameters the model holds on return (0 = initialization).
  int best_epoch = 0;
  std::optional<double> best_val_loss;
  std::int64_t steps = 0;
  bool early_stopped = false;  // patience ran out
  bool stopped_by_hook = false;
};

struct TrainHooks {
  std::function<void(const LossRecord&)> on_step;
  std::function<void(const EpochRecord&)> on_epoch;
  /// Ends training after the epoch when it returns true.
  std::function<bool(const EpochRecord&)> should_stop;
};

/// Forward in Train mode, MSE loss, backward and one ADAM step on a fixed
/// batch. Returns the loss before the update. Throws NumericalError on a
/// non-finite loss.
double train_step(ModelGraph& model, const Tensor& images,
                  std::span<const float> labels, AdamState& state,
                  const AdamConfig& config, Rng& rng);

/// Overwrites every batch-norm running mean and variance with the average of
/// the batch statistics of `batches` batches drawn from `manifest` (forward
/// passes only). Parameters other than running statistics are untouched.
void recalibrate_batchnorm(ModelGraph& model, const DatasetManifest& manifest,
                           const ImageLoader& loader, int batch_size, int batches,
                           Rng& rng);

/// Mini-batch training. With a non-empty validation set, the parameters of
/// the epoch with the lowest validation loss are restored at the end.
TrainResult train(ModelGraph& model, const DatasetManifest& train_set,
                  const DatasetManifest& validation_set,
                  const ImageLoader& loader, const TrainConfig& config,
                  const TrainHooks& hooks = {});

/// Inference-mode scores for every record, in manifest order.
std::vector<float> predict_manifest(const ModelGraph& model,
                                    const DatasetManifest& manifest,
                                    const ImageLoader& loader,
                                    int batch_size = 75);

/// CSV "iteration,epoch,lr,loss" with round-trip precision.
void write_loss_trace(const std::vector<LossRecord>& trace, std::ostream& out);

}  // namespace mesoforge
