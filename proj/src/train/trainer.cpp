#include "mesoforge/train.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

namespace mesoforge {

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
  if (patience < 1) throw std::invalid_argument("train: patience must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");
  if (bn_recalibration_batches < 0) {
    throw std::invalid_argument("train: bn_recalibration_batches must be >= 0");
  }
  adam.validate();
  if (augment) augment->validate();
}

double train_step(ModelGraph& model, const Tensor& images,
                  std::span<const float> labels, AdamState& state,
                  const AdamConfig& config, Rng& rng) {
  ForwardContext ctx;
  ctx.mode = Mode::Train;
  ctx.rng = &rng;
  ctx.running_stats = &model.params();
  Tape tape;
  const Tensor out = model.forward(images, ctx, &tape);
  const LossResult loss = mse_loss(out.data(), labels);
  if (!std::isfinite(loss.loss)) {
    throw NumericalError("non-finite training loss at step " +
                         std::to_string(state.t) + " (lr " +
                         std::to_string(config.schedule.at(state.t)) + ")");
  }
  Gradients grads(model.params());
  model.backward(tape, Tensor(out.shape(), loss.grad), grads);
  adam_step(model.params(), grads, state, config);
  return loss.loss;
}

void recalibrate_batchnorm(ModelGraph& model, const DatasetManifest& manifest,
                           const ImageLoader& loader, int batch_size, int batches,
                           Rng& rng) {
  if (batches <= 0 || manifest.empty()) return;
  const auto order = epoch_batches(manifest.size(), batch_size, true, rng);
  const std::size_t count = std::min<std::size_t>(order.size(), batches);
  // Only running statistics change; dropout draws come from a private stream.
  Rng dropout_rng = rng.fork();
  for (std::size_t k = 0; k < count; ++k) {
    const Batch batch = load_batch(manifest, order[k], loader);
    ForwardContext ctx;
    ctx.mode = Mode::Train;
    ctx.rng = &dropout_rng;
    ctx.running_stats = &model.params();
    // momentum k/(k+1) turns the update into a running arithmetic mean.
    ctx.bn_momentum = static_cast<float>(static_cast<double>(k) / static_cast<double>(k + 1));
    model.forward(batch.images, ctx);
  }
}

std::vector<float> predict_manifest(const ModelGraph& model,
                                    const DatasetManifest& manifest,
                                    const ImageLoader& loader, int batch_size) {
  std::vector<float> scores;
  scores.reserve(manifest.size());
  Rng unused(0);
  for (const auto& indices : epoch_batches(manifest.size(), batch_size, false, unused)) {
    const Batch batch = load_batch(manifest, indices, loader);
    const std::vector<float> s = model.predict(batch.images);
    scores.insert(scores.end(), s.begin(), s.end());
  }
  return scores;
}

namespace {

struct ValidationScore {
  double loss;
  double accuracy;
};

ValidationScore validate_model(const ModelGraph& model, const DatasetManifest& val,
                               const ImageLoader& loader, int batch_size) {
  const std::vector<float> scores = predict_manifest(model, val, loader, batch_size);
  double loss = 0.0;
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const int label = val.records[i].label;
    const double diff = scores[i] - label;
    loss += 0.5 * diff * diff;
    const int predicted = scores[i] >= 0.5f ? kLabelReal : kLabelForged;
    correct += predicted == label;
  }
  const double n = static_cast<double>(scores.size());
  return {loss / n, static_cast<double>(correct) / n};
}

std::string batch_ids(const DatasetManifest& m, const std::vector<std::size_t>& idx) {
  std::string out;
  for (std::size_t k = 0; k < idx.size() && k < 8; ++k) {
    out += (k ? ", " : "") + m.records[idx[k]].image_path;
  }
  if (idx.size() > 8) out += ", ...";
  return out;
}

}  // namespace

TrainResult train(ModelGraph& model, const DatasetManifest& train_set,
                  const DatasetManifest& validation_set, const ImageLoader& loader,
                  const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (train_set.empty() && config.epochs > 0) {
    throw DataError("train: empty training manifest");
  }
  TrainResult result;
  const bool has_val = !validation_set.empty();
  AdamState state(model.params());
  Rng rng(config.seed);
  Rng order_rng = rng.fork();
  Rng augment_rng = rng.fork();
  Rng dropout_rng = rng.fork();
  Rng recalibration_rng = rng.fork();

  ParamStore best = model.params();
  int stale = 0;
  if (has_val && config.epochs > 0) {
    result.best_val_loss =
        validate_model(model, validation_set, loader, config.batch_size).loss;
  }

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.max_steps >= 0 && result.steps >= config.max_steps) break;
    const auto batches =
        epoch_batches(train_set.size(), config.batch_size, true, order_rng);
    double loss_sum = 0.0;
    std::int64_t epoch_steps = 0;
    for (const auto& indices : batches) {
      if (config.max_steps >= 0 && result.steps >= config.max_steps) break;
      const Batch batch =
          load_batch(train_set, indices, loader,
                     config.augment ? &*config.augment : nullptr, &augment_rng);
      const double lr = config.adam.schedule.at(state.t);
      double loss;
      try {
        loss = train_step(model, batch.images, batch.labels, state, config.adam,
                          dropout_rng);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " at iteration " +
                             std::to_string(result.steps) + ", epoch " +
                             std::to_string(epoch) + ", lr " + std::to_string(lr) +
                             ", batch [" + batch_ids(train_set, indices) + "]");
      }
      const LossRecord rec{result.steps, epoch, lr, loss};
      result.trace.push_back(rec);
      if (hooks.on_step) hooks.on_step(rec);
      ++result.steps;
      ++epoch_steps;
      loss_sum += loss;
    }

    EpochRecord er;
    er.epoch = epoch;
    er.train_loss = epoch_steps ? loss_sum / static_cast<double>(epoch_steps) : 0.0;
    if (epoch_steps > 0) {
      recalibrate_batchnorm(model, train_set, loader, config.batch_size,
                            config.bn_recalibration_batches, recalibration_rng);
    }
    if (has_val) {
      const ValidationScore vs =
          validate_model(model, validation_set, loader, config.batch_size);
      er.val_loss = vs.loss;
      er.val_accuracy = vs.accuracy;
      er.improved = vs.loss < *result.best_val_loss;
      if (er.improved) {
        result.best_val_loss = vs.loss;
        result.best_epoch = epoch;
        best = model.params();
        stale = 0;
      } else {
        ++stale;
      }
    } else {
      result.best_epoch = epoch;
      er.improved = true;
    }
    result.epochs.push_back(er);
    if (hooks.on_epoch) hooks.on_epoch(er);
    if (has_val && stale >= config.patience) {
      result.early_stopped = true;
      break;
    }
    if (hooks.should_stop && hooks.should_stop(er)) {
      result.stopped_by_hook = true;
      break;
    }
  }
  if (has_val) {
    for (std::size_t i = 0; i < best.size(); ++i) model.params().assign(i, best[i].value);
  }
  return result;
}

void write_loss_trace(const std::vector<LossRecord>& trace, std::ostream& out) {
  out << "iteration,epoch,lr,loss\n";
  char buf[128];
  for (const LossRecord& r : trace) {
    std::snprintf(buf, sizeof buf, "%lld,%d,%.17g,%.17g\n",
                  static_cast<long long>(r.iteration), r.epoch, r.lr, r.loss);
    out << buf;
  }
}

}  // namespace mesoforge
