#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mesoforge/param_store.hpp"

namespace mesoforge {

/// Staircase decay: max(floor, initial / divisor^floor(t / period)).
struct LrSchedule {
  double initial = 1e-3;
  double divisor = 10.0;
  std::int64_t period = 1000;
  double floor = 1e-6;

  double at(std::int64_t iteration) const;
};

inline double lr_at(const LrSchedule& schedule, std::int64_t iteration) {
  return schedule.at(iteration);
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  LrSchedule schedule;

  void validate() const;
};

/// First and second moments per parameter slot plus the step counter.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t t = 0;

  AdamState() = default;
  explicit AdamState(const ParamStore& params);
};

/// One bias-corrected ADAM update of every trainable parameter, using the
/// learning rate of the current step (schedule evaluated at state.t before
/// incrementing). Non-trainable parameters are left untouched. A non-finite
/// gradient aborts the step before any parameter changes.
void adam_step(ParamStore& params, const Gradients& grads, AdamState& state,
               const AdamConfig& config);

struct LossResult {
  double loss = 0.0;
  /// d(loss)/d(prediction), one entry per batch item.
  std::vector<float> grad;
};

/// Mean over the batch of 0.5 * (a - y)^2.
LossResult mse_loss(std::span<const float> predictions,
                    std::span<const float> targets);

}  // namespace mesoforge
