#include "mesoforge/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mesoforge {

double LrSchedule::at(std::int64_t iteration) const {
  if (iteration < 0) throw std::invalid_argument("lr_at: negative iteration");
  if (period <= 0) throw std::invalid_argument("lr_at: period must be positive");
  const double steps = static_cast<double>(iteration / period);
  return std::max(floor, initial / std::pow(divisor, steps));
}

void AdamConfig::validate() const {
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("ADAM betas must lie in (0, 1)");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("ADAM epsilon must be positive");
  if (!(schedule.initial > 0.0) || !(schedule.floor > 0.0) ||
      !(schedule.divisor >= 1.0) || schedule.period <= 0) {
    throw std::invalid_argument("invalid learning-rate schedule");
  }
}

AdamState::AdamState(const ParamStore& params) {
  m.reserve(params.size());
  v.reserve(params.size());
  for (const Param& p : params) {
    m.emplace_back(p.value.size(), 0.0);
    v.emplace_back(p.value.size(), 0.0);
  }
}

void adam_step(ParamStore& params, const Gradients& grads, AdamState& state,
               const AdamConfig& config) {
  if (grads.size() != params.size()) {
    throw ShapeError("adam_step: " + std::to_string(grads.size()) +
                     " gradient tensors for " + std::to_string(params.size()) +
                     " parameters");
  }
  if (state.m.empty() && params.size() > 0) state = AdamState(params);
  if (state.m.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state does not match parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) continue;
    if (!(grads[i].shape() == params[i].value.shape())) {
      throw ShapeError("adam_step: gradient for '" + params[i].name + "' has shape " +
                       grads[i].shape().str() + ", parameter has " +
                       params[i].value.shape().str());
    }
    if (!grads[i].all_finite()) {
      throw NumericalError("adam_step: non-finite gradient for parameter '" +
                           params[i].name + "'");
    }
  }

  const double lr = config.schedule.at(state.t);
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) continue;
    std::span<float> w = params.values(i);
    const std::span<const float> g = grads[i].data();
    std::vector<double>& m = state.m[i];
    std::vector<double>& v = state.v[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k];
      m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * gk;
      v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * gk * gk;
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      w[k] = static_cast<float>(w[k] - lr * m_hat / (std::sqrt(v_hat) + config.epsilon));
    }
  }
}

LossResult mse_loss(std::span<const float> predictions,
                    std::span<const float> targets) {
  if (predictions.empty()) throw std::invalid_argument("mse_loss: empty batch");
  if (predictions.size() != targets.size()) {
    throw ShapeError("mse_loss: " + std::to_string(predictions.size()) +
                     " predictions for " + std::to_string(targets.size()) +
                     " targets");
  }
  const double n = static_cast<double>(predictions.size());
  LossResult result;
  result.grad.resize(predictions.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double diff = static_cast<double>(predictions[i]) - targets[i];
    sum += 0.5 * diff * diff;
    result.grad[i] = static_cast<float>(diff / n);
  }
  result.loss = sum / n;
  return result;
}

}  // namespace mesoforge
