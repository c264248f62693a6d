#include <Eigen/Core>
#include <cmath>

#include "mesoforge/ops.hpp"
#include "mesoforge/parallel.hpp"

namespace mesoforge::ops {

namespace {

using ConstArray = Eigen::Map<const Eigen::ArrayXf>;

double plane_sum(const float* p, std::size_t n) {
  return ConstArray(p, static_cast<Eigen::Index>(n)).cast<double>().sum();
}

double plane_sq_dev(const float* p, std::size_t n, double mean) {
  return (ConstArray(p, static_cast<Eigen::Index>(n)).cast<double>() - mean)
      .square()
      .sum();
}

double plane_dot(const float* a, const float* b, std::size_t n) {
  const auto len = static_cast<Eigen::Index>(n);
  return (ConstArray(a, len).cast<double>() * ConstArray(b, len).cast<double>()).sum();
}

void check_state(const Shape& s, const BatchNormState& state) {
  const auto c = static_cast<std::size_t>(s.c);
  check_shape(state.gamma.size() == c && state.beta.size() == c &&
                  state.running_mean.size() == c &&
                  state.running_var.size() == c,
              "batchnorm state has " + std::to_string(state.gamma.size()) +
                  " channels, input has " + std::to_string(s.c));
}

}  // namespace

Tensor batchnorm(const Tensor& x, BatchNormState& state, Mode mode,
                 BatchNormSaved* saved) {
  const Shape& s = x.shape();
  check_state(s, state);
  const std::size_t plane = s.plane();
  const std::size_t count = static_cast<std::size_t>(s.n) * plane;
  if (mode == Mode::Train) {
    check_shape(count >= 2, "batchnorm Train mode needs batch*h*w >= 2 per "
                            "channel, got " + std::to_string(count));
  }

  Tensor y(s);
  Tensor x_hat;
  if (saved) x_hat = Tensor(s);
  std::vector<float> inv_std(s.c);

  parallel_for(static_cast<std::size_t>(s.c), [&](std::size_t ch) {
    double mean = 0.0;
    double var = 0.0;
    if (mode == Mode::Train) {
      for (int n = 0; n < s.n; ++n) {
        mean += plane_sum(x.ptr() + (static_cast<std::size_t>(n) * s.c + ch) * plane,
                          plane);
      }
      mean /= static_cast<double>(count);
      for (int n = 0; n < s.n; ++n) {
        var += plane_sq_dev(x.ptr() + (static_cast<std::size_t>(n) * s.c + ch) * plane,
                            plane, mean);
      }
      var /= static_cast<double>(count);
      const double m = state.momentum;
      const double unbiased = var * static_cast<double>(count) /
                              static_cast<double>(count - 1);
      state.running_mean[ch] =
          static_cast<float>(m * state.running_mean[ch] + (1.0 - m) * mean);
      state.running_var[ch] =
          static_cast<float>(m * state.running_var[ch] + (1.0 - m) * unbiased);
    } else {
      mean = state.running_mean[ch];
      var = state.running_var[ch];
    }
    const double istd = 1.0 / std::sqrt(var + state.epsilon);
    inv_std[ch] = static_cast<float>(istd);
    const float gamma = state.gamma[ch];
    const float beta = state.beta[ch];
    const auto mean_f = static_cast<float>(mean);
    const auto istd_f = static_cast<float>(istd);
    for (int n = 0; n < s.n; ++n) {
      const std::size_t base = (static_cast<std::size_t>(n) * s.c + ch) * plane;
      const float* p = x.ptr() + base;
      float* out = y.ptr() + base;
      float* xh = saved ? x_hat.ptr() + base : nullptr;
      for (std::size_t k = 0; k < plane; ++k) {
        const float v = (p[k] - mean_f) * istd_f;
        if (xh) xh[k] = v;
        out[k] = gamma * v + beta;
      }
    }
  });

  if (saved) {
    saved->mode = mode;
    saved->x_hat = std::move(x_hat);
    saved->inv_std = std::move(inv_std);
  }
  return y;
}

BatchNormGrads batchnorm_backward(const Tensor& grad_out,
                                  std::span<const float> gamma,
                                  const BatchNormSaved& saved) {
  const Shape& s = grad_out.shape();
  check_shape(saved.x_hat.shape() == s,
              "batchnorm backward: grad_out shape " + s.str() +
                  " != saved shape " + saved.x_hat.shape().str());
  check_shape(gamma.size() == static_cast<std::size_t>(s.c),
              "batchnorm backward: gamma length mismatch");
  const std::size_t plane = s.plane();
  const double count = static_cast<double>(s.n) * static_cast<double>(plane);

  BatchNormGrads grads{Tensor(s), std::vector<float>(s.c),
                       std::vector<float>(s.c)};

  parallel_for(static_cast<std::size_t>(s.c), [&](std::size_t ch) {
    double sum_g = 0.0;
    double sum_g_xhat = 0.0;
    for (int n = 0; n < s.n; ++n) {
      const std::size_t base = (static_cast<std::size_t>(n) * s.c + ch) * plane;
      sum_g += plane_sum(grad_out.ptr() + base, plane);
      sum_g_xhat += plane_dot(grad_out.ptr() + base, saved.x_hat.ptr() + base, plane);
    }
    grads.grad_beta[ch] = static_cast<float>(sum_g);
    grads.grad_gamma[ch] = static_cast<float>(sum_g_xhat);

    const auto scale = static_cast<float>(static_cast<double>(gamma[ch]) * saved.inv_std[ch]);
    const auto mean_g = static_cast<float>(sum_g / count);
    const auto mean_g_xhat = static_cast<float>(sum_g_xhat / count);
    for (int n = 0; n < s.n; ++n) {
      const std::size_t base = (static_cast<std::size_t>(n) * s.c + ch) * plane;
      const float* g = grad_out.ptr() + base;
      const float* xh = saved.x_hat.ptr() + base;
      float* dx = grads.grad_x.ptr() + base;
      if (saved.mode == Mode::Train) {
        for (std::size_t k = 0; k < plane; ++k) {
          dx[k] = scale * (g[k] - mean_g - xh[k] * mean_g_xhat);
        }
      } else {
        for (std::size_t k = 0; k < plane; ++k) {
          dx[k] = scale * g[k];
        }
      }
    }
  });
  return grads;
}

}  // namespace mesoforge::ops
