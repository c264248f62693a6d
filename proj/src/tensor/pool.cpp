#include "mesoforge/ops.hpp"
#include "mesoforge/parallel.hpp"

namespace mesoforge::ops {

PoolResult maxpool2d(const Tensor& x, const PoolSpec& spec) {
  const Shape& in = x.shape();
  const Extent2 win = spec.window;
  const Extent2 stride = spec.effective_stride();
  check_shape(win.h >= 1 && win.w >= 1, "pool window must be >= 1");
  check_shape(in.h >= win.h && (in.h - win.h) % stride.h == 0,
              "maxpool: input height " + std::to_string(in.h) +
                  " not divisible by window/stride " +
                  std::to_string(win.h) + "/" + std::to_string(stride.h));
  check_shape(in.w >= win.w && (in.w - win.w) % stride.w == 0,
              "maxpool: input width " + std::to_string(in.w) +
                  " not divisible by window/stride " +
                  std::to_string(win.w) + "/" + std::to_string(stride.w));

  const Shape out_shape{in.n, in.c, (in.h - win.h) / stride.h + 1,
                        (in.w - win.w) / stride.w + 1};
  PoolResult result{Tensor(out_shape), std::vector<std::uint32_t>(out_shape.numel())};

  parallel_for(static_cast<std::size_t>(in.n) * in.c, [&](std::size_t nc) {
    const std::size_t in_base = nc * in.plane();
    const std::size_t out_base = nc * out_shape.plane();
    const float* src = x.ptr() + in_base;
    for (int oy = 0; oy < out_shape.h; ++oy) {
      for (int ox = 0; ox < out_shape.w; ++ox) {
        const int y0 = oy * stride.h;
        const int x0 = ox * stride.w;
        std::size_t best = static_cast<std::size_t>(y0) * in.w + x0;
        float best_v = src[best];
        for (int ky = 0; ky < win.h; ++ky) {
          const std::size_t row = static_cast<std::size_t>(y0 + ky) * in.w;
          for (int kx = 0; kx < win.w; ++kx) {
            const std::size_t idx = row + x0 + kx;
            // Strict comparison keeps the first maximum.
            if (src[idx] > best_v) {
              best_v = src[idx];
              best = idx;
            }
          }
        }
        const std::size_t o = out_base + static_cast<std::size_t>(oy) * out_shape.w + ox;
        result.out[o] = best_v;
        result.argmax[o] = static_cast<std::uint32_t>(in_base + best);
      }
    }
  });
  return result;
}

Tensor maxpool2d_backward(const Shape& input_shape,
                          std::span<const std::uint32_t> argmax,
                          const Tensor& grad_out) {
  check_shape(argmax.size() == grad_out.size(),
              "maxpool backward: grad_out has " +
                  std::to_string(grad_out.size()) + " elements, argmax has " +
                  std::to_string(argmax.size()));
  Tensor grad_x(input_shape);
  float* dst = grad_x.ptr();
  const float* g = grad_out.ptr();
  for (std::size_t i = 0; i < argmax.size(); ++i) dst[argmax[i]] += g[i];
  return grad_x;
}

}  // namespace mesoforge::ops
