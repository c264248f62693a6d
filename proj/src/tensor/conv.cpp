#include <Eigen/Core>
#include <algorithm>
#include <cstring>

#include "mesoforge/ops.hpp"
#include "mesoforge/parallel.hpp"

namespace mesoforge::ops {

namespace {

using RowMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

struct Plan {
  int in_c, in_h, in_w;
  int out_c, out_h, out_w;
  int kh, kw, sh, sw, dh, dw;
  int pad_top, pad_left;

  int rows() const { return in_c * kh * kw; }
  int cols() const { return out_h * out_w; }
  /// 1x1, stride 1, no padding: the input plane is already the column matrix.
  bool pointwise() const {
    return kh == 1 && kw == 1 && sh == 1 && sw == 1 && pad_top == 0 &&
           pad_left == 0;
  }
};

Plan make_plan(const Shape& in, const ConvSpec& spec) {
  const ConvGeometry g = conv_geometry(in, spec);
  return Plan{in.c,          in.h,          in.w,          spec.out_channels,
              g.out_h,       g.out_w,       spec.kernel.h, spec.kernel.w,
              spec.stride.h, spec.stride.w, spec.dilation.h, spec.dilation.w,
              g.pad_top,     g.pad_left};
}

void im2col(const float* x, const Plan& p, float* col) {
  const int n_cols = p.cols();
  for (int ci = 0; ci < p.in_c; ++ci) {
    const float* plane = x + static_cast<std::size_t>(ci) * p.in_h * p.in_w;
    for (int ki = 0; ki < p.kh; ++ki) {
      for (int kj = 0; kj < p.kw; ++kj) {
        float* row =
            col + static_cast<std::size_t>((ci * p.kh + ki) * p.kw + kj) *
                      n_cols;
        const int x_off = kj * p.dw - p.pad_left;
        for (int oy = 0; oy < p.out_h; ++oy) {
          float* dst = row + static_cast<std::size_t>(oy) * p.out_w;
          const int iy = oy * p.sh - p.pad_top + ki * p.dh;
          if (iy < 0 || iy >= p.in_h) {
            std::fill(dst, dst + p.out_w, 0.0f);
            continue;
          }
          const float* src = plane + static_cast<std::size_t>(iy) * p.in_w;
          if (p.sw == 1) {
            // Valid ox range: 0 <= ox + x_off < in_w.
            const int lo = std::clamp(-x_off, 0, p.out_w);
            const int hi = std::clamp(p.in_w - x_off, lo, p.out_w);
            std::fill(dst, dst + lo, 0.0f);
            std::memcpy(dst + lo, src + lo + x_off,
                        sizeof(float) * static_cast<std::size_t>(hi - lo));
            std::fill(dst + hi, dst + p.out_w, 0.0f);
          } else {
            for (int ox = 0; ox < p.out_w; ++ox) {
              const int ix = ox * p.sw + x_off;
              dst[ox] = (ix >= 0 && ix < p.in_w) ? src[ix] : 0.0f;
            }
          }
        }
      }
    }
  }
}

/// Scatter-adds a column matrix back onto an input-shaped buffer.
void col2im(const float* col, const Plan& p, float* x) {
  const int n_cols = p.cols();
  for (int ci = 0; ci < p.in_c; ++ci) {
    float* plane = x + static_cast<std::size_t>(ci) * p.in_h * p.in_w;
    for (int ki = 0; ki < p.kh; ++ki) {
      for (int kj = 0; kj < p.kw; ++kj) {
        const float* row =
            col + static_cast<std::size_t>((ci * p.kh + ki) * p.kw + kj) *
                      n_cols;
        const int x_off = kj * p.dw - p.pad_left;
        for (int oy = 0; oy < p.out_h; ++oy) {
          const int iy = oy * p.sh - p.pad_top + ki * p.dh;
          if (iy < 0 || iy >= p.in_h) continue;
          const float* src = row + static_cast<std::size_t>(oy) * p.out_w;
          float* dst = plane + static_cast<std::size_t>(iy) * p.in_w;
          if (p.sw == 1) {
            const int lo = std::clamp(-x_off, 0, p.out_w);
            const int hi = std::clamp(p.in_w - x_off, lo, p.out_w);
            for (int ox = lo; ox < hi; ++ox) dst[ox + x_off] += src[ox];
          } else {
            for (int ox = 0; ox < p.out_w; ++ox) {
              const int ix = ox * p.sw + x_off;
              if (ix >= 0 && ix < p.in_w) dst[ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

std::vector<float>& scratch(std::size_t n) {
  thread_local std::vector<float> buffer;
  if (buffer.size() < n) buffer.resize(n);
  return buffer;
}

}  // namespace

ConvGeometry conv_geometry(const Shape& input, const ConvSpec& spec) {
  check_shape(spec.kernel.h >= 1 && spec.kernel.w >= 1, "kernel must be >= 1");
  check_shape(spec.stride.h >= 1 && spec.stride.w >= 1, "stride must be >= 1");
  check_shape(spec.dilation.h >= 1 && spec.dilation.w >= 1,
              "dilation must be >= 1");
  const Extent2 eff = spec.effective_kernel();
  ConvGeometry g;
  if (spec.padding == Padding::Same) {
    g.out_h = (input.h + spec.stride.h - 1) / spec.stride.h;
    g.out_w = (input.w + spec.stride.w - 1) / spec.stride.w;
    const int pad_h =
        std::max((g.out_h - 1) * spec.stride.h + eff.h - input.h, 0);
    const int pad_w =
        std::max((g.out_w - 1) * spec.stride.w + eff.w - input.w, 0);
    g.pad_top = pad_h / 2;
    g.pad_left = pad_w / 2;
  } else {
    check_shape(input.h >= eff.h,
                "valid convolution: input height " + std::to_string(input.h) +
                    " smaller than effective kernel height " +
                    std::to_string(eff.h));
    check_shape(input.w >= eff.w,
                "valid convolution: input width " + std::to_string(input.w) +
                    " smaller than effective kernel width " +
                    std::to_string(eff.w));
    g.out_h = (input.h - eff.h) / spec.stride.h + 1;
    g.out_w = (input.w - eff.w) / spec.stride.w + 1;
  }
  return g;
}

void validate_conv(const Shape& input, const Tensor& weights,
                   std::span<const float> bias, const ConvSpec& spec) {
  const Shape& ws = weights.shape();
  check_shape(ws.n == spec.out_channels,
              "conv weights out_channels " + std::to_string(ws.n) +
                  " != spec out_channels " +
                  std::to_string(spec.out_channels));
  check_shape(ws.c == input.c, "conv input channels " +
                                   std::to_string(input.c) +
                                   " != weight in_channels " +
                                   std::to_string(ws.c));
  check_shape(ws.h == spec.kernel.h && ws.w == spec.kernel.w,
              "conv weight kernel " + std::to_string(ws.h) + "x" +
                  std::to_string(ws.w) + " != spec kernel " +
                  std::to_string(spec.kernel.h) + "x" +
                  std::to_string(spec.kernel.w));
  if (spec.has_bias) {
    check_shape(bias.size() == static_cast<std::size_t>(spec.out_channels),
                "conv bias length " + std::to_string(bias.size()) +
                    " != out_channels " + std::to_string(spec.out_channels));
  } else {
    check_shape(bias.empty(), "conv bias given but spec has_bias is false");
  }
}

Tensor conv2d(const Tensor& x, const Tensor& weights,
              std::span<const float> bias, const ConvSpec& spec) {
  validate_conv(x.shape(), weights, bias, spec);
  const Plan p = make_plan(x.shape(), spec);
  Tensor out(Shape{x.shape().n, p.out_c, p.out_h, p.out_w});
  const ConstMatrixMap w(weights.ptr(), p.out_c, p.rows());

  parallel_for(static_cast<std::size_t>(x.shape().n), [&](std::size_t n) {
    const float* xin = x.item(static_cast<int>(n)).data();
    const float* col_ptr = xin;
    if (!p.pointwise()) {
      auto& buf = scratch(static_cast<std::size_t>(p.rows()) * p.cols());
      im2col(xin, p, buf.data());
      col_ptr = buf.data();
    }
    const ConstMatrixMap col(col_ptr, p.rows(), p.cols());
    MatrixMap y(out.item(static_cast<int>(n)).data(), p.out_c, p.cols());
    y.noalias() = w * col;
    if (spec.has_bias) {
      for (int o = 0; o < p.out_c; ++o) y.row(o).array() += bias[o];
    }
  });
  return out;
}

Tensor conv2d_direct(const Tensor& x, const Tensor& weights,
                     std::span<const float> bias, const ConvSpec& spec) {
  validate_conv(x.shape(), weights, bias, spec);
  const Plan p = make_plan(x.shape(), spec);
  Tensor out(Shape{x.shape().n, p.out_c, p.out_h, p.out_w});
  for (int n = 0; n < x.shape().n; ++n) {
    for (int o = 0; o < p.out_c; ++o) {
      for (int oy = 0; oy < p.out_h; ++oy) {
        for (int ox = 0; ox < p.out_w; ++ox) {
          double acc = spec.has_bias ? bias[o] : 0.0;
          for (int ci = 0; ci < p.in_c; ++ci) {
            for (int ki = 0; ki < p.kh; ++ki) {
              const int iy = oy * p.sh - p.pad_top + ki * p.dh;
              if (iy < 0 || iy >= p.in_h) continue;
              for (int kj = 0; kj < p.kw; ++kj) {
                const int ix = ox * p.sw - p.pad_left + kj * p.dw;
                if (ix < 0 || ix >= p.in_w) continue;
                acc += static_cast<double>(weights.at(o, ci, ki, kj)) *
                       x.at(n, ci, iy, ix);
              }
            }
          }
          out.at(n, o, oy, ox) = static_cast<float>(acc);
        }
      }
    }
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& x, const Tensor& weights,
                          const Tensor& grad_out, const ConvSpec& spec,
                          bool need_grad_x) {
  const std::vector<float> bias_shape(spec.has_bias ? spec.out_channels : 0);
  validate_conv(x.shape(), weights, bias_shape, spec);
  const Plan p = make_plan(x.shape(), spec);
  const Shape expected{x.shape().n, p.out_c, p.out_h, p.out_w};
  check_shape(grad_out.shape() == expected,
              "conv grad_out shape " + grad_out.shape().str() +
                  " != forward output shape " + expected.str());

  const int batch = x.shape().n;
  const std::size_t w_size = weights.size();
  // Per-item partial weight gradients, reduced in item order below.
  std::vector<float> partial_w(static_cast<std::size_t>(batch) * w_size);
  std::vector<double> partial_b(static_cast<std::size_t>(batch) * p.out_c);

  ConvGrads grads;
  if (need_grad_x) grads.grad_x = Tensor(x.shape());
  const ConstMatrixMap w(weights.ptr(), p.out_c, p.rows());

  parallel_for(static_cast<std::size_t>(batch), [&](std::size_t n) {
    const int item = static_cast<int>(n);
    const float* xin = x.item(item).data();
    const ConstMatrixMap g(grad_out.item(item).data(), p.out_c, p.cols());
    const std::size_t col_size = static_cast<std::size_t>(p.rows()) * p.cols();

    const float* col_ptr = xin;
    std::vector<float>& buf = scratch(col_size);
    if (!p.pointwise()) {
      im2col(xin, p, buf.data());
      col_ptr = buf.data();
    }
    const ConstMatrixMap col(col_ptr, p.rows(), p.cols());
    MatrixMap gw(partial_w.data() + n * w_size, p.out_c, p.rows());
    gw.noalias() = g * col.transpose();

    for (int o = 0; o < p.out_c; ++o) {
      double s = 0.0;
      const float* row = g.data() + static_cast<std::size_t>(o) * p.cols();
      for (int k = 0; k < p.cols(); ++k) s += row[k];
      partial_b[n * p.out_c + o] = s;
    }

    if (need_grad_x) {
      float* gx = grads.grad_x.item(item).data();
      if (p.pointwise()) {
        MatrixMap gx_map(gx, p.rows(), p.cols());
        gx_map.noalias() = w.transpose() * g;
      } else {
        MatrixMap gcol(buf.data(), p.rows(), p.cols());
        gcol.noalias() = w.transpose() * g;
        col2im(buf.data(), p, gx);
      }
    }
  });

  grads.grad_weights = Tensor(weights.shape());
  float* gw = grads.grad_weights.ptr();
  for (int n = 0; n < batch; ++n) {
    const float* src = partial_w.data() + static_cast<std::size_t>(n) * w_size;
    for (std::size_t k = 0; k < w_size; ++k) gw[k] += src[k];
  }
  if (spec.has_bias) {
    grads.grad_bias.assign(p.out_c, 0.0f);
    for (int o = 0; o < p.out_c; ++o) {
      double s = 0.0;
      for (int n = 0; n < batch; ++n) s += partial_b[n * p.out_c + o];
      grads.grad_bias[o] = static_cast<float>(s);
    }
  }
  return grads;
}

}  // namespace mesoforge::ops
