#include <Eigen/Core>

#include "mesoforge/ops.hpp"

namespace mesoforge::ops {

namespace {

using RowMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

void check_dense(const Shape& x, const Tensor& weights) {
  const Shape& ws = weights.shape();
  check_shape(ws.n == 1 && ws.c == 1,
              "dense weights must be shaped (1,1,in,out), got " + ws.str());
  check_shape(x.item() == static_cast<std::size_t>(ws.h),
              "dense input width " + std::to_string(x.item()) +
                  " != weight rows " + std::to_string(ws.h));
}

}  // namespace

Tensor dense(const Tensor& x, const Tensor& weights,
             std::span<const float> bias) {
  check_dense(x.shape(), weights);
  const int rows = x.shape().n;
  const int in = weights.shape().h;
  const int out = weights.shape().w;
  check_shape(bias.size() == static_cast<std::size_t>(out),
              "dense bias length " + std::to_string(bias.size()) +
                  " != output width " + std::to_string(out));
  Tensor y(Shape{rows, out, 1, 1});
  // Row by row so that an item's result never depends on its batch mates.
  const ConstMatrixMap w(weights.ptr(), in, out);
  for (int r = 0; r < rows; ++r) {
    const ConstMatrixMap xr(x.item(r).data(), 1, in);
    MatrixMap yr(y.item(r).data(), 1, out);
    yr.noalias() = xr * w;
    for (int o = 0; o < out; ++o) yr(0, o) += bias[o];
  }
  return y;
}

DenseGrads dense_backward(const Tensor& x, const Tensor& weights,
                          const Tensor& grad_out) {
  check_dense(x.shape(), weights);
  const int rows = x.shape().n;
  const int in = weights.shape().h;
  const int out = weights.shape().w;
  check_shape(grad_out.shape() == Shape{rows, out, 1, 1},
              "dense grad_out shape " + grad_out.shape().str() +
                  " != (" + std::to_string(rows) + "," + std::to_string(out) +
                  ",1,1)");
  DenseGrads grads{Tensor(x.shape()), Tensor(weights.shape()),
                   std::vector<float>(out)};
  const ConstMatrixMap xm(x.ptr(), rows, in);
  const ConstMatrixMap g(grad_out.ptr(), rows, out);
  const ConstMatrixMap w(weights.ptr(), in, out);
  MatrixMap gx(grads.grad_x.ptr(), rows, in);
  MatrixMap gw(grads.grad_weights.ptr(), in, out);
  gx.noalias() = g * w.transpose();
  gw.noalias() = xm.transpose() * g;
  for (int o = 0; o < out; ++o) {
    double s = 0.0;
    for (int r = 0; r < rows; ++r) s += g(r, o);
    grads.grad_bias[o] = static_cast<float>(s);
  }
  return grads;
}

}  // namespace mesoforge::ops
