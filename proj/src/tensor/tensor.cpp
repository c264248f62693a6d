#include "mesoforge/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace mesoforge {

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
         std::to_string(h) + "," + std::to_string(w) + ")";
}

void check_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

namespace {
void validate(const Shape& s) {
  check_shape(s.n >= 1 && s.c >= 1 && s.h >= 1 && s.w >= 1,
              "tensor dimensions must be >= 1, got " + s.str());
}
}  // namespace

Tensor::Tensor(Shape shape, float fill) : shape_(shape) {
  validate(shape);
  data_.assign(shape.numel(), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> values)
    : shape_(shape), data_(std::move(values)) {
  validate(shape);
  check_shape(data_.size() == shape.numel(),
              "data length " + std::to_string(data_.size()) +
                  " does not match shape " + shape.str());
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(shape);
}

Tensor Tensor::reshaped(Shape shape) && {
  validate(shape);
  check_shape(shape.numel() == shape_.numel(),
              "cannot reshape " + shape_.str() + " to " + shape.str());
  shape_ = shape;
  return std::move(*this);
}

Tensor Tensor::slice_batch(int first, int count) const {
  check_shape(first >= 0 && count >= 1 && first + count <= shape_.n,
              "batch slice [" + std::to_string(first) + ", " +
                  std::to_string(first + count) + ") out of range for n=" +
                  std::to_string(shape_.n));
  Shape s = shape_;
  s.n = count;
  const auto begin = data_.begin() + first * shape_.item();
  return Tensor(s, std::vector<float>(begin, begin + count * shape_.item()));
}

void Tensor::fill(float value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](float v) { return std::isfinite(v); });
}

Tensor stack_batch(std::span<const Tensor> items) {
  check_shape(!items.empty(), "stack_batch needs at least one tensor");
  Shape s = items.front().shape();
  int total = 0;
  for (const Tensor& t : items) {
    const Shape& ts = t.shape();
    check_shape(ts.c == s.c && ts.h == s.h && ts.w == s.w,
                "stack_batch: item shape " + ts.str() + " differs from " +
                    s.str());
    total += ts.n;
  }
  s.n = total;
  Tensor out(s);
  float* dst = out.ptr();
  for (const Tensor& t : items) {
    std::memcpy(dst, t.ptr(), t.size() * sizeof(float));
    dst += t.size();
  }
  return out;
}

}  // namespace mesoforge
