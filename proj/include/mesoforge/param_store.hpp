#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mesoforge/tensor.hpp"

namespace mesoforge {

struct Param {
  std::string name;
  Tensor value;
  bool trainable = true;
};

/// Flat, insertion-ordered store of named parameters. Names are unique and
/// shapes are fixed once added; values change only through `values()` or a
/// shape-checked `assign()`.
class ParamStore {
 public:
  std::size_t add(std::string name, Tensor value, bool trainable);

  std::size_t size() const { return entries_.size(); }
  const Param& operator[](std::size_t i) const { return entries_[i]; }
  const Tensor& value(std::size_t i) const { return entries_[i].value; }
  std::span<float> values(std::size_t i) { return entries_[i].value.data(); }

  void assign(std::size_t i, const Tensor& value);

  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;

  std::int64_t trainable_count() const;
  std::int64_t non_trainable_count() const;

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::vector<Param> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// One gradient tensor per parameter slot, shaped like the parameter.
class Gradients {
 public:
  explicit Gradients(const ParamStore& params);

  Tensor& operator[](std::size_t i) { return tensors_[i]; }
  const Tensor& operator[](std::size_t i) const { return tensors_[i]; }
  std::size_t size() const { return tensors_.size(); }

  void accumulate(std::size_t slot, std::span<const float> grad);
  void zero();

 private:
  std::vector<Tensor> tensors_;
};

}  // namespace mesoforge
