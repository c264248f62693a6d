#include "mesoforge/param_store.hpp"

#include <algorithm>

namespace mesoforge {

std::size_t ParamStore::add(std::string name, Tensor value, bool trainable) {
  if (index_.contains(name)) {
    throw std::invalid_argument("duplicate parameter name '" + name + "'");
  }
  const std::size_t slot = entries_.size();
  index_.emplace(name, slot);
  entries_.push_back(Param{std::move(name), std::move(value), trainable});
  return slot;
}

void ParamStore::assign(std::size_t i, const Tensor& value) {
  Param& p = entries_.at(i);
  check_shape(p.value.shape() == value.shape(),
              "parameter '" + p.name + "' has shape " + p.value.shape().str() +
                  ", cannot assign " + value.shape().str());
  p.value = value;
}

std::optional<std::size_t> ParamStore::find(std::string_view name) const {
  const auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t ParamStore::index_of(std::string_view name) const {
  if (auto slot = find(name)) return *slot;
  throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

std::int64_t ParamStore::trainable_count() const {
  std::int64_t total = 0;
  for (const Param& p : entries_) {
    if (p.trainable) total += static_cast<std::int64_t>(p.value.size());
  }
  return total;
}

std::int64_t ParamStore::non_trainable_count() const {
  std::int64_t total = 0;
  for (const Param& p : entries_) {
    if (!p.trainable) total += static_cast<std::int64_t>(p.value.size());
  }
  return total;
}

Gradients::Gradients(const ParamStore& params) {
  tensors_.reserve(params.size());
  for (const Param& p : params) tensors_.emplace_back(p.value.shape());
}

void Gradients::accumulate(std::size_t slot, std::span<const float> grad) {
  Tensor& t = tensors_.at(slot);
  check_shape(grad.size() == t.size(), "gradient size mismatch for slot " +
                                           std::to_string(slot));
  for (std::size_t k = 0; k < grad.size(); ++k) t[k] += grad[k];
}

void Gradients::zero() {
  for (Tensor& t : tensors_) t.fill(0.0f);
}

}  // namespace mesoforge
