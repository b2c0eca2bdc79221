#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "cci/tensor.hpp"

namespace cci {

/// One named slot: the value and, for trainable parameters, its gradient
/// accumulator. Buffers (batch-norm running statistics) have no gradient.
struct ParamEntry {
  Tensor* value = nullptr;
  Tensor* grad = nullptr;

  [[nodiscard]] bool trainable() const { return grad != nullptr; }
};

/// Dotted-path index over tensors owned by network layers. Iteration order is
/// lexicographic by name, which fixes the order of persistence and updates.
class ParamStore {
 public:
  /// Registers a slot. Throws ConfigError on a duplicate name or when the
  /// gradient shape differs from the value shape.
  void add(const std::string& name, Tensor& value, Tensor* grad);

  [[nodiscard]] const std::map<std::string, ParamEntry>& entries() const { return entries_; }
  [[nodiscard]] bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  [[nodiscard]] const ParamEntry& at(const std::string& name) const;
  [[nodiscard]] std::size_t size() const { return entries_.size(); }

  /// Total scalar count of trainable parameters.
  [[nodiscard]] std::int64_t trainable_count() const;

  void zero_grad();
  /// value -= lr * grad for every trainable entry.
  void sgd_step(float lr);

 private:
  std::map<std::string, ParamEntry> entries_;
};

/// Registers every field of a module parameter struct under `prefix`. `P`
/// exposes `visit(f)` calling f(name, Tensor&, trainable) for each field;
/// `grads` has the same layout and is (re)allocated to zeros.
template <class P>
void register_params(ParamStore& store, const std::string& prefix, P& params, P& grads) {
  std::vector<std::tuple<std::string, Tensor*, bool>> values;
  std::vector<Tensor*> slots;
  params.visit([&](std::string_view name, Tensor& t, bool trainable) {
    values.emplace_back(std::string(name), &t, trainable);
  });
  grads.visit([&](std::string_view, Tensor& t, bool) { slots.push_back(&t); });
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto& [name, value, trainable] = values[i];
    Tensor* grad = nullptr;
    if (trainable) {
      *slots[i] = Tensor::zeros(value->shape());
      grad = slots[i];
    }
    store.add(prefix.empty() ? name : prefix + "." + name, *value, grad);
  }
}

/// into += from over the trainable fields of a module parameter struct.
template <class P>
void accumulate_grads(P& into, P& from) {
  std::vector<Tensor*> dst;
  into.visit([&](std::string_view, Tensor& t, bool trainable) {
    dst.push_back(trainable ? &t : nullptr);
  });
  std::size_t i = 0;
  from.visit([&](std::string_view, Tensor& t, bool) {
    Tensor* d = dst[i++];
    if (d == nullptr || t.empty()) return;
    if (d->empty()) {
      *d = t;
    } else {
      d->add_(t);
    }
  });
}

/// Scalar count of trainable fields of a module parameter struct.
template <class P>
std::int64_t count_trainable(P& params) {
  std::int64_t total = 0;
  params.visit([&](std::string_view, Tensor& t, bool trainable) {
    if (trainable) total += static_cast<std::int64_t>(t.numel());
  });
  return total;
}

}  // namespace cci
