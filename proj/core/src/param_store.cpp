#include "cci/param_store.hpp"

#include "cci/error.hpp"

namespace cci {

void ParamStore::add(const std::string& name, Tensor& value, Tensor* grad) {
  if (grad != nullptr && grad->shape() != value.shape()) {
    throw ConfigError("parameter " + name + ": gradient shape " + grad->shape().str() +
                      " differs from value shape " + value.shape().str());
  }
  if (!entries_.emplace(name, ParamEntry{&value, grad}).second) {
    throw ConfigError("duplicate parameter name " + name);
  }
}

const ParamEntry& ParamStore::at(const std::string& name) const {
  const auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter " + name);
  return it->second;
}

std::int64_t ParamStore::trainable_count() const {
  std::int64_t total = 0;
  for (const auto& [name, e] : entries_) {
    if (e.trainable()) total += static_cast<std::int64_t>(e.value->numel());
  }
  return total;
}

void ParamStore::zero_grad() {
  for (auto& [name, e] : entries_) {
    if (e.trainable()) e.grad->fill(0.0f);
  }
}

void ParamStore::sgd_step(float lr) {
  for (auto& [name, e] : entries_) {
    if (!e.trainable()) continue;
    auto v = e.value->data();
    auto g = e.grad->data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
  }
}

}  // namespace cci
