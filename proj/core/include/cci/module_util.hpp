#pragma once

#include <string>
#include <string_view>

#include "cci/ops.hpp"

namespace cci {

/// Visits a batch-norm block as {prefix}.weight / .bias (trainable) and
/// {prefix}.running_mean / .running_var (buffers).
template <class F>
void visit_batch_norm(std::string_view prefix, BatchNormParams& bn, F&& f) {
  const std::string p(prefix);
  f(p + ".weight", bn.gamma, true);
  f(p + ".bias", bn.beta, true);
  f(p + ".running_mean", bn.running_mean, false);
  f(p + ".running_var", bn.running_var, false);
}

/// Gradient container for a batch-norm block (running statistics left empty).
inline BatchNormParams batch_norm_grads(const BatchNormGrads& g) {
  return {g.gamma, g.beta, {}, {}};
}

/// Multiply-accumulates of a batched matrix product counted as 2 flops each.
inline std::int64_t flops_of(std::int64_t macs) { return 2 * macs; }

}  // namespace cci
