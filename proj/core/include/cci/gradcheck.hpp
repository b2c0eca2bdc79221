#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "cci/tensor.hpp"

/// Central finite-difference checks of every analytic backward pass.
///
/// Each check evaluates L = sum(r * y) in 64-bit accumulation for a fixed
/// random r, perturbs sampled elements by +-step, and compares the numeric
/// slopes with the analytic gradient of L. Over all sampled elements of all
/// tensors of a case, the error is
/// max |analytic - numeric| / max(|analytic|_inf, |numeric|_inf, floor).
namespace cci::gradcheck {

inline constexpr double kStep = 1e-3;
inline constexpr double kTolerance = 1e-3;
inline constexpr double kFloor = 1e-5;

struct Entry {
  std::string module;  // tensor-core, carafe, cgd, irmb
  std::string name;
  double max_rel_error = 0.0;
  double epsilon = kStep;
  std::vector<std::string> shapes;  // one per config
  bool passed = false;
};

struct Report {
  std::vector<Entry> entries;
  [[nodiscard]] bool passed() const;
  /// One line per entry plus a summary line; stable for a fixed seed.
  [[nodiscard]] std::string format() const;
};

/// A differentiable function of some tensors.
struct Case {
  std::function<Tensor()> forward;
  /// Tensors to perturb, with a label used in error output.
  std::vector<std::pair<std::string, Tensor*>> wrt;
  /// Analytic gradients of sum(r * forward()) w.r.t. `wrt`, in order.
  std::function<std::vector<Tensor>(const Tensor& r)> backward;
  std::string shape;
};

/// Normwise error over the case's tensors. At most `samples` elements
/// per tensor are perturbed (all of them when the tensor is smaller).
double check_case(const Case& c, Rng& rng, int samples = 24, double step = kStep);

/// Runs the suite. `filter` keeps entries whose module or name equals it
/// (empty keeps everything); an unknown filter throws ConfigError.
Report run(std::uint64_t seed, std::string_view filter = {});

}  // namespace cci::gradcheck
