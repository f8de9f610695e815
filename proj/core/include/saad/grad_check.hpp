#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "saad/tensor.hpp"

namespace saad {

struct GradCheckOptions {
  double eps = 1e-5;
  /// 0 checks every coordinate; otherwise a seeded random subset per input.
  int64_t max_coords_per_input = 0;
  uint64_t seed = 0;
  /// Skip coordinates whose +-eps probes land on different linear pieces of
  /// a kinked op (see ops::KinkTrace); the central difference is not a
  /// derivative estimate there.
  bool skip_kinks = true;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  int64_t coords_checked = 0;
  int64_t kinks_skipped = 0;
  bool finite = true;
  std::string error;  ///< set when a non-finite value was met
  size_t worst_input = 0;
  int64_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

using ScalarFn = std::function<Tensor(std::span<const Tensor>)>;

/// Compares reverse-mode gradients of `f` with central differences.
/// The error per coordinate is |a - n| / max(1, |a|, |n|). Inputs must be
/// leaves; they are perturbed in place and restored. Skipped kink
/// coordinates are counted but not checked.
GradCheckResult grad_check(const ScalarFn& f, std::vector<Tensor> inputs,
                           const GradCheckOptions& options = {});

}  // namespace saad
