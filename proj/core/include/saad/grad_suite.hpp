#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace saad {

struct GradSuiteOptions {
  uint64_t seed = 1234;
  double eps = 1e-5;
  /// Coordinates sampled per parameter tensor in the network composites.
  int64_t composite_coords = 12;
};

struct GradSuiteRow {
  std::string name;
  double max_rel_error = 0.0;
  int64_t coords = 0;
  /// Probed coordinates skipped because the probes straddled a kink.
  int64_t kinks = 0;
  bool finite = true;
  std::string error;
  double seconds = 0.0;
};

/// Finite-difference checks for every differentiable operator (three
/// random shapes each) and for the network composites at 1x3x16x16:
/// masked_mse through the generator, seg_bce through the discriminator,
/// the full generator loss, and the discriminator loss with its gradient
/// penalty. Runs in 64-bit precision.
std::vector<GradSuiteRow> run_grad_suite(const GradSuiteOptions& options = {});

/// A row passes when every checked coordinate is within `tolerance` and at
/// most kMaxKinkPercent of the probed coordinates were skipped as kinks.
inline constexpr int64_t kMaxKinkPercent = 5;
bool grad_row_passes(const GradSuiteRow& row, double tolerance);

/// Fixed-width table, one row per check, with a PASS/FAIL column against
/// `tolerance`.
std::string format_grad_table(const std::vector<GradSuiteRow>& rows, double tolerance);

}  // namespace saad
