#include "saad/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "saad/ops.hpp"
#include "saad/rng.hpp"

namespace saad {

namespace {

std::vector<int64_t> pick_coords(int64_t n, int64_t limit, Rng& rng) {
  std::vector<int64_t> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  if (limit <= 0 || limit >= n) return idx;
  // Partial Fisher-Yates.
  for (int64_t i = 0; i < limit; ++i) {
    const int64_t j = rng.uniform_int(i, n - 1);
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
  idx.resize(static_cast<size_t>(limit));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& f, std::vector<Tensor> inputs,
                           const GradCheckOptions& options) {
  GradCheckResult result;
  for (auto& in : inputs) {
    if (!in.is_leaf()) throw std::invalid_argument("grad_check inputs must be leaves");
    in.set_requires_grad(true);
  }

  std::vector<Tensor> analytic;
  try {
    GradModeGuard on(true);
    Tensor root = f(inputs);
    analytic = grad(root, inputs);
  } catch (const NonFiniteError& e) {
    result.finite = false;
    result.error = e.what();
    return result;
  }

  Rng rng(options.seed);
  NoGradGuard off;
  for (size_t k = 0; k < inputs.size(); ++k) {
    auto values = inputs[k].mutable_data();
    const auto a = analytic[k].data();
    for (int64_t i : pick_coords(inputs[k].numel(), options.max_coords_per_input, rng)) {
      const auto u = static_cast<size_t>(i);
      const double saved = values[u];
      double plus = 0.0, minus = 0.0;
      bool kink = false;
      try {
        ops::KinkTrace tp;
        values[u] = saved + options.eps;
        plus = f(inputs).item();
        ops::KinkTrace tm;
        values[u] = saved - options.eps;
        minus = f(inputs).item();
        kink = tp.signature() != tm.signature();
      } catch (const NonFiniteError& e) {
        values[u] = saved;
        result.finite = false;
        result.error = e.what();
        return result;
      }
      values[u] = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus) || !std::isfinite(a[u])) {
        result.finite = false;
        result.error = "non-finite value during central difference";
        return result;
      }
      if (kink && options.skip_kinks) {
        ++result.kinks_skipped;
        continue;
      }
      const double numeric = (plus - minus) / (2.0 * options.eps);
      const double err =
          std::abs(a[u] - numeric) / std::max({1.0, std::abs(a[u]), std::abs(numeric)});
      ++result.coords_checked;
      if (err > result.max_rel_error || result.coords_checked == 1) {
        result.max_rel_error = std::max(result.max_rel_error, err);
        result.worst_input = k;
        result.worst_index = i;
        result.worst_analytic = a[u];
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace saad
