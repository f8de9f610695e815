#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "saad/ops.hpp"
#include "saad/rng.hpp"
#include "saad/tensor.hpp"

namespace saad {

/// Ordered, uniquely named parameter tensors.
class ParamStore {
 public:
  using Entry = std::pair<std::string, Tensor>;

  /// Adds a leaf; it is marked as requiring a gradient.
  Tensor& add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);

  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  int64_t total_elements() const;
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

  void set_requires_grad(bool value);
  void clear_grads();
  std::vector<Tensor> tensors() const;

  /// Deep copy with fresh storage.
  ParamStore clone() const;
  bool bitwise_equal(const ParamStore& other) const;

 private:
  std::vector<Entry> entries_;
};

/// Freezes a store for the lifetime of the guard.
class FreezeGuard {
 public:
  explicit FreezeGuard(ParamStore& store) : store_(store) { store_.set_requires_grad(false); }
  ~FreezeGuard() { store_.set_requires_grad(true); }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  ParamStore& store_;
};

struct InitSpec {
  uint64_t seed = 0;
};

/// Kaiming-uniform bound sqrt(6 / fan_in).
double kaiming_uniform_bound(int64_t fan_in);

/// Appends "<name>.weight" (uniform in +-bound) and "<name>.bias" (zeros)
/// for a [cout, cin, k, k] convolution.
void add_conv_params(ParamStore& store, const std::string& name, int64_t cin, int64_t cout,
                     int64_t kernel, Rng& rng);

int64_t conv_param_count(int64_t cin, int64_t cout, int64_t kernel);

/// conv2d with the "<name>.weight"/"<name>.bias" pair from `store`.
Tensor apply_conv(const ParamStore& store, const std::string& name, const Tensor& x,
                  const ops::Conv2dParams& p = {});

class MissingGradientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t step = 0;
  ParamStore first_moment;
  ParamStore second_moment;

  bool bitwise_equal(const AdamState& other) const;
};

/// Zero moments mirroring `params`.
AdamState make_adam_state(const ParamStore& params);

/// Bias-corrected Adam update of every parameter; gradients are cleared
/// afterwards. Throws MissingGradientError naming the first parameter
/// without a gradient.
void adam_step(ParamStore& params, AdamState& state, double lr);

}  // namespace saad
