#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace saad {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an operator would produce a non-positive output extent.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TensorImpl;
struct Node;

/// Dense row-major tensor of doubles with optional gradient tracking.
///
/// A Tensor is a cheap handle; copies share storage. Values produced by an
/// operator are immutable. Only leaves (tensors without a recorded producer)
/// may be written through mutable_data().
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor from_data(Shape shape, std::vector<double> data);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int64_t dim(int axis) const;
  int rank() const;
  int64_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  /// Element access for rank-4 tensors.
  double at(int64_t n, int64_t c, int64_t h, int64_t w) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);
  bool is_leaf() const;
  const Node* grad_fn() const;

  /// Accumulated gradient; undefined until a backward pass reaches this leaf.
  Tensor grad() const;
  void set_grad(Tensor g);
  void clear_grad();

  /// Shares storage, drops the producer and gradient flag.
  Tensor detach() const;
  /// Deep copy of the values as a new leaf.
  Tensor clone() const;
  Tensor reshape(Shape shape) const;

  bool all_finite() const;
  bool bitwise_equal(const Tensor& other) const;

  const TensorImpl* impl() const { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;

  friend struct detail_access;
};

using BackwardFn =
    std::function<std::vector<Tensor>(const Tensor& grad_out, const std::vector<bool>& needs)>;

/// One recorded operator application.
struct Node {
  std::string_view kind;
  uint64_t seq = 0;
  std::vector<Tensor> inputs;
  BackwardFn backward;
};

struct TensorImpl {
  Shape shape;
  std::shared_ptr<std::vector<double>> storage;
  bool requires_grad = false;
  std::shared_ptr<Node> grad_fn;
  std::shared_ptr<TensorImpl> grad;
};

// Recording context. Both flags are per thread.
bool grad_enabled();
void set_grad_enabled(bool enabled);

class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled);
  ~GradModeGuard();
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool previous_;
};

struct NoGradGuard : GradModeGuard {
  NoGradGuard() : GradModeGuard(false) {}
};

bool finite_checks_enabled();
void set_finite_checks_enabled(bool enabled);

/// Reverse pass from a scalar root into every reachable leaf that requires
/// a gradient. Gradients accumulate into Tensor::grad().
void backward(const Tensor& root, bool create_graph = false);

/// Gradients of a scalar root with respect to `inputs`, without touching
/// Tensor::grad(). Inputs the root does not depend on get zeros.
std::vector<Tensor> grad(const Tensor& root, std::span<const Tensor> inputs,
                         bool create_graph = false);

namespace detail {

/// Wraps freshly computed values as an operator output, recording a node when
/// grad mode is on and some input requires a gradient.
Tensor make_result(std::string_view kind, Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs, BackwardFn backward);

}  // namespace detail

}  // namespace saad
