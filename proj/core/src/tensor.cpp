#include "saad/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "saad/ops.hpp"

namespace saad {

struct detail_access {
  static Tensor wrap(std::shared_ptr<TensorImpl> impl) { return Tensor(std::move(impl)); }
  static const std::shared_ptr<TensorImpl>& impl(const Tensor& t) { return t.impl_; }
};

namespace {

thread_local bool tls_grad_enabled = true;
thread_local bool tls_finite_checks = true;
thread_local uint64_t tls_node_seq = 0;

std::shared_ptr<TensorImpl> new_impl(Shape shape, std::vector<double> data) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_to_string(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->storage = std::make_shared<std::vector<double>>(std::move(data));
  return impl;
}

const TensorImpl& checked(const std::shared_ptr<TensorImpl>& impl) {
  if (!impl) throw std::logic_error("use of undefined tensor");
  return *impl;
}

}  // namespace

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_to_string(shape));
    n *= d;
  }
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }
Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(Shape shape, double value) {
  const auto n = static_cast<size_t>(shape_numel(shape));
  return Tensor(new_impl(std::move(shape), std::vector<double>(n, value)));
}

Tensor Tensor::scalar(double value) { return Tensor(new_impl({}, {value})); }

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
  return Tensor(new_impl(std::move(shape), std::move(data)));
}

const Shape& Tensor::shape() const { return checked(impl_).shape; }

int64_t Tensor::dim(int axis) const {
  const auto& s = shape();
  if (axis < 0) axis += static_cast<int>(s.size());
  if (axis < 0 || axis >= static_cast<int>(s.size())) {
    throw ShapeError("axis out of range for shape " + shape_to_string(s));
  }
  return s[static_cast<size_t>(axis)];
}

int Tensor::rank() const { return static_cast<int>(shape().size()); }

int64_t Tensor::numel() const { return static_cast<int64_t>(checked(impl_).storage->size()); }

std::span<const double> Tensor::data() const { return *checked(impl_).storage; }

std::span<double> Tensor::mutable_data() {
  if (checked(impl_).grad_fn) {
    throw std::logic_error("cannot mutate the output of a recorded operator");
  }
  return *impl_->storage;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_to_string(shape()));
  }
  return data()[0];
}

double Tensor::at(int64_t n, int64_t c, int64_t h, int64_t w) const {
  const auto& s = shape();
  if (s.size() != 4) throw ShapeError("at(n,c,h,w) on non rank-4 tensor");
  return data()[static_cast<size_t>(((n * s[1] + c) * s[2] + h) * s[3] + w)];
}

bool Tensor::requires_grad() const { return checked(impl_).requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
  if (checked(impl_).grad_fn && !value) {
    throw std::logic_error("set_requires_grad(false) on a non-leaf; use detach()");
  }
  impl_->requires_grad = value;
  return *this;
}

bool Tensor::is_leaf() const { return checked(impl_).grad_fn == nullptr; }

const Node* Tensor::grad_fn() const { return checked(impl_).grad_fn.get(); }

Tensor Tensor::grad() const {
  const auto& g = checked(impl_).grad;
  return g ? Tensor(g) : Tensor();
}

void Tensor::set_grad(Tensor g) {
  checked(impl_);
  if (g.defined() && g.shape() != impl_->shape) {
    throw ShapeError("gradient shape " + shape_to_string(g.shape()) + " differs from " +
                     shape_to_string(impl_->shape));
  }
  impl_->grad = g.impl_;
}

void Tensor::clear_grad() { checked(impl_).grad ? impl_->grad.reset() : void(); }

Tensor Tensor::detach() const {
  const auto& src = checked(impl_);
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = src.shape;
  impl->storage = src.storage;
  return Tensor(std::move(impl));
}

Tensor Tensor::clone() const {
  const auto& src = checked(impl_);
  return Tensor(new_impl(src.shape, *src.storage));
}

Tensor Tensor::reshape(Shape shape) const { return ops::reshape(*this, std::move(shape)); }

bool Tensor::all_finite() const {
  const auto d = data();
  return std::all_of(d.begin(), d.end(), [](double v) { return std::isfinite(v); });
}

bool Tensor::bitwise_equal(const Tensor& other) const {
  if (shape() != other.shape()) return false;
  const auto a = data();
  const auto b = other.data();
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

bool grad_enabled() { return tls_grad_enabled; }
void set_grad_enabled(bool enabled) { tls_grad_enabled = enabled; }

GradModeGuard::GradModeGuard(bool enabled) : previous_(tls_grad_enabled) {
  tls_grad_enabled = enabled;
}
GradModeGuard::~GradModeGuard() { tls_grad_enabled = previous_; }

bool finite_checks_enabled() { return tls_finite_checks; }
void set_finite_checks_enabled(bool enabled) { tls_finite_checks = enabled; }

namespace detail {

Tensor make_result(std::string_view kind, Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs, BackwardFn backward) {
  auto impl = new_impl(std::move(shape), std::move(data));
  if (tls_finite_checks) {
    // Exponent-bit test so the scan vectorizes; inf and NaN have all ones.
    constexpr uint64_t kExp = 0x7ff0000000000000ULL;
    uint64_t bad = 0;
    for (double v : *impl->storage) {
      bad |= static_cast<uint64_t>((std::bit_cast<uint64_t>(v) & kExp) == kExp);
    }
    if (bad) throw NonFiniteError("non-finite value produced by " + std::string(kind));
  }
  bool track = false;
  if (tls_grad_enabled) {
    for (const auto& in : inputs) {
      if (in.defined() && in.requires_grad()) {
        track = true;
        break;
      }
    }
  }
  if (track) {
    auto node = std::make_shared<Node>();
    node->kind = kind;
    node->seq = ++tls_node_seq;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
    impl->grad_fn = std::move(node);
    impl->requires_grad = true;
  }
  return detail_access::wrap(std::move(impl));
}

}  // namespace detail

namespace {

using ImplPtr = const TensorImpl*;

// Shared reverse sweep. Interior tensors are visited once each, in reverse
// creation order of their producing node. `is_target` marks the tensors whose
// gradients are wanted; only edges leading to a target are differentiated.
std::unordered_map<ImplPtr, Tensor> run_backward(
    const Tensor& root, const std::function<bool(const Tensor&)>& is_target,
    bool create_graph) {
  if (!root.defined() || root.numel() != 1) {
    throw ShapeError("backward root must be a scalar tensor");
  }

  std::unordered_map<ImplPtr, bool> leads;
  std::vector<Tensor> interior;
  {
    // Iterative post-order DFS computing whether each tensor reaches a target.
    struct Frame {
      Tensor t;
      size_t next = 0;
    };
    std::vector<Frame> stack;
    stack.push_back({root, 0});
    leads.emplace(root.impl(), false);
    while (!stack.empty()) {
      auto& f = stack.back();
      const Node* node = f.t.grad_fn();
      if (node && f.next < node->inputs.size()) {
        const Tensor& in = node->inputs[f.next++];
        if (in.defined() && in.requires_grad() && !leads.count(in.impl())) {
          leads.emplace(in.impl(), false);
          stack.push_back({in, 0});
        }
        continue;
      }
      bool reaches = is_target(f.t);
      if (node) {
        for (const auto& in : node->inputs) {
          if (in.defined() && in.requires_grad() && leads[in.impl()]) reaches = true;
        }
        interior.push_back(f.t);
      }
      leads[f.t.impl()] = reaches;
      stack.pop_back();
    }
  }
  std::sort(interior.begin(), interior.end(), [](const Tensor& a, const Tensor& b) {
    return a.grad_fn()->seq > b.grad_fn()->seq;
  });

  GradModeGuard mode(create_graph);
  std::unordered_map<ImplPtr, Tensor> grads;
  grads.emplace(root.impl(), ops::ones_like(root));

  auto accumulate = [&](const Tensor& target, Tensor g) {
    auto it = grads.find(target.impl());
    if (it == grads.end()) {
      grads.emplace(target.impl(), std::move(g));
    } else {
      it->second = ops::add(it->second, g);
    }
  };

  for (const auto& t : interior) {
    auto it = grads.find(t.impl());
    if (it == grads.end() || !leads[t.impl()]) continue;
    const Tensor g_out = it->second;
    if (!is_target(t)) grads.erase(it);

    const Node& node = *t.grad_fn();
    std::vector<bool> needs(node.inputs.size(), false);
    bool any = false;
    for (size_t i = 0; i < node.inputs.size(); ++i) {
      const auto& in = node.inputs[i];
      needs[i] = in.defined() && in.requires_grad() && leads[in.impl()];
      any = any || needs[i];
    }
    if (!any) continue;
    auto in_grads = node.backward(g_out, needs);
    for (size_t i = 0; i < node.inputs.size(); ++i) {
      if (!needs[i] || !in_grads[i].defined()) continue;
      if (in_grads[i].shape() != node.inputs[i].shape()) {
        throw ShapeError(std::string("backward of ") + std::string(node.kind) +
                         " produced gradient of shape " + shape_to_string(in_grads[i].shape()) +
                         " for input " + shape_to_string(node.inputs[i].shape()));
      }
      accumulate(node.inputs[i], std::move(in_grads[i]));
    }
  }
  return grads;
}

}  // namespace

void backward(const Tensor& root, bool create_graph) {
  auto grads = run_backward(
      root, [](const Tensor& t) { return t.is_leaf() && t.requires_grad(); }, create_graph);
  for (auto& [impl, g] : grads) {
    if (impl->grad_fn || !impl->requires_grad) continue;
    // The map key is the leaf's own impl; rebuild a handle through the grad
    // slot to avoid const_cast on the shared owner.
    auto* leaf = const_cast<TensorImpl*>(impl);
    Tensor stored = create_graph ? g : g.detach();
    if (leaf->grad) {
      GradModeGuard mode(create_graph);
      Tensor prev = detail_access::wrap(leaf->grad);
      stored = ops::add(prev, stored);
      if (!create_graph) stored = stored.detach();
    }
    leaf->grad = detail_access::impl(stored);
  }
}

std::vector<Tensor> grad(const Tensor& root, std::span<const Tensor> inputs, bool create_graph) {
  std::unordered_set<ImplPtr> targets;
  for (const auto& in : inputs) targets.insert(in.impl());
  auto grads = run_backward(
      root, [&](const Tensor& t) { return targets.count(t.impl()) > 0; }, create_graph);
  std::vector<Tensor> out;
  out.reserve(inputs.size());
  for (const auto& in : inputs) {
    auto it = grads.find(in.impl());
    if (it == grads.end()) {
      out.push_back(Tensor::zeros(in.shape()));
    } else {
      out.push_back(create_graph ? it->second : it->second.detach());
    }
  }
  return out;
}

}  // namespace saad
