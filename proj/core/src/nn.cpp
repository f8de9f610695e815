#include "saad/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace saad {

Tensor& ParamStore::add(const std::string& name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  if (!value.is_leaf()) throw std::invalid_argument("parameter must be a leaf: " + name);
  value.set_requires_grad(true);
  entries_.emplace_back(name, std::move(value));
  return entries_.back().second;
}

bool ParamStore::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const Entry& e) { return e.first == name; });
}

const Tensor& ParamStore::get(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.first == name) return e.second;
  }
  throw std::out_of_range("unknown parameter: " + name);
}

Tensor& ParamStore::get(const std::string& name) {
  return const_cast<Tensor&>(std::as_const(*this).get(name));
}

int64_t ParamStore::total_elements() const {
  int64_t n = 0;
  for (const auto& e : entries_) n += e.second.numel();
  return n;
}

void ParamStore::set_requires_grad(bool value) {
  for (auto& e : entries_) e.second.set_requires_grad(value);
}

void ParamStore::clear_grads() {
  for (auto& e : entries_) e.second.clear_grad();
}

std::vector<Tensor> ParamStore::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.second);
  return out;
}

ParamStore ParamStore::clone() const {
  ParamStore copy;
  for (const auto& [name, t] : entries_) {
    copy.add(name, t.clone()).set_requires_grad(t.requires_grad());
  }
  return copy;
}

bool ParamStore::bitwise_equal(const ParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first != other.entries_[i].first) return false;
    if (!entries_[i].second.bitwise_equal(other.entries_[i].second)) return false;
  }
  return true;
}

double kaiming_uniform_bound(int64_t fan_in) {
  if (fan_in <= 0) throw std::invalid_argument("fan_in must be positive");
  return std::sqrt(6.0 / static_cast<double>(fan_in));
}

void add_conv_params(ParamStore& store, const std::string& name, int64_t cin, int64_t cout,
                     int64_t kernel, Rng& rng) {
  const int64_t fan_in = cin * kernel * kernel;
  const double bound = kaiming_uniform_bound(fan_in);
  std::vector<double> w(static_cast<size_t>(cout * fan_in));
  for (auto& v : w) v = rng.uniform(-bound, bound);
  store.add(name + ".weight", Tensor::from_data({cout, cin, kernel, kernel}, std::move(w)));
  store.add(name + ".bias", Tensor::zeros({cout}));
}

int64_t conv_param_count(int64_t cin, int64_t cout, int64_t kernel) {
  return cout * cin * kernel * kernel + cout;
}

Tensor apply_conv(const ParamStore& store, const std::string& name, const Tensor& x,
                  const ops::Conv2dParams& p) {
  return ops::conv2d(x, store.get(name + ".weight"), store.get(name + ".bias"), p);
}

bool AdamState::bitwise_equal(const AdamState& other) const {
  return beta1 == other.beta1 && beta2 == other.beta2 && eps == other.eps &&
         step == other.step && first_moment.bitwise_equal(other.first_moment) &&
         second_moment.bitwise_equal(other.second_moment);
}

AdamState make_adam_state(const ParamStore& params) {
  AdamState state;
  for (const auto& [name, t] : params) {
    state.first_moment.add(name, Tensor::zeros(t.shape())).set_requires_grad(false);
    state.second_moment.add(name, Tensor::zeros(t.shape())).set_requires_grad(false);
  }
  return state;
}

void adam_step(ParamStore& params, AdamState& state, double lr) {
  if (state.first_moment.size() != params.size()) {
    throw std::invalid_argument("Adam state does not match the parameter store");
  }
  for (const auto& [name, t] : params) {
    if (!t.grad().defined()) throw MissingGradientError("missing gradient for parameter " + name);
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (auto& [name, param] : params) {
    auto m = state.first_moment.get(name).mutable_data();
    auto v = state.second_moment.get(name).mutable_data();
    const Tensor g = param.grad();
    const auto gd = g.data();
    auto p = param.mutable_data();
    for (size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gd[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gd[i] * gd[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
  params.clear_grads();
}

}  // namespace saad
