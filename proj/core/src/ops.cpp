#include "saad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

namespace saad::ops {

using detail::make_result;

namespace {

thread_local KinkTrace* tls_kink_trace = nullptr;

// Folds one bit per element (side of the kink) into the active trace.
template <class Pred>
void trace_kinks(std::span<const double> values, Pred side) {
  if (!tls_kink_trace) return;
  uint64_t word = 0;
  size_t bits = 0;
  for (double v : values) {
    word = (word << 1) | static_cast<uint64_t>(side(v));
    if (++bits == 64) {
      tls_kink_trace->fold(word);
      word = 0;
      bits = 0;
    }
  }
  tls_kink_trace->fold(word ^ (bits << 56));
}

void expect_rank(const Tensor& x, int rank, const char* op) {
  if (x.rank() != rank) {
    throw ShapeError(std::string(op) + " expects a rank-" + std::to_string(rank) +
                     " tensor, got " + shape_to_string(x.shape()));
  }
}

void expect_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                     " vs " + shape_to_string(b.shape()));
  }
}

template <class F>
std::vector<double> map_unary(const Tensor& x, F f) {
  const auto in = x.data();
  std::vector<double> out(in.size());
  std::transform(in.begin(), in.end(), out.begin(), f);
  return out;
}

template <class F>
std::vector<double> map_binary(const Tensor& a, const Tensor& b, F f) {
  const auto x = a.data();
  const auto y = b.data();
  std::vector<double> out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = f(x[i], y[i]);
  return out;
}

std::vector<Tensor> none(size_t n) { return std::vector<Tensor>(n); }

double stable_sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct Dims4 {
  int64_t n, c, h, w;
};

Dims4 dims4(const Tensor& x) {
  const auto& s = x.shape();
  return {s[0], s[1], s[2], s[3]};
}

Tensor piecewise_linear(const Tensor& x, double alpha, std::string_view kind) {
  trace_kinks(x.data(), [](double v) { return v > 0; });
  auto out = map_unary(x, [alpha](double v) { return v > 0 ? v : alpha * v; });
  return make_result(kind, x.shape(), std::move(out), {x},
                     [x, alpha](const Tensor& g, const std::vector<bool>&) {
                       // The slope is piecewise constant, so it enters the
                       // graph as a constant.
                       Tensor slope = Tensor::from_data(
                           x.shape(), map_unary(x, [alpha](double v) { return v > 0 ? 1.0 : alpha; }));
                       return std::vector<Tensor>{mul(g, slope)};
                     });
}

}  // namespace

KinkTrace::KinkTrace() : previous_(tls_kink_trace) { tls_kink_trace = this; }
KinkTrace::~KinkTrace() { tls_kink_trace = previous_; }

void KinkTrace::fold(uint64_t word) {
  // FNV-1a over the 8 bytes of `word`.
  for (int i = 0; i < 8; ++i) {
    signature_ ^= (word >> (8 * i)) & 0xff;
    signature_ *= 0x100000001b3ULL;
  }
}

Tensor zeros_like(const Tensor& x) { return Tensor::zeros(x.shape()); }
Tensor ones_like(const Tensor& x) { return Tensor::ones(x.shape()); }

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape " + shape_to_string(x.shape()) + " -> " + shape_to_string(shape));
  }
  const Shape original = x.shape();
  std::vector<double> data(x.data().begin(), x.data().end());
  return make_result("reshape", std::move(shape), std::move(data), {x},
                     [original](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{reshape(g, original)};
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  expect_same_shape(a, b, "add");
  return make_result("add", a.shape(), map_binary(a, b, std::plus<>()), {a, b},
                     [](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{g, g};
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  expect_same_shape(a, b, "sub");
  return make_result("sub", a.shape(), map_binary(a, b, std::minus<>()), {a, b},
                     [](const Tensor& g, const std::vector<bool>& needs) {
                       auto out = none(2);
                       if (needs[0]) out[0] = g;
                       if (needs[1]) out[1] = scale(g, -1.0);
                       return out;
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  expect_same_shape(a, b, "mul");
  return make_result("mul", a.shape(), map_binary(a, b, std::multiplies<>()), {a, b},
                     [a, b](const Tensor& g, const std::vector<bool>& needs) {
                       auto out = none(2);
                       if (needs[0]) out[0] = mul(g, b);
                       if (needs[1]) out[1] = mul(g, a);
                       return out;
                     });
}

Tensor add_scalar(const Tensor& x, double s) {
  return make_result("add_scalar", x.shape(), map_unary(x, [s](double v) { return v + s; }), {x},
                     [](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{g};
                     });
}

Tensor scale(const Tensor& x, double s) {
  return make_result("scale", x.shape(), map_unary(x, [s](double v) { return v * s; }), {x},
                     [s](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{scale(g, s)};
                     });
}

Tensor rsub_scalar(double s, const Tensor& x) {
  return make_result("rsub_scalar", x.shape(), map_unary(x, [s](double v) { return s - v; }),
                     {x}, [](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{scale(g, -1.0)};
                     });
}

Tensor square(const Tensor& x) { return mul(x, x); }

Tensor relu(const Tensor& x) { return piecewise_linear(x, 0.0, "relu"); }

Tensor leaky_relu(const Tensor& x, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("leaky_relu alpha must lie in (0, 1)");
  }
  return piecewise_linear(x, alpha, "leaky_relu");
}

Tensor sigmoid(const Tensor& x) {
  return make_result("sigmoid", x.shape(), map_unary(x, stable_sigmoid), {x},
                     [x](const Tensor& g, const std::vector<bool>&) {
                       Tensor s = sigmoid(x);
                       return std::vector<Tensor>{mul(g, mul(s, rsub_scalar(1.0, s)))};
                     });
}

Tensor activation(const Tensor& x, Activation kind, double alpha) {
  switch (kind) {
    case Activation::relu:
      return relu(x);
    case Activation::leaky_relu:
      return leaky_relu(x, alpha);
    case Activation::sigmoid:
      return sigmoid(x);
  }
  throw std::invalid_argument("unknown activation");
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  const Shape shape = x.shape();
  return make_result("sum", {}, {total}, {x},
                     [shape](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{expand_scalar(g, shape)};
                     });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor expand_scalar(const Tensor& s, const Shape& shape) {
  if (s.numel() != 1) throw ShapeError("expand_scalar needs a single-element tensor");
  std::vector<double> data(static_cast<size_t>(shape_numel(shape)), s.data()[0]);
  const Shape src = s.shape();
  return make_result("expand_scalar", shape, std::move(data), {s},
                     [src](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{reshape(sum(g), src)};
                     });
}

Tensor sum_per_sample(const Tensor& x) {
  if (x.rank() < 1) throw ShapeError("sum_per_sample needs rank >= 1");
  const int64_t n = x.dim(0);
  const int64_t inner = n ? x.numel() / n : 0;
  std::vector<double> out(static_cast<size_t>(n), 0.0);
  const auto d = x.data();
  for (int64_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int64_t j = 0; j < inner; ++j) acc += d[static_cast<size_t>(i * inner + j)];
    out[static_cast<size_t>(i)] = acc;
  }
  const Shape shape = x.shape();
  return make_result("sum_per_sample", {n}, std::move(out), {x},
                     [shape](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{expand_per_sample(g, shape)};
                     });
}

Tensor mean_per_sample(const Tensor& x) {
  const int64_t n = x.dim(0);
  if (n == 0 || x.numel() == 0) throw ShapeError("mean_per_sample of an empty tensor");
  return scale(sum_per_sample(x), static_cast<double>(n) / static_cast<double>(x.numel()));
}

Tensor expand_per_sample(const Tensor& v, const Shape& shape) {
  expect_rank(v, 1, "expand_per_sample");
  if (shape.empty() || shape[0] != v.dim(0)) {
    throw ShapeError("expand_per_sample: batch mismatch");
  }
  const int64_t n = shape[0];
  const int64_t inner = n ? shape_numel(shape) / n : 0;
  std::vector<double> out(static_cast<size_t>(shape_numel(shape)));
  const auto d = v.data();
  for (int64_t i = 0; i < n; ++i) {
    std::fill_n(out.begin() + i * inner, inner, d[static_cast<size_t>(i)]);
  }
  return make_result("expand_per_sample", shape, std::move(out), {v},
                     [](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{sum_per_sample(g)};
                     });
}

Tensor repeat_channels(const Tensor& x, int64_t channels) {
  expect_rank(x, 4, "repeat_channels");
  const auto [n, c, h, w] = dims4(x);
  if (c != 1) throw ShapeError("repeat_channels expects a single-channel input");
  const int64_t plane = h * w;
  std::vector<double> out(static_cast<size_t>(n * channels * plane));
  const auto d = x.data();
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t k = 0; k < channels; ++k) {
      std::copy_n(d.begin() + i * plane, plane, out.begin() + (i * channels + k) * plane);
    }
  }
  return make_result("repeat_channels", {n, channels, h, w}, std::move(out), {x},
                     [](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{sum_channels(g)};
                     });
}

Tensor sum_channels(const Tensor& x) {
  expect_rank(x, 4, "sum_channels");
  const auto [n, c, h, w] = dims4(x);
  const int64_t plane = h * w;
  std::vector<double> out(static_cast<size_t>(n * plane), 0.0);
  const auto d = x.data();
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t k = 0; k < c; ++k) {
      const double* src = d.data() + (i * c + k) * plane;
      double* dst = out.data() + i * plane;
      for (int64_t p = 0; p < plane; ++p) dst[p] += src[p];
    }
  }
  return make_result("sum_channels", {n, 1, h, w}, std::move(out), {x},
                     [c](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{repeat_channels(g, c)};
                     });
}

Tensor reduce_to_channels(const Tensor& x) {
  expect_rank(x, 4, "reduce_to_channels");
  const auto [n, c, h, w] = dims4(x);
  const int64_t plane = h * w;
  std::vector<double> out(static_cast<size_t>(c), 0.0);
  const auto d = x.data();
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t k = 0; k < c; ++k) {
      const double* src = d.data() + (i * c + k) * plane;
      double acc = 0.0;
      for (int64_t p = 0; p < plane; ++p) acc += src[p];
      out[static_cast<size_t>(k)] += acc;
    }
  }
  const Shape shape = x.shape();
  return make_result("reduce_to_channels", {c}, std::move(out), {x},
                     [shape](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{broadcast_channels(g, shape)};
                     });
}

Tensor broadcast_channels(const Tensor& b, const Shape& shape) {
  expect_rank(b, 1, "broadcast_channels");
  if (shape.size() != 4 || shape[1] != b.dim(0)) {
    throw ShapeError("broadcast_channels: channel mismatch");
  }
  const int64_t n = shape[0], c = shape[1], plane = shape[2] * shape[3];
  std::vector<double> out(static_cast<size_t>(shape_numel(shape)));
  const auto d = b.data();
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t k = 0; k < c; ++k) {
      std::fill_n(out.begin() + (i * c + k) * plane, plane, d[static_cast<size_t>(k)]);
    }
  }
  return make_result("broadcast_channels", shape, std::move(out), {b},
                     [](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{reduce_to_channels(g)};
                     });
}

Tensor masked_sum(const Tensor& x, const Tensor& mask) {
  expect_rank(x, 4, "masked_sum");
  expect_rank(mask, 4, "masked_sum");
  if (mask.dim(0) != x.dim(0) || mask.dim(1) != 1 || mask.dim(2) != x.dim(2) ||
      mask.dim(3) != x.dim(3)) {
    throw ShapeError("masked_sum: mask " + shape_to_string(mask.shape()) +
                     " does not match input " + shape_to_string(x.shape()));
  }
  return sum(mul(x, repeat_channels(mask.detach(), x.dim(1))));
}

Tensor masked_mean(const Tensor& x, const Tensor& mask, MaskedReduceInfo* info) {
  Tensor total = masked_sum(x, mask);
  double selected = 0.0;
  for (double v : mask.data()) selected += v;
  const auto count = static_cast<int64_t>(selected) * x.dim(1);
  if (info) {
    info->selected = count;
    info->degenerate = count == 0;
  }
  // An empty mask yields 0 rather than NaN; the graph stays connected.
  return scale(total, count == 0 ? 0.0 : 1.0 / static_cast<double>(count));
}

Tensor concat_channels(const std::vector<Tensor>& inputs) {
  if (inputs.empty()) throw ShapeError("concat_channels of an empty list");
  for (const auto& t : inputs) expect_rank(t, 4, "concat_channels");
  const auto [n, c0, h, w] = dims4(inputs[0]);
  (void)c0;
  int64_t total = 0;
  std::vector<int64_t> offsets;
  for (const auto& t : inputs) {
    if (t.dim(0) != n || t.dim(2) != h || t.dim(3) != w) {
      throw ShapeError("concat_channels: spatial mismatch " + shape_to_string(t.shape()) +
                       " vs " + shape_to_string(inputs[0].shape()));
    }
    offsets.push_back(total);
    total += t.dim(1);
  }
  const int64_t plane = h * w;
  std::vector<double> out(static_cast<size_t>(n * total * plane));
  for (size_t k = 0; k < inputs.size(); ++k) {
    const auto d = inputs[k].data();
    const int64_t c = inputs[k].dim(1);
    for (int64_t i = 0; i < n; ++i) {
      std::copy_n(d.begin() + i * c * plane, c * plane,
                  out.begin() + (i * total + offsets[k]) * plane);
    }
  }
  std::vector<int64_t> counts;
  for (const auto& t : inputs) counts.push_back(t.dim(1));
  return make_result("concat_channels", {n, total, h, w}, std::move(out), inputs,
                     [offsets, counts](const Tensor& g, const std::vector<bool>& needs) {
                       auto grads = none(offsets.size());
                       for (size_t k = 0; k < offsets.size(); ++k) {
                         if (needs[k]) grads[k] = slice_channels(g, offsets[k], counts[k]);
                       }
                       return grads;
                     });
}

Tensor slice_channels(const Tensor& x, int64_t start, int64_t count) {
  expect_rank(x, 4, "slice_channels");
  const auto [n, c, h, w] = dims4(x);
  if (start < 0 || count < 0 || start + count > c) {
    throw ShapeError("slice_channels: range out of bounds");
  }
  const int64_t plane = h * w;
  std::vector<double> out(static_cast<size_t>(n * count * plane));
  const auto d = x.data();
  for (int64_t i = 0; i < n; ++i) {
    std::copy_n(d.begin() + (i * c + start) * plane, count * plane,
                out.begin() + i * count * plane);
  }
  return make_result("slice_channels", {n, count, h, w}, std::move(out), {x},
                     [start, total = c](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{pad_channels(g, start, total)};
                     });
}

Tensor pad_channels(const Tensor& x, int64_t start, int64_t total) {
  expect_rank(x, 4, "pad_channels");
  const auto [n, c, h, w] = dims4(x);
  if (start < 0 || start + c > total) throw ShapeError("pad_channels: range out of bounds");
  const int64_t plane = h * w;
  std::vector<double> out(static_cast<size_t>(n * total * plane), 0.0);
  const auto d = x.data();
  for (int64_t i = 0; i < n; ++i) {
    std::copy_n(d.begin() + i * c * plane, c * plane, out.begin() + (i * total + start) * plane);
  }
  return make_result("pad_channels", {n, total, h, w}, std::move(out), {x},
                     [start, c](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{slice_channels(g, start, c)};
                     });
}

Tensor upsample_nearest(const Tensor& x, int64_t factor) {
  expect_rank(x, 4, "upsample_nearest");
  if (factor < 1) throw std::invalid_argument("upsample factor must be >= 1");
  const auto [n, c, h, w] = dims4(x);
  const int64_t oh = h * factor, ow = w * factor;
  std::vector<double> out(static_cast<size_t>(n * c * oh * ow));
  const auto d = x.data();
  for (int64_t p = 0; p < n * c; ++p) {
    const double* src = d.data() + p * h * w;
    double* dst = out.data() + p * oh * ow;
    for (int64_t y = 0; y < oh; ++y) {
      const double* row = src + (y / factor) * w;
      for (int64_t xx = 0; xx < ow; ++xx) dst[y * ow + xx] = row[xx / factor];
    }
  }
  return make_result("upsample_nearest", {n, c, oh, ow}, std::move(out), {x},
                     [factor](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{sum_pool(g, factor)};
                     });
}

Tensor sum_pool(const Tensor& x, int64_t factor) {
  expect_rank(x, 4, "sum_pool");
  if (factor < 1) throw std::invalid_argument("sum_pool factor must be >= 1");
  const auto [n, c, h, w] = dims4(x);
  if (h % factor || w % factor) {
    throw DimensionError("sum_pool: spatial size not divisible by factor");
  }
  const int64_t oh = h / factor, ow = w / factor;
  std::vector<double> out(static_cast<size_t>(n * c * oh * ow), 0.0);
  const auto d = x.data();
  for (int64_t p = 0; p < n * c; ++p) {
    const double* src = d.data() + p * h * w;
    double* dst = out.data() + p * oh * ow;
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t xx = 0; xx < w; ++xx) dst[(y / factor) * ow + xx / factor] += src[y * w + xx];
    }
  }
  return make_result("sum_pool", {n, c, oh, ow}, std::move(out), {x},
                     [factor](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{upsample_nearest(g, factor)};
                     });
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& target) {
  expect_same_shape(logits, target, "bce_with_logits");
  auto out = map_binary(logits, target, [](double z, double t) {
    return std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
  });
  const Tensor t = target.detach();
  return make_result("bce_with_logits", logits.shape(), std::move(out), {logits, target},
                     [logits, t](const Tensor& g, const std::vector<bool>& needs) {
                       auto grads = none(2);
                       if (needs[0]) grads[0] = mul(g, sub(sigmoid(logits), t));
                       return grads;
                     });
}

Tensor bce_prob(const Tensor& prob, const Tensor& target, double eps) {
  expect_same_shape(prob, target, "bce_prob");
  auto clamp = [eps](double p) { return std::clamp(p, eps, 1.0 - eps); };
  trace_kinks(prob.data(), [eps](double p) { return p >= eps && p <= 1.0 - eps; });
  auto out = map_binary(prob, target, [clamp](double p, double t) {
    const double q = clamp(p);
    return -(t * std::log(q) + (1.0 - t) * std::log(1.0 - q));
  });
  return make_result(
      "bce_prob", prob.shape(), std::move(out), {prob, target},
      [prob, target, eps](const Tensor& g, const std::vector<bool>& needs) {
        if (grad_enabled()) {
          throw std::logic_error("bce_prob does not support higher-order gradients");
        }
        auto grads = none(2);
        if (!needs[0]) return grads;
        const auto p = prob.data();
        const auto t = target.data();
        const auto gd = g.data();
        std::vector<double> d(p.size());
        for (size_t i = 0; i < p.size(); ++i) {
          if (p[i] < eps || p[i] > 1.0 - eps) {
            d[i] = 0.0;
          } else {
            d[i] = gd[i] * (p[i] - t[i]) / (p[i] * (1.0 - p[i]));
          }
        }
        grads[0] = Tensor::from_data(prob.shape(), std::move(d));
        return grads;
      });
}

}  // namespace saad::ops
