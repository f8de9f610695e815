#include "saad/grad_suite.hpp"

#include <chrono>
#include <cstdio>
#include <functional>

#include "saad/grad_check.hpp"
#include "saad/losses.hpp"
#include "saad/models.hpp"
#include "saad/ops.hpp"
#include "saad/rng.hpp"

namespace saad {

namespace {

Tensor uniform_tensor(const Shape& shape, Rng& rng, double lo, double hi) {
  std::vector<double> d(static_cast<size_t>(shape_numel(shape)));
  for (auto& v : d) v = rng.uniform(lo, hi);
  return Tensor::from_data(shape, std::move(d));
}

Tensor binary_tensor(const Shape& shape, Rng& rng) {
  std::vector<double> d(static_cast<size_t>(shape_numel(shape)));
  for (auto& v : d) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
  if (!d.empty()) d[0] = 1.0;  // never empty
  return Tensor::from_data(shape, std::move(d));
}

// Contracts an output with fixed random weights so every output element
// carries a distinct gradient.
Tensor contract(const Tensor& y, uint64_t seed) {
  Rng rng(seed);
  return ops::sum(ops::mul(y, uniform_tensor(y.shape(), rng, -1.0, 1.0)));
}

// Values kept away from the kinks of relu-type functions.
Tensor away_from_zero(const Shape& shape, Rng& rng) {
  std::vector<double> d(static_cast<size_t>(shape_numel(shape)));
  for (auto& v : d) {
    const double m = rng.uniform(0.05, 1.0);
    v = rng.uniform() < 0.5 ? -m : m;
  }
  return Tensor::from_data(shape, std::move(d));
}

struct OpCase {
  std::string name;
  // Builds inputs for shape variant k and returns the scalar function.
  std::function<std::pair<std::vector<Tensor>, ScalarFn>(int k, Rng& rng)> make;
};

const Shape kShapes[3] = {{2, 3, 4, 4}, {1, 2, 6, 4}, {3, 1, 4, 8}};

std::vector<OpCase> op_cases() {
  std::vector<OpCase> cases;
  auto unary = [&](std::string name, std::function<Tensor(const Tensor&)> op, bool avoid_kink) {
    cases.push_back({name, [op, avoid_kink](int k, Rng& rng) {
                       Tensor x = avoid_kink ? away_from_zero(kShapes[k], rng)
                                             : uniform_tensor(kShapes[k], rng, -2.0, 2.0);
                       const uint64_t s = rng.next_u64();
                       ScalarFn f = [op, s](std::span<const Tensor> in) { return contract(op(in[0]), s); };
                       return std::make_pair(std::vector<Tensor>{x}, f);
                     }});
  };
  auto binary = [&](std::string name, std::function<Tensor(const Tensor&, const Tensor&)> op) {
    cases.push_back({name, [op](int k, Rng& rng) {
                       Tensor a = uniform_tensor(kShapes[k], rng, -2.0, 2.0);
                       Tensor b = uniform_tensor(kShapes[k], rng, -2.0, 2.0);
                       const uint64_t s = rng.next_u64();
                       ScalarFn f = [op, s](std::span<const Tensor> in) {
                         return contract(op(in[0], in[1]), s);
                       };
                       return std::make_pair(std::vector<Tensor>{a, b}, f);
                     }});
  };

  binary("add", [](const Tensor& a, const Tensor& b) { return ops::add(a, b); });
  binary("sub", [](const Tensor& a, const Tensor& b) { return ops::sub(a, b); });
  binary("mul", [](const Tensor& a, const Tensor& b) { return ops::mul(a, b); });
  unary("add_scalar", [](const Tensor& x) { return ops::add_scalar(x, 0.7); }, false);
  unary("scale", [](const Tensor& x) { return ops::scale(x, -1.3); }, false);
  unary("rsub_scalar", [](const Tensor& x) { return ops::rsub_scalar(1.0, x); }, false);
  unary("square", [](const Tensor& x) { return ops::square(x); }, false);
  unary("relu", [](const Tensor& x) { return ops::relu(x); }, true);
  unary("leaky_relu", [](const Tensor& x) { return ops::leaky_relu(x, 0.2); }, true);
  unary("sigmoid", [](const Tensor& x) { return ops::sigmoid(x); }, false);
  unary("reshape", [](const Tensor& x) { return ops::reshape(x, {x.numel()}); }, false);
  unary("sum", [](const Tensor& x) { return ops::square(ops::sum(x)); }, false);
  unary("mean", [](const Tensor& x) { return ops::square(ops::mean(x)); }, false);
  unary("expand_scalar", [](const Tensor& x) {
    return ops::expand_scalar(ops::mean(ops::square(x)), x.shape());
  }, false);
  unary("sum_per_sample", [](const Tensor& x) { return ops::sum_per_sample(x); }, false);
  unary("mean_per_sample", [](const Tensor& x) { return ops::mean_per_sample(x); }, false);
  unary("expand_per_sample", [](const Tensor& x) {
    return ops::expand_per_sample(ops::sum_per_sample(ops::square(x)), x.shape());
  }, false);
  unary("repeat_channels", [](const Tensor& x) {
    return ops::repeat_channels(ops::slice_channels(x, 0, 1), 3);
  }, false);
  unary("sum_channels", [](const Tensor& x) { return ops::sum_channels(x); }, false);
  unary("reduce_to_channels", [](const Tensor& x) { return ops::reduce_to_channels(x); }, false);
  unary("broadcast_channels", [](const Tensor& x) {
    return ops::broadcast_channels(ops::reduce_to_channels(ops::square(x)), x.shape());
  }, false);
  unary("concat_channels", [](const Tensor& x) {
    return ops::concat_channels({x, ops::square(x), x});
  }, false);
  unary("slice_channels", [](const Tensor& x) {
    return ops::slice_channels(x, x.dim(1) - 1, 1);
  }, false);
  unary("pad_channels", [](const Tensor& x) { return ops::pad_channels(x, 1, x.dim(1) + 2); }, false);
  unary("upsample_nearest", [](const Tensor& x) { return ops::upsample_nearest(x, 2); }, false);
  unary("sum_pool", [](const Tensor& x) { return ops::sum_pool(x, 2); }, false);

  for (const char* name : {"masked_sum", "masked_mean"}) {
    const bool mean = std::string(name) == "masked_mean";
    cases.push_back({name, [mean](int k, Rng& rng) {
                       const Shape& s = kShapes[k];
                       Tensor x = uniform_tensor(s, rng, -2.0, 2.0);
                       Tensor m = binary_tensor({s[0], 1, s[2], s[3]}, rng);
                       ScalarFn f = [m, mean](std::span<const Tensor> in) {
                         Tensor y = mean ? ops::masked_mean(ops::square(in[0]), m)
                                         : ops::masked_sum(ops::square(in[0]), m);
                         return ops::square(y);
                       };
                       return std::make_pair(std::vector<Tensor>{x}, f);
                     }});
  }

  cases.push_back({"bce_with_logits", [](int k, Rng& rng) {
                     Tensor z = uniform_tensor(kShapes[k], rng, -4.0, 4.0);
                     Tensor t = uniform_tensor(kShapes[k], rng, 0.0, 1.0);
                     ScalarFn f = [t](std::span<const Tensor> in) {
                       return ops::mean(ops::bce_with_logits(in[0], t));
                     };
                     return std::make_pair(std::vector<Tensor>{z}, f);
                   }});
  cases.push_back({"bce_prob", [](int k, Rng& rng) {
                     Tensor p = uniform_tensor(kShapes[k], rng, 0.05, 0.95);
                     Tensor t = binary_tensor(kShapes[k], rng);
                     ScalarFn f = [t](std::span<const Tensor> in) {
                       return ops::mean(ops::bce_prob(in[0], t));
                     };
                     return std::make_pair(std::vector<Tensor>{p}, f);
                   }});

  struct ConvVariant {
    int64_t kernel;
    ops::Conv2dParams p;
  };
  const ConvVariant variants[] = {{3, {1, 1, 1}}, {3, {2, 1, 1}}, {3, {1, 2, 2}}, {1, {2, 0, 1}}};
  for (const auto& v : variants) {
    const std::string tag = "[k" + std::to_string(v.kernel) + ",s" + std::to_string(v.p.stride) +
                            ",p" + std::to_string(v.p.padding) + ",d" +
                            std::to_string(v.p.dilation) + "]";
    cases.push_back({"conv2d" + tag, [v](int k, Rng& rng) {
                       const Shape& s = kShapes[k];
                       const int64_t cout = 2 + k;
                       Tensor x = uniform_tensor({s[0], s[1], s[2] + 2, s[3] + 2}, rng, -1.0, 1.0);
                       Tensor w = uniform_tensor({cout, s[1], v.kernel, v.kernel}, rng, -1.0, 1.0);
                       Tensor b = uniform_tensor({cout}, rng, -1.0, 1.0);
                       const uint64_t seed = rng.next_u64();
                       ScalarFn f = [v, seed](std::span<const Tensor> in) {
                         return contract(ops::conv2d(in[0], in[1], in[2], v.p), seed);
                       };
                       return std::make_pair(std::vector<Tensor>{x, w, b}, f);
                     }});
  }
  cases.push_back({"conv2d_input_grad", [](int k, Rng& rng) {
                     const Shape& s = kShapes[k];
                     const ops::Conv2dParams p{1 + k % 2, 1, 1};
                     const int64_t h = s[2] + 2, w = s[3] + 2;
                     const int64_t oh = ops::conv_output_size(h, 3, p), ow = ops::conv_output_size(w, 3, p);
                     Tensor gy = uniform_tensor({s[0], 3, oh, ow}, rng, -1.0, 1.0);
                     Tensor wt = uniform_tensor({3, s[1], 3, 3}, rng, -1.0, 1.0);
                     const uint64_t seed = rng.next_u64();
                     ScalarFn f = [p, h, w, seed](std::span<const Tensor> in) {
                       return contract(ops::conv2d_input_grad(in[0], in[1], h, w, p), seed);
                     };
                     return std::make_pair(std::vector<Tensor>{gy, wt}, f);
                   }});
  cases.push_back({"conv2d_weight_grad", [](int k, Rng& rng) {
                     const Shape& s = kShapes[k];
                     const ops::Conv2dParams p{1 + k % 2, 1, 1 + (k == 2)};
                     Tensor x = uniform_tensor({s[0], s[1], s[2] + 2, s[3] + 2}, rng, -1.0, 1.0);
                     const int64_t oh = ops::conv_output_size(x.dim(2), 3, p);
                     const int64_t ow = ops::conv_output_size(x.dim(3), 3, p);
                     Tensor gy = uniform_tensor({s[0], 2, oh, ow}, rng, -1.0, 1.0);
                     const uint64_t seed = rng.next_u64();
                     ScalarFn f = [p, seed](std::span<const Tensor> in) {
                       return contract(ops::conv2d_weight_grad(in[0], in[1], 3, 3, p), seed);
                     };
                     return std::make_pair(std::vector<Tensor>{x, gy}, f);
                   }});
  // Second-order path used by the gradient penalty.
  cases.push_back({"conv2d_double_backward", [](int k, Rng& rng) {
                     const Shape& s = kShapes[k];
                     const ops::Conv2dParams p{1 + k % 2, 1, 1};
                     Tensor x = uniform_tensor({s[0], s[1], s[2] + 2, s[3] + 2}, rng, -1.0, 1.0);
                     Tensor w = uniform_tensor({2, s[1], 3, 3}, rng, -1.0, 1.0);
                     ScalarFn f = [p](std::span<const Tensor> in) {
                       // Grad mode must be on for the inner gradient even while
                       // finite differences run without a tape.
                       GradModeGuard on(true);
                       Tensor y = ops::sigmoid(ops::conv2d(in[0], in[1], Tensor(), p));
                       Tensor g = grad(ops::sum(ops::square(y)), in.subspan(0, 1), true)[0];
                       return ops::sum(ops::square(g));
                     };
                     return std::make_pair(std::vector<Tensor>{x, w}, f);
                   }});
  return cases;
}

GradSuiteRow run_case(const OpCase& c, Rng& rng, const GradSuiteOptions& options) {
  GradSuiteRow row;
  row.name = c.name;
  const auto t0 = std::chrono::steady_clock::now();
  for (int k = 0; k < 3; ++k) {
    auto [inputs, f] = c.make(k, rng);
    const GradCheckResult r = grad_check(f, inputs, {options.eps, 0, 0});
    row.coords += r.coords_checked;
    row.kinks += r.kinks_skipped;
    if (!r.finite) {
      row.finite = false;
      row.error = r.error;
    }
    row.max_rel_error = std::max(row.max_rel_error, r.max_rel_error);
  }
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

// Rebinds a store's names to the tensors grad_check passes in.
ParamStore rebind(const ParamStore& names, std::span<const Tensor> tensors, size_t offset) {
  ParamStore out;
  size_t i = offset;
  for (const auto& [name, t] : names) out.add(name, tensors[i++]);
  return out;
}

GradSuiteRow run_composite(const std::string& name, std::vector<Tensor> inputs, const ScalarFn& f,
                           const GradSuiteOptions& options) {
  GradSuiteRow row;
  row.name = name;
  const auto t0 = std::chrono::steady_clock::now();
  const GradCheckResult r =
      grad_check(f, std::move(inputs), {options.eps, options.composite_coords, options.seed});
  row.max_rel_error = r.max_rel_error;
  row.coords = r.coords_checked;
  row.kinks = r.kinks_skipped;
  row.finite = r.finite;
  row.error = r.error;
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

}  // namespace

std::vector<GradSuiteRow> run_grad_suite(const GradSuiteOptions& options) {
  ops::PrecisionGuard precision(ops::ComputePrecision::f64);
  Rng rng(options.seed);
  std::vector<GradSuiteRow> rows;
  for (const auto& c : op_cases()) rows.push_back(run_case(c, rng, options));

  // Network composites at 1x3x16x16.
  GeneratorConfig gc;
  gc.image_size = 16;
  SaadConfig sc;
  const ParamStore gen = init_generator(gc, {options.seed + 1});
  const ParamStore disc = init_saad(sc, {options.seed + 2});
  const Tensor x = uniform_tensor({1, 3, 16, 16}, rng, 0.0, 1.0);
  std::vector<uint8_t> bits(256, 0);
  for (int y = 4; y < 11; ++y) {
    for (int xx = 3; xx < 9; ++xx) bits[static_cast<size_t>(y * 16 + xx)] = 1;
  }
  const Mask mask = Mask::from_bits(16, 16, bits);
  const Tensor x_mask = apply_mask(x, mask);

  {
    std::vector<Tensor> inputs;
    for (const auto& [n, t] : gen) inputs.push_back(t.clone());
    ScalarFn f = [&](std::span<const Tensor> in) {
      const ParamStore p = rebind(gen, in, 0);
      const Tensor x_final = compose_output(x_mask, generator_forward(gc, p, x_mask, mask), mask);
      return masked_mse(x, x_final, mask);
    };
    rows.push_back(run_composite("masked_mse(generator)", inputs, f, options));
  }
  {
    std::vector<Tensor> inputs{x.clone()};
    for (const auto& [n, t] : disc) inputs.push_back(t.clone());
    ScalarFn f = [&](std::span<const Tensor> in) {
      const ParamStore p = rebind(disc, in, 1);
      return seg_bce(saad_forward(sc, p, in[0]).logits, mask);
    };
    rows.push_back(run_composite("seg_bce(saad)", inputs, f, options));
  }
  {
    std::vector<Tensor> inputs;
    for (const auto& [n, t] : gen) inputs.push_back(t.clone());
    ParamStore frozen = disc.clone();
    frozen.set_requires_grad(false);
    ScalarFn f = [&](std::span<const Tensor> in) {
      const ParamStore p = rebind(gen, in, 0);
      const Tensor x_final = compose_output(x_mask, generator_forward(gc, p, x_mask, mask), mask);
      const DiscriminatorFn d = [&](const Tensor& img) { return saad_forward(sc, frozen, img).logits; };
      return generator_loss(d, DiscriminatorArm::saad, x, x_final, mask, LossWeights{}).total;
    };
    rows.push_back(run_composite("generator_loss", inputs, f, options));
  }
  {
    std::vector<Tensor> inputs;
    for (const auto& [n, t] : disc) inputs.push_back(t.clone());
    const Tensor fake = compose_output(x_mask, uniform_tensor({1, 3, 16, 16}, rng, 0.0, 1.0), mask);
    ScalarFn f = [&](std::span<const Tensor> in) {
      const ParamStore p = rebind(disc, in, 0);
      const DiscriminatorFn d = [&](const Tensor& img) { return saad_forward(sc, p, img).logits; };
      return discriminator_loss(d, DiscriminatorArm::saad, x, fake, mask, LossWeights{}).total;
    };
    rows.push_back(run_composite("discriminator_loss+R1", inputs, f, options));
  }
  return rows;
}

bool grad_row_passes(const GradSuiteRow& row, double tolerance) {
  const int64_t probed = row.coords + row.kinks;
  return row.finite && row.max_rel_error < tolerance && row.coords > 0 &&
         row.kinks * 100 <= probed * kMaxKinkPercent;
}

std::string format_grad_table(const std::vector<GradSuiteRow>& rows, double tolerance) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-28s %14s %8s %6s %9s %s\n", "check", "max_rel_error",
                "coords", "kinks", "seconds", "status");
  out += line;
  for (const auto& r : rows) {
    const char* status = grad_row_passes(r, tolerance) ? "PASS"
                         : r.finite                   ? "FAIL"
                                                      : "FAIL (non-finite)";
    std::snprintf(line, sizeof line, "%-28s %14.3e %8lld %6lld %9.2f %s\n", r.name.c_str(),
                  r.max_rel_error, static_cast<long long>(r.coords),
                  static_cast<long long>(r.kinks), r.seconds, status);
    out += line;
  }
  return out;
}

}  // namespace saad
