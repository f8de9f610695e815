#include <doctest.h>

#include "helpers.hpp"
#include "saad/grad_check.hpp"
#include "saad/ops.hpp"

using namespace saad;
using saad::testing::random_tensor;
using saad::testing::values;

namespace {

// Direct sliding-window definition, no im2col.
Tensor conv_reference(const Tensor& x, const Tensor& w, const Tensor& b, const ops::Conv2dParams& p) {
  const int64_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int64_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int64_t oh = ops::conv_output_size(h, kh, p), ow = ops::conv_output_size(wd, kw, p);
  std::vector<double> out(static_cast<size_t>(n * cout * oh * ow), 0.0);
  size_t o = 0;
  for (int64_t s = 0; s < n; ++s) {
    for (int64_t co = 0; co < cout; ++co) {
      for (int64_t oy = 0; oy < oh; ++oy) {
        for (int64_t ox = 0; ox < ow; ++ox) {
          double acc = b.defined() ? b.data()[static_cast<size_t>(co)] : 0.0;
          for (int64_t ci = 0; ci < cin; ++ci) {
            for (int64_t i = 0; i < kh; ++i) {
              for (int64_t j = 0; j < kw; ++j) {
                const int64_t y = oy * p.stride - p.padding + i * p.dilation;
                const int64_t xx = ox * p.stride - p.padding + j * p.dilation;
                if (y < 0 || y >= h || xx < 0 || xx >= wd) continue;
                acc += x.at(s, ci, y, xx) * w.at(co, ci, i, j);
              }
            }
          }
          out[o++] = acc;
        }
      }
    }
  }
  return Tensor::from_data({n, cout, oh, ow}, std::move(out));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace

TEST_CASE("conv2d: hand examples") {
  const Tensor ones3 = Tensor::ones({1, 1, 3, 3});
  const Tensor y = ops::conv2d(ones3, ones3, Tensor(), {1, 1, 1});
  CHECK(values(y) == std::vector<double>{4, 6, 4, 6, 9, 6, 4, 6, 4});

  const Tensor dilated = ops::conv2d(Tensor::ones({1, 1, 5, 5}), ones3, Tensor(), {1, 0, 2});
  CHECK(dilated.shape() == Shape{1, 1, 1, 1});
  CHECK(dilated.item() == 9.0);

  Rng rng(2);
  const Tensor x = random_tensor({2, 3, 7, 5}, rng);
  const Tensor z = ops::conv2d(x, Tensor::zeros({4, 3, 3, 3}), Tensor::zeros({4}), {2, 1, 1});
  for (double v : z.data()) CHECK(v == 0.0);
}

TEST_CASE("conv2d: output size rule and errors") {
  CHECK(ops::conv_output_size(64, 3, {1, 1, 1}) == 64);
  CHECK(ops::conv_output_size(64, 3, {2, 1, 1}) == 32);
  CHECK(ops::conv_output_size(8, 3, {1, 4, 4}) == 8);
  CHECK(ops::conv_output_size(5, 1, {2, 0, 1}) == 3);
  CHECK_THROWS_AS(ops::conv_output_size(2, 5, {1, 0, 1}), DimensionError);
  CHECK_THROWS_AS(ops::conv2d(Tensor::ones({1, 1, 3, 3}), Tensor::ones({1, 1, 3, 3}), Tensor(), {1, 0, 2}),
                  DimensionError);
  CHECK_THROWS_AS(ops::conv2d(Tensor::ones({1, 2, 3, 3}), Tensor::ones({1, 1, 3, 3}), Tensor(), {}),
                  ShapeError);
  CHECK_THROWS(ops::conv2d(Tensor::ones({1, 1, 3, 3}), Tensor::ones({1, 1, 1, 1}), Tensor(), {0, 0, 1}));
}

TEST_CASE("conv2d: matches the sliding-window definition") {
  Rng rng(5);
  struct Case {
    Shape x, w;
    ops::Conv2dParams p;
  };
  // Includes bands smaller than the image (64 rows x 48 in-channels) and odd sizes.
  const std::vector<Case> cases{
      {{2, 3, 9, 7}, {4, 3, 3, 3}, {1, 1, 1}},  {{2, 3, 9, 7}, {4, 3, 3, 3}, {2, 1, 1}},
      {{1, 2, 11, 10}, {3, 2, 3, 3}, {1, 2, 2}}, {{1, 2, 8, 8}, {3, 2, 3, 3}, {1, 4, 4}},
      {{3, 5, 6, 6}, {2, 5, 1, 1}, {1, 0, 1}},  {{3, 5, 6, 6}, {2, 5, 1, 1}, {2, 0, 1}},
      {{1, 48, 64, 64}, {4, 48, 3, 3}, {1, 1, 1}}, {{1, 2, 5, 9}, {2, 2, 2, 3}, {3, 0, 1}},
  };
  for (const auto& c : cases) {
    const Tensor x = random_tensor(c.x, rng);
    const Tensor w = random_tensor(c.w, rng);
    const Tensor b = random_tensor({c.w[0]}, rng);
    CHECK(max_abs_diff(ops::conv2d(x, w, b, c.p), conv_reference(x, w, b, c.p)) < 1e-12);
  }
}

TEST_CASE("conv2d: input and weight gradients are adjoints of the forward map") {
  // <conv(x, w), g> = <x, input_grad(g, w)> = <w, weight_grad(x, g)>
  Rng rng(8);
  for (ops::Conv2dParams p : {ops::Conv2dParams{1, 1, 1}, {2, 1, 1}, {1, 2, 2}, {2, 0, 1}}) {
    const Tensor x = random_tensor({2, 3, 10, 9}, rng);
    const Tensor w = random_tensor({4, 3, 3, 3}, rng);
    const Tensor y = ops::conv2d(x, w, Tensor(), p);
    const Tensor g = random_tensor(y.shape(), rng);
    auto dot = [](const Tensor& a, const Tensor& b) {
      double s = 0;
      for (size_t i = 0; i < a.data().size(); ++i) s += a.data()[i] * b.data()[i];
      return s;
    };
    const double lhs = dot(y, g);
    CHECK(dot(x, ops::conv2d_input_grad(g, w, 10, 9, p)) == doctest::Approx(lhs).epsilon(1e-12));
    CHECK(dot(w, ops::conv2d_weight_grad(x, g, 3, 3, p)) == doctest::Approx(lhs).epsilon(1e-12));
  }
}

TEST_CASE("conv2d: finite-difference gradients, including through the bias") {
  Rng rng(13);
  const Tensor x = random_tensor({2, 2, 6, 5}, rng);
  const Tensor w = random_tensor({3, 2, 3, 3}, rng);
  const Tensor b = random_tensor({3}, rng);
  const Tensor weights = random_tensor({2, 3, 3, 3}, rng);
  const auto r = grad_check(
      [&](std::span<const Tensor> in) {
        return ops::sum(ops::conv2d(in[0], in[1], in[2], {2, 1, 1}) * weights);
      },
      {x, w, b});
  CHECK(r.max_rel_error < 1e-8);
}

TEST_CASE("conv2d: f32 compute mode stays close to f64") {
  Rng rng(21);
  const Tensor x = random_tensor({2, 8, 16, 16}, rng);
  const Tensor w = random_tensor({8, 8, 3, 3}, rng, -0.2, 0.2);
  const Tensor ref = ops::conv2d(x, w, Tensor(), {1, 1, 1});
  Tensor lo;
  {
    ops::PrecisionGuard g(ops::ComputePrecision::f32);
    CHECK(ops::compute_precision() == ops::ComputePrecision::f32);
    lo = ops::conv2d(x, w, Tensor(), {1, 1, 1});
  }
  CHECK(ops::compute_precision() == ops::ComputePrecision::f64);
  CHECK(max_abs_diff(lo, ref) < 1e-4);
  CHECK(max_abs_diff(lo, ref) > 0.0);
}
