#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "saad/grad_check.hpp"
#include "saad/grad_suite.hpp"
#include "saad/ops.hpp"

using namespace saad;
using saad::testing::random_tensor;
using saad::testing::values;

namespace {

Tensor leaf(Shape shape, std::vector<double> v) {
  Tensor t = Tensor::from_data(std::move(shape), std::move(v));
  t.set_requires_grad(true);
  return t;
}

}  // namespace

TEST_CASE("activations: fixed values") {
  CHECK(ops::sigmoid(Tensor::scalar(0.0)).item() == 0.5);
  CHECK(ops::leaky_relu(Tensor::scalar(-2.0), 0.2).item() == doctest::Approx(-0.4).epsilon(1e-15));
  CHECK(ops::relu(Tensor::scalar(-2.0)).item() == 0.0);
  const double hi = ops::sigmoid(Tensor::scalar(40.0)).item();
  const double lo = ops::sigmoid(Tensor::scalar(-40.0)).item();
  CHECK(std::abs(hi - 1.0) < 1e-15);
  CHECK(lo >= 0.0);
  CHECK(lo < 1e-15);
  // Far tails stay finite.
  CHECK(std::isfinite(ops::sigmoid(Tensor::scalar(-800.0)).item()));
  CHECK_THROWS(ops::leaky_relu(Tensor::scalar(1.0), 1.5));
}

TEST_CASE("elementwise: mask identities and product rule") {
  Rng rng(3);
  const Tensor x = random_tensor({2, 3, 4, 4}, rng);
  const Tensor zeros = Tensor::zeros({2, 3, 4, 4});
  const Tensor ones = Tensor::ones({2, 3, 4, 4});
  CHECK((x * (1.0 - zeros)).bitwise_equal(x));
  const Tensor killed = x * (1.0 - ones);
  for (double v : killed.data()) CHECK(v == 0.0);

  Tensor a = leaf({1}, {2.0});
  Tensor b = leaf({1}, {3.0});
  backward(ops::sum(a * b));
  CHECK(a.grad().item() == 3.0);
  CHECK(b.grad().item() == 2.0);
  CHECK_THROWS_AS(ops::add(Tensor::zeros({2}), Tensor::zeros({3})), ShapeError);
}

TEST_CASE("concat_channels: order, identity and split gradient") {
  Tensor a = leaf({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor b = leaf({1, 1, 2, 2}, {5, 6, 7, 8});
  const Tensor c = ops::concat_channels({a, b});
  CHECK(c.shape() == Shape{1, 2, 2, 2});
  CHECK(values(c) == std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
  CHECK(ops::concat_channels({a}).bitwise_equal(a));
  backward(ops::sum(c));
  CHECK(values(a.grad()) == std::vector<double>(4, 1.0));
  CHECK(values(b.grad()) == std::vector<double>(4, 1.0));
}

TEST_CASE("upsample_nearest: replication and adjoint") {
  Tensor x = leaf({1, 1, 2, 2}, {1, 2, 3, 4});
  const Tensor y = ops::upsample_nearest(x, 2);
  CHECK(values(y) == std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4});
  CHECK(ops::upsample_nearest(x, 1).bitwise_equal(x));
  backward(ops::sum(y));
  CHECK(values(x.grad()) == std::vector<double>(4, 4.0));
}

TEST_CASE("reductions") {
  Tensor x = leaf({4}, {1, 2, 3, 4});
  CHECK(ops::mean(x).item() == 2.5);

  Tensor y = leaf({8}, std::vector<double>(8, 1.7));
  backward(ops::mean(y));
  for (double g : y.grad().data()) CHECK(g == 0.125);

  std::vector<double> m(16, 0.0);
  for (int i : {0, 3, 5, 6, 9, 12, 15}) m[static_cast<size_t>(i)] = 1.0;
  const Tensor mask = Tensor::from_data({1, 1, 4, 4}, m);
  CHECK(ops::masked_sum(Tensor::ones({1, 1, 4, 4}), mask).item() == 7.0);

  ops::MaskedReduceInfo info;
  const Tensor empty = ops::masked_mean(Tensor::ones({1, 2, 4, 4}), Tensor::zeros({1, 1, 4, 4}), &info);
  CHECK(empty.item() == 0.0);
  CHECK(info.degenerate);
}

TEST_CASE("backward: hand-derived gradients") {
  Tensor x = leaf({4}, {0.3, -1.0, 2.0, 0.0});
  backward(ops::sum(x));
  CHECK(values(x.grad()) == std::vector<double>(4, 1.0));

  Tensor z = leaf({4}, std::vector<double>(4, 0.0));
  backward(ops::mean(ops::sigmoid(z)));
  for (double g : z.grad().data()) CHECK(g == doctest::Approx(0.0625).epsilon(1e-15));

  Tensor w = leaf({3}, {1, 2, 3});
  backward(ops::sum(w + w));
  CHECK(values(w.grad()) == std::vector<double>(3, 2.0));
}

TEST_CASE("backward accumulates across calls; grad() does not touch .grad") {
  Tensor x = leaf({2}, {1, 2});
  backward(ops::sum(ops::square(x)));
  backward(ops::sum(ops::square(x)));
  CHECK(values(x.grad()) == std::vector<double>{4, 8});

  Tensor y = leaf({2}, {1, 2});
  const Tensor root = ops::sum(ops::square(y));
  const Tensor g = grad(root, std::span<const Tensor>(&y, 1))[0];
  CHECK(values(g) == std::vector<double>{2, 4});
  CHECK_FALSE(y.grad().defined());

  // Unused input gets zeros.
  Tensor u = leaf({3}, {1, 1, 1});
  const std::vector<Tensor> both{y, u};
  const auto gs = grad(ops::sum(y), both);
  CHECK(values(gs[1]) == std::vector<double>(3, 0.0));
}

TEST_CASE("double backward: d/dx of (d/dx x^3) = 6x") {
  Tensor x = leaf({3}, {0.5, -1.0, 2.0});
  const Tensor y = ops::sum(x * x * x);
  const Tensor g = grad(y, std::span<const Tensor>(&x, 1), true)[0];
  CHECK(g.requires_grad());
  const Tensor gg = grad(ops::sum(g), std::span<const Tensor>(&x, 1))[0];
  const auto v = values(gg);
  CHECK(v[0] == doctest::Approx(3.0));
  CHECK(v[1] == doctest::Approx(-6.0));
  CHECK(v[2] == doctest::Approx(12.0));
}

TEST_CASE("grad mode: no tape under NoGradGuard") {
  Tensor x = leaf({2}, {1, 2});
  {
    NoGradGuard off;
    const Tensor y = ops::square(x);
    CHECK_FALSE(y.requires_grad());
    CHECK(y.grad_fn() == nullptr);
  }
  CHECK(ops::square(x).requires_grad());
  CHECK(grad_enabled());
}

TEST_CASE("finite checks raise on non-finite results") {
  CHECK(finite_checks_enabled());
  const Tensor big = Tensor::full({2}, 1e200);
  CHECK_THROWS_AS(ops::mul(big, big), NonFiniteError);
  set_finite_checks_enabled(false);
  CHECK(std::isinf(ops::mul(big, big).data()[0]));
  set_finite_checks_enabled(true);
}

TEST_CASE("leaves are writable, recorded outputs are not") {
  Tensor x = Tensor::zeros({2});
  x.mutable_data()[0] = 1.0;
  x.set_requires_grad(true);
  CHECK(x.data()[0] == 1.0);
  Tensor y = ops::add_scalar(x, 1.0);
  CHECK_THROWS(y.mutable_data());
  CHECK_THROWS(y.set_requires_grad(false));
  Tensor d = y.detach();
  CHECK(d.is_leaf());
  CHECK(d.data()[1] == 1.0);
}

TEST_CASE("grad_check: oracles") {
  Rng rng(11);
  SUBCASE("constant function") {
    const Tensor x = random_tensor({3, 2}, rng);
    const auto r = grad_check([](std::span<const Tensor>) { return Tensor::scalar(1.5); }, {x});
    CHECK(r.max_rel_error == 0.0);
    CHECK(r.coords_checked == 6);
  }
  SUBCASE("masked mse on 2x3x8x8") {
    const Tensor x = random_tensor({2, 3, 8, 8}, rng, 0.0, 1.0);
    const Tensor y = random_tensor({2, 3, 8, 8}, rng, 0.0, 1.0);
    std::vector<double> m(128);
    for (auto& v : m) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
    const Tensor mask = Tensor::from_data({2, 1, 8, 8}, m);
    const auto r = grad_check(
        [&](std::span<const Tensor> in) { return ops::masked_mean(ops::square(in[0] - in[1]), mask); },
        {x, y});
    CHECK(r.finite);
    CHECK(r.max_rel_error < 1e-6);
  }
  SUBCASE("a wrong backward rule is caught") {
    // sum(x^2) with a gradient deliberately scaled by 1.5.
    const Tensor x = random_tensor({5}, rng);
    const auto f = [](std::span<const Tensor> in) {
      const Tensor x2 = ops::square(in[0]);
      return detail::make_result("bad", {}, {ops::sum(x2).item()}, {in[0]},
                                 [x = in[0]](const Tensor& g, const std::vector<bool>&) {
                                   return std::vector<Tensor>{
                                       ops::scale(ops::expand_scalar(g, x.shape()) * x, 3.0)};
                                 });
    };
    CHECK(grad_check(f, {x}).max_rel_error > 0.1);
  }
}

TEST_CASE("kink trace: probes on both sides of a relu kink are skipped") {
  // relu at exactly 0: the central difference gives the midpoint slope 0.5
  // while either one-sided derivative is 0 or 1.
  const Tensor x = Tensor::from_data({2}, {0.0, 0.7});
  const auto f = [](std::span<const Tensor> in) { return ops::sum(ops::relu(in[0])); };
  const auto skipped = grad_check(f, {x});
  CHECK(skipped.kinks_skipped == 1);
  CHECK(skipped.coords_checked == 1);
  CHECK(skipped.max_rel_error < 1e-9);

  GradCheckOptions raw;
  raw.skip_kinks = false;
  const auto unskipped = grad_check(f, {x.clone()}, raw);
  CHECK(unskipped.max_rel_error == doctest::Approx(0.5).epsilon(1e-6));

  ops::KinkTrace a;
  ops::relu(Tensor::from_data({3}, {1, -1, 2}));
  ops::KinkTrace b;
  ops::relu(Tensor::from_data({3}, {1, -1, 3}));
  CHECK(a.signature() == b.signature());
  ops::KinkTrace c;
  ops::relu(Tensor::from_data({3}, {1, 1, 2}));
  CHECK(c.signature() != b.signature());
}

TEST_CASE("gradient suite: every row passes at 64-bit") {
  const auto rows = run_grad_suite();
  CHECK(rows.size() >= 30);
  for (const auto& r : rows) {
    INFO(r.name);
    CHECK(grad_row_passes(r, 1e-4));
  }
}
