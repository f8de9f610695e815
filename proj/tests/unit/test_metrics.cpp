#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "saad/metrics.hpp"
#include "saad/ops.hpp"
#include "saad/text.hpp"

using namespace saad;
using saad::testing::random_tensor;

namespace {

int64_t reflect_index(int64_t i, int64_t n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * (n - 1) - i;
  return i;
}

// Per-pixel evaluation with the full 2-D window and centred moments.
double ssim_brute(const Tensor& x, const Tensor& y) {
  const int64_t c = x.dim(1), h = x.dim(2), w = x.dim(3);
  double g1[11], gsum = 0.0;
  for (int i = 0; i < 11; ++i) {
    g1[i] = std::exp(-(i - 5.0) * (i - 5.0) / (2.0 * 1.5 * 1.5));
    gsum += g1[i];
  }
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0.0;
  for (int64_t ch = 0; ch < c; ++ch) {
    double plane = 0.0;
    for (int64_t py = 0; py < h; ++py) {
      for (int64_t px = 0; px < w; ++px) {
        auto visit = [&](auto&& f) {
          for (int i = 0; i < 11; ++i) {
            for (int j = 0; j < 11; ++j) {
              const double wt = g1[i] * g1[j] / (gsum * gsum);
              const int64_t yy = reflect_index(py + i - 5, h), xx = reflect_index(px + j - 5, w);
              f(wt, x.at(0, ch, yy, xx), y.at(0, ch, yy, xx));
            }
          }
        };
        double mx = 0, my = 0;
        visit([&](double wt, double a, double b) {
          mx += wt * a;
          my += wt * b;
        });
        double vx = 0, vy = 0, cov = 0;
        visit([&](double wt, double a, double b) {
          vx += wt * (a - mx) * (a - mx);
          vy += wt * (b - my) * (b - my);
          cov += wt * (a - mx) * (b - my);
        });
        plane += (2 * mx * my + c1) * (2 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      }
    }
    total += plane / static_cast<double>(h * w);
  }
  return total / static_cast<double>(c);
}

Tensor flip_w(const Tensor& t) {
  std::vector<double> d(t.data().begin(), t.data().end());
  const int64_t w = t.dim(3);
  for (size_t row = 0; row < d.size(); row += static_cast<size_t>(w)) {
    std::reverse(d.begin() + static_cast<std::ptrdiff_t>(row), d.begin() + static_cast<std::ptrdiff_t>(row) + w);
  }
  return Tensor::from_data(t.shape(), d);
}

}  // namespace

TEST_CASE("psnr: closed forms") {
  const Tensor a = Tensor::full({1, 3, 8, 8}, 0.3);
  CHECK(psnr(a, Tensor::full({1, 3, 8, 8}, 0.4)) == doctest::Approx(20.0).epsilon(1e-11));
  CHECK(std::abs(psnr(a, Tensor::full({1, 3, 8, 8}, 0.4)) - 20.0) < 1e-9);
  CHECK(psnr(Tensor::zeros({1, 1, 4, 4}), Tensor::ones({1, 1, 4, 4})) == 0.0);
  CHECK(psnr(a, a) == kInfinitePsnr);
  CHECK_THROWS_AS(psnr(a, Tensor::zeros({1, 3, 8, 7})), ShapeError);
}

TEST_CASE("psnr_masked: only holes count") {
  const Tensor x = Tensor::zeros({1, 1, 2, 2});
  const Tensor y = Tensor::from_data({1, 1, 2, 2}, {0.1, 0.9, 0.9, 0.9});
  CHECK(std::abs(psnr_masked(x, y, Mask::from_bits(2, 2, {1, 0, 0, 0})) - 20.0) < 1e-9);
  CHECK(psnr_masked(x, y, Mask::zeros(1, 2, 2)) == kInfinitePsnr);
}

TEST_CASE("psnr: strictly decreasing in noise amplitude") {
  Rng rng(1);
  const Tensor x = random_tensor({1, 3, 16, 16}, rng, 0.2, 0.8);
  const Tensor u = random_tensor({1, 3, 16, 16}, rng, -1.0, 1.0);
  double prev = kInfinitePsnr;
  for (double amp : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    const double p = psnr(x, x + ops::scale(u, amp));
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("ssim: constant images, identity, symmetry, range") {
  const double want = (2 * 0.125 + 1e-4) / (0.3125 + 1e-4);
  const double got = ssim(Tensor::full({1, 3, 16, 16}, 0.5), Tensor::full({1, 3, 16, 16}, 0.25));
  CHECK(std::abs(got - want) < 1e-12);
  CHECK(std::abs(got - 0.80006) < 1e-4);

  Rng rng(2);
  for (int t = 0; t < 5; ++t) {
    const Tensor x = random_tensor({1, 3, 20, 24}, rng, 0.0, 1.0);
    const Tensor y = random_tensor({1, 3, 20, 24}, rng, 0.0, 1.0);
    CHECK(std::abs(ssim(x, x) - 1.0) < 1e-12);
    const double s = ssim(x, y);
    CHECK(std::abs(s - ssim(y, x)) < 1e-12);
    CHECK(s >= -1.0);
    CHECK(s < 1.0);
    CHECK(std::abs(s - ssim(flip_w(x), flip_w(y))) < 1e-12);
    CHECK(psnr(x, y) == doctest::Approx(psnr(flip_w(x), flip_w(y))).epsilon(1e-14));
  }
  CHECK_THROWS_AS(ssim(Tensor::zeros({1, 1, 10, 16}), Tensor::zeros({1, 1, 10, 16})), DimensionError);
  CHECK_THROWS_AS(ssim(Tensor::zeros({2, 1, 16, 16}), Tensor::zeros({2, 1, 16, 16})), ShapeError);
}

TEST_CASE("ssim: agrees with a brute-force evaluation on three 16x16 pairs") {
  Rng rng(3);
  // Smooth-vs-noisy, structured, and anti-correlated pairs.
  std::vector<std::pair<Tensor, Tensor>> pairs;
  {
    const Tensor x = random_tensor({1, 3, 16, 16}, rng, 0.0, 1.0);
    pairs.emplace_back(x, x + ops::scale(random_tensor({1, 3, 16, 16}, rng), 0.05));
  }
  {
    std::vector<double> a(256), b(256);
    for (int i = 0; i < 16; ++i) {
      for (int j = 0; j < 16; ++j) {
        a[static_cast<size_t>(i * 16 + j)] = 0.5 + 0.4 * std::sin(0.7 * j) * std::cos(0.3 * i);
        b[static_cast<size_t>(i * 16 + j)] = (i / 4 + j / 4) % 2 ? 0.8 : 0.1;
      }
    }
    pairs.emplace_back(Tensor::from_data({1, 1, 16, 16}, a), Tensor::from_data({1, 1, 16, 16}, b));
  }
  {
    const Tensor x = random_tensor({1, 2, 16, 16}, rng, 0.0, 1.0);
    pairs.emplace_back(x, ops::add_scalar(ops::scale(x, -1.0), 1.0));
  }
  for (const auto& [x, y] : pairs) CHECK(std::abs(ssim(x, y) - ssim_brute(x, y)) < 1e-10);
}

TEST_CASE("gaussian window") {
  const auto g = gaussian_window(11, 1.5);
  double s = 0.0;
  for (double v : g) s += v;
  CHECK(std::abs(s - 1.0) < 1e-15);
  CHECK(g[5] == *std::max_element(g.begin(), g.end()));
  CHECK(g[0] == g[10]);
  CHECK_THROWS(gaussian_window(10, 1.5));
}

TEST_CASE("coverage") {
  CHECK(coverage(Mask::zeros(2, 4, 4)) == 1.0);
  CHECK(coverage(Mask::from_bits(2, 2, {1, 0, 1, 0})) == 0.5);
  const Mask two = Mask::stack({Mask::ones(1, 2, 2), Mask::zeros(1, 2, 2)});
  CHECK(coverage(two) == 0.5);
  CHECK(coverage(two, 0) == 0.0);
  CHECK(coverage(two, 1) == 1.0);
}

TEST_CASE("pixel_auc: pairwise definition") {
  CHECK(pixel_auc({0.9, 0.8, 0.1, 0.2}, {1, 1, 0, 0}) == 1.0);
  CHECK(pixel_auc({0.1, 0.2, 0.9, 0.8}, {1, 1, 0, 0}) == 0.0);
  CHECK(pixel_auc({0.5, 0.5, 0.5}, {1, 0, 0}) == 0.5);
  CHECK_THROWS(pixel_auc({0.1, 0.2}, {1, 1}));

  Rng rng(4);
  std::vector<double> s(300);
  std::vector<uint8_t> l(300);
  for (size_t i = 0; i < s.size(); ++i) {
    l[i] = rng.uniform() < 0.3;
    s[i] = std::round(10.0 * (rng.uniform() + 0.3 * l[i])) / 10.0;  // coarse, many ties
  }
  double wins = 0, pairs = 0;
  for (size_t i = 0; i < s.size(); ++i) {
    for (size_t j = 0; j < s.size(); ++j) {
      if (!l[i] || l[j]) continue;
      pairs += 1;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  CHECK(pixel_auc(s, l) == doctest::Approx(wins / pairs).epsilon(1e-13));
}

TEST_CASE("summaries and CSV") {
  std::vector<MetricsRecord> rs(3);
  rs[0] = {"a", "saad", 0.8, 20.0, 0.9, "c"};
  rs[1] = {"b", "saad", 0.7, 22.0, 0.8, "c"};
  rs[2] = {"c", "saad", 0.6, 24.0, 0.7, "c"};
  const MetricsSummary s = summarize(rs);
  CHECK(s.count == 3);
  CHECK(s.psnr_mean == doctest::Approx(22.0).epsilon(1e-15));
  CHECK(s.psnr_std == doctest::Approx(std::sqrt(8.0 / 3.0)).epsilon(1e-14));
  CHECK(s.ssim_mean == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(s.coverage_mean == doctest::Approx(0.7).epsilon(1e-14));
  CHECK(s.infinite_psnr == 0);

  rs[1].psnr_db = kInfinitePsnr;
  const MetricsSummary si = summarize(rs);
  CHECK(si.infinite_psnr == 1);
  CHECK(std::isinf(si.psnr_mean));
  CHECK(si.psnr_std == 0.0);

  const std::string csv = metrics_csv(rs);
  const auto lines = split(csv, '\n');
  CHECK(lines[0] == kMetricsCsvHeader);
  CHECK(lines[2] == "b,saad,0.7,inf,0.8");
  CHECK(parse_double(split(lines[1], ',')[3]) == 20.0);
  CHECK(std::isinf(parse_double("inf")));

  const std::string sweep = sweep_csv({{0.45, "saad", 18.5, 0.6}});
  CHECK(sweep == std::string(kSweepCsvHeader) + "\n0.45,saad,18.5,0.6\n");
}
