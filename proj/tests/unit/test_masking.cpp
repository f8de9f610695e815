#include <doctest.h>

#include <bit>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "helpers.hpp"
#include "saad/masking.hpp"
#include "saad/metrics.hpp"
#include "saad/ops.hpp"

using namespace saad;
using saad::testing::random_tensor;
using saad::testing::scratch_dir;

TEST_CASE("Mask: binarity and shape are enforced") {
  CHECK_THROWS(Mask::from_tensor(Tensor::full({1, 1, 2, 2}, 0.5)));
  CHECK_THROWS_AS(Mask::from_tensor(Tensor::zeros({1, 2, 2, 2})), ShapeError);
  CHECK_THROWS(Mask::from_bits(2, 2, {1, 0, 0}));
  const Mask m = Mask::from_bits(2, 3, {1, 0, 0, 1, 1, 0});
  CHECK(m.hole_count() == 3);
  CHECK(m.hole_fraction() == 0.5);
  CHECK(m.bits(0) == std::vector<uint8_t>{1, 0, 0, 1, 1, 0});
  const Mask s = Mask::stack({m, Mask::zeros(1, 2, 3)});
  CHECK(s.batch() == 2);
  CHECK(s.sample(1) == Mask::zeros(1, 2, 3));
}

TEST_CASE("rectangles: 10,000 masks at 64x64 stay in [0.15, 0.30] with 1..5 rectangles") {
  Rng rng(2024);
  int64_t fallbacks = 0;
  std::vector<int64_t> count_hist(6, 0);
  for (int i = 0; i < 10000; ++i) {
    const RectMaskSample s = sample_rect_masks(64, 64, rng);
    const double f = s.mask.hole_fraction();
    REQUIRE(f >= 0.15);
    REQUIRE(f <= 0.30);
    REQUIRE(s.rect_count >= 1);
    REQUIRE(s.rect_count <= 5);
    for (double v : s.mask.tensor().data()) REQUIRE((v == 0.0 || v == 1.0));
    ++count_hist[static_cast<size_t>(s.rect_count)];
    fallbacks += s.used_fallback;
  }
  // Every count occurs; k is drawn uniformly before rejection.
  for (int k = 1; k <= 5; ++k) CHECK(count_hist[static_cast<size_t>(k)] > 1000);
  CHECK(fallbacks < 100);
}

TEST_CASE("rectangles: same seed, same mask") {
  Rng a(77), b(77);
  for (int i = 0; i < 20; ++i) CHECK(sample_rect_masks(64, 48, a).mask == sample_rect_masks(64, 48, b).mask);
  CHECK_THROWS(sample_rect_masks(4, 64, a));
}

TEST_CASE("rectangles: fallback is one centred rectangle near 20%") {
  RectMaskParams p;
  p.max_rects = 1;
  p.min_hole_fraction = 0.9;  // unreachable with one rectangle of at most half each side
  p.max_hole_fraction = 0.95;
  p.max_rounds = 5;
  Rng rng(1);
  const RectMaskSample s = sample_rect_masks(64, 64, rng, p);
  CHECK(s.used_fallback);
  CHECK(s.rect_count == 1);
  CHECK(s.mask.hole_count() == 29 * 28);
  // centred: rows 17..45, columns 18..45
  CHECK(s.mask.hole(0, 17, 18));
  CHECK(s.mask.hole(0, 45, 45));
  CHECK_FALSE(s.mask.hole(0, 16, 18));
  CHECK_FALSE(s.mask.hole(0, 17, 46));
  Rng again(1);
  CHECK(sample_rect_masks(64, 64, again, p).mask == s.mask);
}

TEST_CASE("stripes: closed-form coverage") {
  const Mask six = borehole_stripes(8, 256, 6, 16, 0);
  CHECK(six.hole_fraction() == 96.0 / 256.0);
  CHECK(six.hole_fraction() == 0.375);
  CHECK(coverage(six) == 0.625);

  const Mask one = borehole_stripes(4, 64, 1, 63, 5);
  CHECK(coverage(one) == 1.0 / 64.0);

  for (int64_t n : {1, 2, 3, 4, 5, 7}) {
    for (int64_t w : {1, 2, 3, 5}) {
      if (n * w >= 64) continue;
      // Non-overlap needs w <= floor(64/n) spacing; every layout here satisfies it.
      const Mask m = borehole_stripes(16, 64, n, w, 11);
      CHECK(m.hole_count() == 16 * n * w);
    }
  }
  CHECK_THROWS(borehole_stripes(8, 64, 4, 16, 0));
  CHECK(borehole_stripes(8, 10, 3, 3, 0).hole_count() == 72);
}

TEST_CASE("stripes: phase shifts support, full height") {
  const Mask a = borehole_stripes(16, 64, 4, 3, 0);
  const Mask b = borehole_stripes(16, 64, 4, 3, 16);
  CHECK(a.hole_count() == b.hole_count());
  // Shifting by the spacing maps the stripe set to itself.
  CHECK(a == b);
  const Mask c = borehole_stripes(16, 64, 4, 3, 5);
  CHECK(c.hole_count() == a.hole_count());
  CHECK_FALSE(c == a);
  for (int64_t x = 0; x < 64; ++x) {
    CHECK(c.hole(0, 0, x) == c.hole(0, 9, x));
    CHECK(c.hole(0, 0, x) == a.hole(0, 0, (x - 5 + 64) % 64));
  }
  // Wrap-around across the right border.
  const Mask w = borehole_stripes(2, 16, 1, 4, 14);
  CHECK(w.bits(0)[14] == 1);
  CHECK(w.bits(0)[15] == 1);
  CHECK(w.bits(0)[0] == 1);
  CHECK(w.bits(0)[1] == 1);
  CHECK(w.hole_count() == 8);
}

TEST_CASE("stripe layouts for the sweep levels at w = 64") {
  const auto a = stripe_layout_for_coverage(64, 0.45);
  CHECK(a.n_stripes * a.stripe_width == 35);
  const auto b = stripe_layout_for_coverage(64, 0.65);
  CHECK(b.n_stripes * b.stripe_width == 22);
  const auto c = stripe_layout_for_coverage(64, 0.85);
  CHECK(c.n_stripes * c.stripe_width == 10);
  CHECK(stripe_layout_for_coverage(64, 1.0).n_stripes == 0);
  CHECK_THROWS(stripe_layout_for_coverage(64, 0.0));
}

TEST_CASE("apply_mask: partition identity and exact copy") {
  Rng rng(3);
  const Tensor x = random_tensor({2, 3, 16, 16}, rng, 0.0, 1.0);
  CHECK(apply_mask(x, Mask::zeros(2, 16, 16)).bitwise_equal(x));
  const Tensor all_holes = apply_mask(x, Mask::ones(2, 16, 16));
  for (double v : all_holes.data()) CHECK(v == 0.0);

  MaskSuiteParams p;
  p.height = p.width = 16;
  const Mask r = Mask::stack(build_mask_suite(p, 9, 2).masks);
  const Tensor xm = apply_mask(x, r);
  const Tensor back = xm + x * ops::repeat_channels(r.tensor(), 3);
  for (size_t i = 0; i < x.data().size(); ++i) CHECK(back.data()[i] == x.data()[i]);
  for (int64_t c = 0; c < 3; ++c) {
    for (int64_t i = 0; i < 16; ++i) {
      for (int64_t j = 0; j < 16; ++j) {
        if (!r.hole(1, i, j)) {
          CHECK(std::bit_cast<uint64_t>(xm.at(1, c, i, j)) == std::bit_cast<uint64_t>(x.at(1, c, i, j)));
        }
      }
    }
  }
}

TEST_CASE("apply_mask: observed-mean fill") {
  const Tensor x = Tensor::from_data({1, 1, 2, 2}, {0.2, 0.4, 0.9, 0.6});
  const Mask m = Mask::from_bits(2, 2, {0, 0, 1, 0});
  const Tensor f = apply_mask(x, m, FillMode::observed_mean);
  CHECK(f.at(0, 0, 1, 0) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(f.at(0, 0, 0, 0) == 0.2);
  CHECK(apply_mask(x, m, 0.25).at(0, 0, 1, 0) == 0.25);
}

TEST_CASE("mask suites: determinism, prefixes, seeds differ") {
  MaskSuiteParams p;
  const MaskSuite a = build_mask_suite(p, 1, 100);
  const MaskSuite b = build_mask_suite(p, 1, 100);
  const MaskSuite small = build_mask_suite(p, 1, 10);
  const MaskSuite other = build_mask_suite(p, 2, 100);
  int differ = 0;
  for (size_t i = 0; i < 100; ++i) {
    CHECK(a.masks[i] == b.masks[i]);
    if (i < 10) CHECK(a.masks[i] == small.masks[i]);
    differ += !(a.masks[i] == other.masks[i]);
  }
  CHECK(differ >= 99);

  p.kind = MaskKind::stripes;
  p.n_stripes = 6;
  p.stripe_width = 3;
  for (const Mask& m : build_mask_suite(p, 3, 20).masks) CHECK(m.hole_count() == 64 * 18);
  p.kind = MaskKind::fixed_coverage;
  p.coverage = 0.85;
  for (const Mask& m : build_mask_suite(p, 3, 20).masks) CHECK(m.hole_count() == 64 * 10);
  CHECK(parse_mask_kind(to_string(MaskKind::fixed_coverage)) == MaskKind::fixed_coverage);
}

TEST_CASE("mask suites: file round-trip and corruption") {
  const std::string dir = scratch_dir("masks");
  MaskSuiteParams p;
  p.height = 32;
  p.width = 48;
  const MaskSuite s = build_mask_suite(p, 12, 25);
  const std::string path = dir + "/suite.bin";
  save_mask_suite(s, path);
  const MaskSuite l = load_mask_suite(path);
  CHECK(l.seed == 12);
  CHECK(l.params == p);
  REQUIRE(l.masks.size() == 25);
  for (size_t i = 0; i < 25; ++i) CHECK(l.masks[i] == s.masks[i]);
  // Regenerating from the stored seed and params matches the file.
  const MaskSuite regen = build_mask_suite(l.params, l.seed, 25);
  for (size_t i = 0; i < 25; ++i) CHECK(regen.masks[i] == l.masks[i]);

  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  bytes[bytes.size() / 2] ^= 0x10;
  {
    std::ofstream out(dir + "/bad.bin", std::ios::binary);
    out << bytes;
  }
  CHECK_THROWS(load_mask_suite(dir + "/bad.bin"));
  {
    std::ofstream out(dir + "/short.bin", std::ios::binary);
    out << bytes.substr(0, 20);
  }
  CHECK_THROWS(load_mask_suite(dir + "/short.bin"));
  CHECK_THROWS(load_mask_suite(dir + "/missing.bin"));

  save_mask_png(s.masks[0], 0, dir + "/m.png");
  CHECK(std::filesystem::file_size(dir + "/m.png") > 0);
}
