#include "saad/masking.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>

#include "saad/binary_io.hpp"
#include "saad/image_io.hpp"
#include "saad/ops.hpp"

namespace saad {

namespace {

constexpr std::string_view kSuiteMagic = "SAADMASK";
constexpr uint32_t kSuiteVersion = 1;

Tensor mask_tensor(int64_t h, int64_t w, std::vector<double> values) {
  return Tensor::from_data({1, 1, h, w}, std::move(values));
}

}  // namespace

Mask Mask::zeros(int64_t batch, int64_t height, int64_t width) {
  return Mask(Tensor::zeros({batch, 1, height, width}));
}

Mask Mask::ones(int64_t batch, int64_t height, int64_t width) {
  return Mask(Tensor::ones({batch, 1, height, width}));
}

Mask Mask::from_tensor(const Tensor& t) {
  if (t.rank() != 4 || t.dim(1) != 1) {
    throw ShapeError("mask must have shape [N,1,H,W], got " + shape_to_string(t.shape()));
  }
  for (double v : t.data()) {
    if (v != 0.0 && v != 1.0) throw std::invalid_argument("mask values must be exactly 0 or 1");
  }
  return Mask(t.detach());
}

Mask Mask::from_bits(int64_t height, int64_t width, const std::vector<uint8_t>& bits) {
  if (static_cast<int64_t>(bits.size()) != height * width) {
    throw ShapeError("mask bit count does not match its size");
  }
  std::vector<double> v(bits.size());
  for (size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] > 1) throw std::invalid_argument("mask bits must be 0 or 1");
    v[i] = bits[i];
  }
  return Mask(mask_tensor(height, width, std::move(v)));
}

Mask Mask::stack(const std::vector<Mask>& masks) {
  if (masks.empty()) throw std::invalid_argument("cannot stack zero masks");
  const int64_t h = masks[0].height(), w = masks[0].width();
  int64_t n = 0;
  std::vector<double> v;
  for (const auto& m : masks) {
    if (m.height() != h || m.width() != w) throw ShapeError("stacked masks differ in size");
    v.insert(v.end(), m.t_.data().begin(), m.t_.data().end());
    n += m.batch();
  }
  return Mask(Tensor::from_data({n, 1, h, w}, std::move(v)));
}

Mask Mask::sample(int64_t index) const {
  const int64_t plane = height() * width();
  const auto d = t_.data();
  std::vector<double> v(d.begin() + index * plane, d.begin() + (index + 1) * plane);
  return Mask(mask_tensor(height(), width(), std::move(v)));
}

int64_t Mask::hole_count() const {
  int64_t n = 0;
  for (double v : t_.data()) n += v != 0.0;
  return n;
}

double Mask::hole_fraction() const {
  return static_cast<double>(hole_count()) / static_cast<double>(t_.numel());
}

std::vector<uint8_t> Mask::bits(int64_t index) const {
  const int64_t plane = height() * width();
  const auto d = t_.data();
  std::vector<uint8_t> out(static_cast<size_t>(plane));
  for (int64_t i = 0; i < plane; ++i) out[static_cast<size_t>(i)] = d[index * plane + i] != 0.0;
  return out;
}

RectMaskSample sample_rect_masks(int64_t height, int64_t width, Rng& rng,
                                 const RectMaskParams& params) {
  if (height < 8 || width < 8) throw std::invalid_argument("rectangle masks need h, w >= 8");
  const auto side_range = [&](int64_t side) {
    const int64_t lo = std::max<int64_t>(1, static_cast<int64_t>(side * params.min_side_fraction));
    const int64_t hi = std::max(lo, static_cast<int64_t>(side * params.max_side_fraction));
    return std::pair{lo, hi};
  };
  const auto [h_lo, h_hi] = side_range(height);
  const auto [w_lo, w_hi] = side_range(width);
  const double total = static_cast<double>(height * width);

  const int64_t k = rng.uniform_int(1, params.max_rects);
  std::vector<uint8_t> bits(static_cast<size_t>(height * width));
  for (int64_t round = 0; round < params.max_rounds; ++round) {
    std::fill(bits.begin(), bits.end(), 0);
    for (int64_t r = 0; r < k; ++r) {
      const int64_t rh = rng.uniform_int(h_lo, h_hi);
      const int64_t rw = rng.uniform_int(w_lo, w_hi);
      const int64_t top = rng.uniform_int(0, height - rh);
      const int64_t left = rng.uniform_int(0, width - rw);
      for (int64_t y = top; y < top + rh; ++y) {
        std::fill_n(bits.begin() + y * width + left, rw, 1);
      }
    }
    const auto holes = std::count(bits.begin(), bits.end(), 1);
    const double frac = static_cast<double>(holes) / total;
    if (frac >= params.min_hole_fraction && frac <= params.max_hole_fraction) {
      return {Mask::from_bits(height, width, bits), k, false};
    }
  }

  // Fallback: one centered rectangle with area closest to 20%.
  const double target = 0.2 * total;
  int64_t rh = std::clamp<int64_t>(std::llround(std::sqrt(target * height / width)), 1, height);
  int64_t rw = std::clamp<int64_t>(std::llround(target / static_cast<double>(rh)), 1, width);
  std::fill(bits.begin(), bits.end(), 0);
  const int64_t top = (height - rh) / 2, left = (width - rw) / 2;
  for (int64_t y = top; y < top + rh; ++y) std::fill_n(bits.begin() + y * width + left, rw, 1);
  return {Mask::from_bits(height, width, bits), 1, true};
}

Mask borehole_stripes(int64_t height, int64_t width, int64_t n_stripes, int64_t stripe_width,
                      int64_t phase_offset) {
  if (n_stripes < 0 || stripe_width < 0) throw std::invalid_argument("negative stripe spec");
  if (n_stripes * stripe_width >= width) {
    throw std::invalid_argument("stripes must leave observed columns (n * width < w)");
  }
  std::vector<uint8_t> columns(static_cast<size_t>(width), 0);
  const int64_t phase = ((phase_offset % width) + width) % width;
  for (int64_t i = 0; i < n_stripes; ++i) {
    const int64_t left = phase + i * width / n_stripes;
    for (int64_t j = 0; j < stripe_width; ++j) {
      auto& c = columns[static_cast<size_t>((left + j) % width)];
      if (c) throw std::invalid_argument("stripes overlap after wrap-around");
      c = 1;
    }
  }
  std::vector<uint8_t> bits(static_cast<size_t>(height * width));
  for (int64_t y = 0; y < height; ++y) {
    std::copy(columns.begin(), columns.end(), bits.begin() + y * width);
  }
  return Mask::from_bits(height, width, bits);
}

StripeLayout stripe_layout_for_coverage(int64_t width, double coverage, int64_t preferred) {
  if (!(coverage > 0.0 && coverage <= 1.0)) {
    throw std::invalid_argument("coverage must lie in (0, 1]");
  }
  const int64_t target = std::llround((1.0 - coverage) * static_cast<double>(width));
  if (target <= 0) return {0, 0};
  StripeLayout best;
  int64_t best_err = std::numeric_limits<int64_t>::max();
  int64_t best_dist = 0;
  for (int64_t n = 1; n <= width / 2; ++n) {
    const int64_t sw = std::llround(static_cast<double>(target) / static_cast<double>(n));
    if (sw < 1 || sw > width / n || n * sw >= width) continue;
    const int64_t err = std::abs(n * sw - target);
    const int64_t dist = std::abs(n - preferred);
    if (err < best_err || (err == best_err && dist < best_dist)) {
      best = {n, sw};
      best_err = err;
      best_dist = dist;
    }
  }
  if (best.n_stripes == 0) throw std::invalid_argument("no stripe layout for this coverage");
  return best;
}

Tensor apply_mask(const Tensor& x, const Mask& m, double fill) {
  if (x.rank() != 4 || x.dim(0) != m.batch() || x.dim(2) != m.height() ||
      x.dim(3) != m.width()) {
    throw ShapeError("apply_mask: image " + shape_to_string(x.shape()) + " vs mask " +
                     shape_to_string(m.tensor().shape()));
  }
  const Tensor holes = ops::repeat_channels(m.tensor(), x.dim(1));
  Tensor kept = ops::mul(x, ops::rsub_scalar(1.0, holes));
  if (fill == 0.0) return kept;
  return ops::add(kept, ops::scale(holes, fill));
}

Tensor apply_mask(const Tensor& x, const Mask& m, FillMode mode) {
  if (mode == FillMode::zero) return apply_mask(x, m, 0.0);
  const int64_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  const auto xd = x.data();
  const auto md = m.tensor().data();
  std::vector<double> fill(static_cast<size_t>(x.numel()));
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t k = 0; k < c; ++k) {
      double acc = 0.0;
      int64_t count = 0;
      for (int64_t p = 0; p < plane; ++p) {
        if (md[i * plane + p] == 0.0) {
          acc += xd[(i * c + k) * plane + p];
          ++count;
        }
      }
      const double mean = count ? acc / static_cast<double>(count) : 0.0;
      std::fill_n(fill.begin() + (i * c + k) * plane, plane, mean);
    }
  }
  const Tensor holes = ops::repeat_channels(m.tensor(), c);
  return ops::add(ops::mul(x, ops::rsub_scalar(1.0, holes)),
                  ops::mul(Tensor::from_data(x.shape(), std::move(fill)), holes));
}

std::string to_string(MaskKind kind) {
  switch (kind) {
    case MaskKind::rectangles:
      return "rectangles";
    case MaskKind::stripes:
      return "stripes";
    case MaskKind::fixed_coverage:
      return "fixed_coverage";
  }
  return "unknown";
}

MaskKind parse_mask_kind(const std::string& s) {
  if (s == "rectangles") return MaskKind::rectangles;
  if (s == "stripes") return MaskKind::stripes;
  if (s == "fixed_coverage") return MaskKind::fixed_coverage;
  throw std::invalid_argument("unknown mask kind: " + s);
}

Mask sample_mask(const MaskSuiteParams& params, Rng& rng) {
  switch (params.kind) {
    case MaskKind::rectangles:
      return sample_rect_masks(params.height, params.width, rng, params.rect).mask;
    case MaskKind::stripes: {
      const int64_t phase = rng.uniform_int(0, params.width - 1);
      return borehole_stripes(params.height, params.width, params.n_stripes, params.stripe_width,
                              phase);
    }
    case MaskKind::fixed_coverage: {
      const auto layout = stripe_layout_for_coverage(params.width, params.coverage,
                                                     params.n_stripes);
      const int64_t phase = rng.uniform_int(0, params.width - 1);
      return borehole_stripes(params.height, params.width, layout.n_stripes,
                              layout.stripe_width, phase);
    }
  }
  throw std::invalid_argument("unknown mask kind");
}

MaskSuite build_mask_suite(const MaskSuiteParams& params, uint64_t seed, int64_t n_images) {
  if (n_images < 0) throw std::invalid_argument("negative suite size");
  MaskSuite suite{seed, params, {}};
  suite.masks.reserve(static_cast<size_t>(n_images));
  for (int64_t i = 0; i < n_images; ++i) {
    Rng rng(derive_seed(seed, static_cast<uint64_t>(i)));
    suite.masks.push_back(sample_mask(params, rng));
  }
  return suite;
}

void save_mask_suite(const MaskSuite& suite, const std::string& path) {
  ByteWriter out;
  out.raw({reinterpret_cast<const uint8_t*>(kSuiteMagic.data()), kSuiteMagic.size()});
  out.u32(kSuiteVersion);
  out.u64(suite.seed);
  const auto& p = suite.params;
  out.u32(static_cast<uint32_t>(p.kind));
  out.i64(p.height);
  out.i64(p.width);
  out.f64(p.rect.min_hole_fraction);
  out.f64(p.rect.max_hole_fraction);
  out.i64(p.rect.max_rects);
  out.f64(p.rect.min_side_fraction);
  out.f64(p.rect.max_side_fraction);
  out.i64(p.rect.max_rounds);
  out.i64(p.n_stripes);
  out.i64(p.stripe_width);
  out.f64(p.coverage);
  out.u64(suite.masks.size());
  for (const auto& m : suite.masks) {
    if (m.batch() != 1 || m.height() != p.height || m.width() != p.width) {
      throw ShapeError("suite masks must be single images of the configured size");
    }
    // Alternating run lengths, starting with a (possibly empty) run of zeros.
    const auto bits = m.bits(0);
    std::vector<uint32_t> runs;
    uint8_t current = 0;
    uint32_t len = 0;
    for (uint8_t b : bits) {
      if (b != current) {
        runs.push_back(len);
        current = b;
        len = 0;
      }
      ++len;
    }
    runs.push_back(len);
    out.u32(static_cast<uint32_t>(runs.size()));
    for (uint32_t r : runs) out.u32(r);
  }
  out.finish_with_crc();
  write_file(path, out.bytes());
}

MaskSuite load_mask_suite(const std::string& path) {
  const auto file = read_file(path);
  ByteReader in(verify_crc(file, "mask suite " + path));
  in.expect_magic(kSuiteMagic);
  if (in.u32() != kSuiteVersion) throw FormatError("unsupported mask suite version");
  MaskSuite suite;
  suite.seed = in.u64();
  auto& p = suite.params;
  const uint32_t kind = in.u32();
  if (kind > static_cast<uint32_t>(MaskKind::fixed_coverage)) {
    throw FormatError("unknown mask kind in suite");
  }
  p.kind = static_cast<MaskKind>(kind);
  p.height = in.i64();
  p.width = in.i64();
  p.rect.min_hole_fraction = in.f64();
  p.rect.max_hole_fraction = in.f64();
  p.rect.max_rects = in.i64();
  p.rect.min_side_fraction = in.f64();
  p.rect.max_side_fraction = in.f64();
  p.rect.max_rounds = in.i64();
  p.n_stripes = in.i64();
  p.stripe_width = in.i64();
  p.coverage = in.f64();
  if (p.height <= 0 || p.width <= 0) throw FormatError("invalid mask size in suite");
  const uint64_t count = in.u64();
  const auto plane = static_cast<size_t>(p.height * p.width);
  for (uint64_t i = 0; i < count; ++i) {
    const uint32_t n_runs = in.u32();
    std::vector<uint8_t> bits;
    bits.reserve(plane);
    uint8_t value = 0;
    for (uint32_t r = 0; r < n_runs; ++r) {
      const uint32_t len = in.u32();
      if (bits.size() + len > plane) throw FormatError("mask runs exceed image size");
      bits.insert(bits.end(), len, value);
      value ^= 1;
    }
    if (bits.size() != plane) throw FormatError("mask runs do not cover the image");
    suite.masks.push_back(Mask::from_bits(p.height, p.width, bits));
  }
  if (!in.at_end()) throw FormatError("trailing bytes in mask suite");
  return suite;
}

void save_mask_png(const Mask& mask, int64_t index, const std::string& path) {
  save_image(mask.sample(index).tensor(), path);
}

}  // namespace saad
