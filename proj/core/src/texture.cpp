#include "saad/texture.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "saad/rng.hpp"

namespace saad {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double positive_fmod(double a, double m) {
  const double r = std::fmod(a, m);
  return r < 0 ? r + m : r;
}

struct Palette {
  std::vector<double> a, b;
};

Palette draw_palette(Rng& rng, int64_t channels) {
  Palette p;
  for (int64_t c = 0; c < channels; ++c) {
    const double a = rng.uniform(0.1, 0.9);
    const double delta = rng.uniform(0.3, 0.6);
    const double b = a + delta <= 1.0 ? a + delta : a - delta;
    p.a.push_back(a);
    p.b.push_back(std::clamp(b, 0.0, 1.0));
  }
  return p;
}

}  // namespace

std::string to_string(TextureKind kind) {
  switch (kind) {
    case TextureKind::stripes:
      return "stripes";
    case TextureKind::checker:
      return "checker";
    case TextureKind::sinusoid_mix:
      return "sinusoid_mix";
    case TextureKind::layered_bands:
      return "layered_bands";
  }
  return "unknown";
}

TextureKind parse_texture_kind(const std::string& s) {
  if (s == "stripes") return TextureKind::stripes;
  if (s == "checker") return TextureKind::checker;
  if (s == "sinusoid_mix") return TextureKind::sinusoid_mix;
  if (s == "layered_bands") return TextureKind::layered_bands;
  throw std::invalid_argument("unknown texture kind: " + s);
}

Tensor gen_texture(const TextureSpec& spec, int64_t height, int64_t width) {
  if (height <= 0 || width <= 0) throw std::invalid_argument("texture size must be positive");
  if (!(spec.period > 0)) throw std::invalid_argument("texture period must be positive");
  if (spec.channels != 1 && spec.channels != 3) {
    throw std::invalid_argument("texture channels must be 1 or 3");
  }
  Rng rng(spec.seed);
  const Palette palette = draw_palette(rng, spec.channels);

  // Pattern value g in [0,1] per pixel.
  std::vector<double> g(static_cast<size_t>(height * width));
  auto at = [&](int64_t y, int64_t x) -> double& { return g[static_cast<size_t>(y * width + x)]; };

  switch (spec.kind) {
    case TextureKind::stripes: {
      const double offset = static_cast<double>(rng.uniform_int(0, 15)) / 16.0 +
                            static_cast<double>(rng.uniform_int(0, 63));
      const double cs = std::cos(spec.angle), sn = std::sin(spec.angle);
      for (int64_t y = 0; y < height; ++y) {
        for (int64_t x = 0; x < width; ++x) {
          const double u = static_cast<double>(x) * cs + static_cast<double>(y) * sn + offset;
          at(y, x) = positive_fmod(u, spec.period) < 0.5 * spec.period ? 1.0 : 0.0;
        }
      }
      break;
    }
    case TextureKind::checker: {
      const int64_t ox = rng.uniform_int(0, 63), oy = rng.uniform_int(0, 63);
      for (int64_t y = 0; y < height; ++y) {
        for (int64_t x = 0; x < width; ++x) {
          const auto bx = static_cast<int64_t>(std::floor((x + ox) / spec.period));
          const auto by = static_cast<int64_t>(std::floor((y + oy) / spec.period));
          at(y, x) = static_cast<double>((bx + by) & 1);
        }
      }
      break;
    }
    case TextureKind::sinusoid_mix: {
      struct Grating {
        double cs, sn, period, phase;
      };
      std::vector<Grating> gratings;
      for (int k = 0; k < 3; ++k) {
        const double a = rng.uniform(0.0, std::numbers::pi);
        gratings.push_back({std::cos(a), std::sin(a), spec.period * rng.uniform(0.5, 2.0),
                            rng.uniform(0.0, kTwoPi)});
      }
      for (int64_t y = 0; y < height; ++y) {
        for (int64_t x = 0; x < width; ++x) {
          double s = 0.0;
          for (const auto& gr : gratings) {
            s += std::sin(kTwoPi * (x * gr.cs + y * gr.sn) / gr.period + gr.phase);
          }
          at(y, x) = (s / 3.0 + 1.0) / 2.0;
        }
      }
      break;
    }
    case TextureKind::layered_bands: {
      if (spec.bands < 1) throw std::invalid_argument("layered_bands needs bands >= 1");
      struct Boundary {
        double base, freq, phase;
      };
      std::vector<Boundary> boundaries;
      const double spacing = static_cast<double>(height) / static_cast<double>(spec.bands);
      for (int64_t k = 1; k < spec.bands; ++k) {
        boundaries.push_back({spacing * (static_cast<double>(k) + rng.uniform(-0.25, 0.25)),
                              kTwoPi / (spec.period * rng.uniform(2.0, 6.0)),
                              rng.uniform(0.0, kTwoPi)});
      }
      std::vector<double> levels(static_cast<size_t>(spec.bands));
      for (auto& v : levels) v = rng.uniform(0.0, 1.0);
      for (int64_t y = 0; y < height; ++y) {
        for (int64_t x = 0; x < width; ++x) {
          size_t band = 0;
          for (const auto& b : boundaries) {
            if (static_cast<double>(y) >= b.base + spec.amplitude * std::sin(b.freq * x + b.phase)) {
              ++band;
            }
          }
          at(y, x) = levels[band];
        }
      }
      break;
    }
  }

  std::vector<double> out(static_cast<size_t>(spec.channels * height * width));
  for (int64_t c = 0; c < spec.channels; ++c) {
    const double a = palette.a[static_cast<size_t>(c)], b = palette.b[static_cast<size_t>(c)];
    for (int64_t p = 0; p < height * width; ++p) {
      double v = a * (1.0 - g[static_cast<size_t>(p)]) + b * g[static_cast<size_t>(p)];
      if (spec.noise > 0) v += spec.noise * rng.normal();
      out[static_cast<size_t>(c * height * width + p)] = std::clamp(v, 0.0, 1.0);
    }
  }
  return Tensor::from_data({1, spec.channels, height, width}, std::move(out));
}

TextureSpec random_texture_spec(TextureKind kind, uint64_t seed, int64_t channels,
                                int64_t image_size) {
  Rng rng(derive_seed(seed, 0x7e47u));
  TextureSpec spec;
  spec.kind = kind;
  spec.channels = channels;
  spec.seed = derive_seed(seed, 0x5eedu);
  const double size = static_cast<double>(image_size);
  spec.noise = rng.uniform(0.0, 0.03);
  switch (kind) {
    case TextureKind::stripes:
      spec.period = static_cast<double>(rng.uniform_int(std::max<int64_t>(4, image_size / 16),
                                                        std::max<int64_t>(6, image_size / 4)));
      spec.angle = rng.uniform(0.0, std::numbers::pi);
      break;
    case TextureKind::checker:
      spec.period = static_cast<double>(rng.uniform_int(std::max<int64_t>(3, image_size / 16),
                                                        std::max<int64_t>(4, image_size / 6)));
      break;
    case TextureKind::sinusoid_mix:
      spec.period = rng.uniform(size / 12.0, size / 4.0);
      break;
    case TextureKind::layered_bands:
      spec.bands = rng.uniform_int(3, 7);
      spec.period = rng.uniform(size / 8.0, size / 3.0);
      spec.amplitude = rng.uniform(1.0, size / 12.0);
      break;
  }
  return spec;
}

}  // namespace saad
