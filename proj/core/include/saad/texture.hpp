#pragma once

#include <cstdint>
#include <string>

#include "saad/tensor.hpp"

namespace saad {

enum class TextureKind { stripes, checker, sinusoid_mix, layered_bands };

std::string to_string(TextureKind kind);
TextureKind parse_texture_kind(const std::string& s);

/// Parameters of a synthetic texture. Colors, phases and per-band values are
/// drawn from `seed`, so a spec fully determines its image.
struct TextureSpec {
  TextureKind kind = TextureKind::stripes;
  double period = 8.0;
  double angle = 0.0;  ///< radians; stripe normal direction
  int64_t bands = 5;
  double amplitude = 3.0;  ///< band boundary undulation, pixels
  double noise = 0.02;     ///< std-dev of additive Gaussian noise
  uint64_t seed = 0;
  int64_t channels = 3;

  bool operator==(const TextureSpec&) const = default;
};

/// Renders [1,C,h,w] with values in [0,1].
///  - stripes: square wave along the normal (cos a, sin a), phase a multiple
///    of 1/16 pixel;
///  - checker: alternating period x period blocks;
///  - sinusoid_mix: normalized sum of three random-phase gratings;
///  - layered_bands: horizontal bands with sinusoidal boundaries.
Tensor gen_texture(const TextureSpec& spec, int64_t height, int64_t width);

/// Draws kind-appropriate parameters for an image size.
TextureSpec random_texture_spec(TextureKind kind, uint64_t seed, int64_t channels,
                                int64_t image_size);

}  // namespace saad
