#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "saad/rng.hpp"
#include "saad/tensor.hpp"

namespace saad {

/// Binary hole map of shape [N,1,H,W]; 1 marks a hole (generated, "fake")
/// pixel and 0 an observed ("real") pixel. It is also the segmentation
/// target of the discriminator.
class Mask {
 public:
  Mask() = default;

  static Mask zeros(int64_t batch, int64_t height, int64_t width);
  static Mask ones(int64_t batch, int64_t height, int64_t width);
  /// Validates shape and strict binarity.
  static Mask from_tensor(const Tensor& t);
  /// Single-image mask from row-major 0/1 bytes.
  static Mask from_bits(int64_t height, int64_t width, const std::vector<uint8_t>& bits);
  /// Concatenates masks along the batch axis.
  static Mask stack(const std::vector<Mask>& masks);

  const Tensor& tensor() const { return t_; }
  int64_t batch() const { return t_.dim(0); }
  int64_t height() const { return t_.dim(2); }
  int64_t width() const { return t_.dim(3); }
  bool hole(int64_t n, int64_t y, int64_t x) const { return t_.at(n, 0, y, x) != 0.0; }

  Mask sample(int64_t index) const;
  int64_t hole_count() const;
  double hole_fraction() const;
  std::vector<uint8_t> bits(int64_t index) const;

  bool operator==(const Mask& other) const { return t_.bitwise_equal(other.t_); }

 private:
  explicit Mask(Tensor t) : t_(std::move(t)) {}
  Tensor t_;
};

struct RectMaskParams {
  double min_hole_fraction = 0.15;
  double max_hole_fraction = 0.30;
  int64_t max_rects = 5;
  /// Rectangle sides are uniform integers in [side*min, side*max].
  double min_side_fraction = 0.125;
  double max_side_fraction = 0.5;
  int64_t max_rounds = 1000;

  bool operator==(const RectMaskParams&) const = default;
};

struct RectMaskSample {
  Mask mask;
  int64_t rect_count = 0;
  bool used_fallback = false;
};

/// Union of 1..max_rects possibly overlapping axis-aligned rectangles whose
/// hole fraction lies in [min_hole_fraction, max_hole_fraction]. Sizes and
/// positions are redrawn until the union qualifies; after max_rounds the
/// result is one centered rectangle of about 20% area.
RectMaskSample sample_rect_masks(int64_t height, int64_t width, Rng& rng,
                                 const RectMaskParams& params = {});

/// Full-height vertical stripes, left edges at phase + floor(i*w/n),
/// wrapping around the right border. Throws if stripes overlap.
Mask borehole_stripes(int64_t height, int64_t width, int64_t n_stripes, int64_t stripe_width,
                      int64_t phase_offset);

struct StripeLayout {
  int64_t n_stripes = 0;
  int64_t stripe_width = 0;
};

/// Stripe count and width whose total hole columns best match
/// round((1 - coverage) * width); ties favour counts near `preferred`.
StripeLayout stripe_layout_for_coverage(int64_t width, double coverage, int64_t preferred = 4);

enum class FillMode { zero, observed_mean };

/// x * (1 - M) + fill * M. Observed pixels are copied exactly.
Tensor apply_mask(const Tensor& x, const Mask& m, double fill = 0.0);
/// Fills holes with the per-image, per-channel mean of observed pixels.
Tensor apply_mask(const Tensor& x, const Mask& m, FillMode mode);

enum class MaskKind { rectangles, stripes, fixed_coverage };

std::string to_string(MaskKind kind);
MaskKind parse_mask_kind(const std::string& s);

struct MaskSuiteParams {
  MaskKind kind = MaskKind::rectangles;
  int64_t height = 64;
  int64_t width = 64;
  RectMaskParams rect;
  /// stripes: count and width; the phase is drawn per mask.
  int64_t n_stripes = 4;
  int64_t stripe_width = 4;
  /// fixed_coverage: observed fraction; stripes at a random phase.
  double coverage = 0.65;

  bool operator==(const MaskSuiteParams&) const = default;
};

/// One mask of the configured kind drawn from `rng`.
Mask sample_mask(const MaskSuiteParams& params, Rng& rng);

/// A fixed, reproducible set of single-image masks for evaluation.
struct MaskSuite {
  uint64_t seed = 0;
  MaskSuiteParams params;
  std::vector<Mask> masks;
};

/// Mask i is drawn from Rng(derive_seed(seed, i)), so suites of different
/// sizes agree on their common prefix.
MaskSuite build_mask_suite(const MaskSuiteParams& params, uint64_t seed, int64_t n_images);

/// Binary file: magic, version, seed, params, run-length-encoded masks,
/// trailing CRC-32.
void save_mask_suite(const MaskSuite& suite, const std::string& path);
MaskSuite load_mask_suite(const std::string& path);

/// Writes mask `index` as an 8-bit grayscale PNG (0 observed, 255 hole).
void save_mask_png(const Mask& mask, int64_t index, const std::string& path);

}  // namespace saad
