#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "saad/tensor.hpp"

namespace saad {

class ImageFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LoadOptions {
  /// Required square side; 0 accepts any size.
  int64_t expected_size = 0;
  /// Center-crop larger images to expected_size instead of failing.
  bool center_crop = false;
};

/// Reads an 8-bit grayscale or RGB PNG as [1,C,H,W] with values v/255.
/// 16-bit, palette and alpha images are rejected.
Tensor load_image(const std::string& path, const LoadOptions& options = {});

/// Writes a [1,C,H,W] tensor (C = 1 or 3) as an 8-bit PNG; values are
/// clamped to [0,1] and rounded to the nearest level.
void save_image(const Tensor& image, const std::string& path);

}  // namespace saad
