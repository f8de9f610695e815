#include "saad/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace saad {

Tensor load_image(const std::string& path, const LoadOptions& options) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw ImageFormatError(path + ": " + image.message);
  }
  const auto fail = [&](const std::string& why) {
    png_image_free(&image);
    throw ImageFormatError(path + ": " + why);
  };
  if (image.format & PNG_FORMAT_FLAG_LINEAR) fail("16-bit images are not supported");
  if (image.format & PNG_FORMAT_FLAG_COLORMAP) fail("palette images are not supported");
  if (image.format & PNG_FORMAT_FLAG_ALPHA) fail("images with alpha are not supported");

  const bool color = image.format & PNG_FORMAT_FLAG_COLOR;
  const int64_t channels = color ? 3 : 1;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int64_t h = image.height, w = image.width;
  std::vector<png_byte> pixels(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
    throw ImageFormatError(path + ": " + image.message);
  }

  int64_t top = 0, left = 0, oh = h, ow = w;
  if (options.expected_size > 0 && (h != options.expected_size || w != options.expected_size)) {
    if (!options.center_crop || h < options.expected_size || w < options.expected_size) {
      throw ImageFormatError(path + ": expected " + std::to_string(options.expected_size) +
                             "x" + std::to_string(options.expected_size) + ", got " +
                             std::to_string(h) + "x" + std::to_string(w));
    }
    oh = ow = options.expected_size;
    top = (h - oh) / 2;
    left = (w - ow) / 2;
  }
  std::vector<double> data(static_cast<size_t>(channels * oh * ow));
  for (int64_t c = 0; c < channels; ++c) {
    for (int64_t y = 0; y < oh; ++y) {
      for (int64_t x = 0; x < ow; ++x) {
        const auto src = static_cast<size_t>(((y + top) * w + (x + left)) * channels + c);
        data[static_cast<size_t>((c * oh + y) * ow + x)] = pixels[src] / 255.0;
      }
    }
  }
  return Tensor::from_data({1, channels, oh, ow}, std::move(data));
}

void save_image(const Tensor& image, const std::string& path) {
  if (image.rank() != 4 || image.dim(0) != 1 || (image.dim(1) != 1 && image.dim(1) != 3)) {
    throw ShapeError("save_image expects [1,1,H,W] or [1,3,H,W], got " +
                     shape_to_string(image.shape()));
  }
  const int64_t c = image.dim(1), h = image.dim(2), w = image.dim(3);
  std::vector<png_byte> pixels(static_cast<size_t>(c * h * w));
  const auto d = image.data();
  for (int64_t k = 0; k < c; ++k) {
    for (int64_t p = 0; p < h * w; ++p) {
      const double v = std::clamp(d[static_cast<size_t>(k * h * w + p)], 0.0, 1.0);
      pixels[static_cast<size_t>(p * c + k)] = static_cast<png_byte>(std::lround(v * 255.0));
    }
  }
  png_image out;
  std::memset(&out, 0, sizeof(out));
  out.version = PNG_IMAGE_VERSION;
  out.width = static_cast<png_uint_32>(w);
  out.height = static_cast<png_uint_32>(h);
  out.format = c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&out, path.c_str(), 0, pixels.data(), 0, nullptr)) {
    throw ImageFormatError(path + ": " + out.message);
  }
}

}  // namespace saad
