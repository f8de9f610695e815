#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "saad/rng.hpp"
#include "saad/tensor.hpp"

namespace saad::testing {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> d(static_cast<size_t>(shape_numel(shape)));
  for (auto& v : d) v = rng.uniform(lo, hi);
  return Tensor::from_data(shape, std::move(d));
}

inline Tensor random_normal(const Shape& shape, Rng& rng, double scale = 1.0) {
  std::vector<double> d(static_cast<size_t>(shape_numel(shape)));
  for (auto& v : d) v = scale * rng.normal();
  return Tensor::from_data(shape, std::move(d));
}

inline std::vector<double> values(const Tensor& t) {
  const auto d = t.data();
  return {d.begin(), d.end()};
}

/// Fresh scratch directory under the system temp dir.
inline std::string scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("saad_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace saad::testing
