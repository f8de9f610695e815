#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "saad/tensor.hpp"
#include "saad/texture.hpp"

namespace saad {

/// One image of a split: either a synthetic texture or a PNG path.
struct DatasetEntry {
  enum class Source { synthetic, file };
  Source source = Source::synthetic;
  TextureSpec spec;
  std::string path;

  static DatasetEntry synthetic(const TextureSpec& s);
  static DatasetEntry file(std::string p);
  bool operator==(const DatasetEntry&) const = default;
};

enum class Split { train, val, test };
std::string to_string(Split split);
Split parse_split(const std::string& s);

struct DatasetManifest {
  int64_t version = 1;
  int64_t image_size = 64;
  int64_t channels = 3;
  uint64_t seed = 0;
  bool center_crop = false;
  std::vector<DatasetEntry> train, val, test;

  const std::vector<DatasetEntry>& entries(Split split) const;
  std::vector<DatasetEntry>& entries(Split split);
  bool operator==(const DatasetManifest&) const = default;
};

struct SyntheticDatasetParams {
  int64_t n_train = 200;
  int64_t n_val = 0;
  int64_t n_test = 50;
  std::vector<TextureKind> kinds{TextureKind::stripes, TextureKind::layered_bands};
  uint64_t seed = 0;
  int64_t image_size = 64;
  int64_t channels = 3;
};

/// Image i of a split uses kind kinds[i % kinds.size()] and a seed derived
/// from (seed, split, i), so growing a split never changes earlier images.
DatasetManifest make_synthetic_dataset(const SyntheticDatasetParams& params);

/// Throws if a file path appears in two splits or sizes are invalid.
void validate_manifest(const DatasetManifest& manifest);

/// Text form: key=value header, then [train]/[val]/[test] sections with one
/// `synthetic key=value...` or `file <path>` line per image.
std::string manifest_to_text(const DatasetManifest& manifest);
DatasetManifest parse_manifest(const std::string& text);
void save_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

/// Builds a manifest from `root/{train,val,test}/*.png`, sorted by name.
DatasetManifest ingest_directory(const std::string& root, int64_t image_size, int64_t channels,
                                 bool center_crop);

/// Materializes one entry as [1,C,S,S]; files are checked against the
/// manifest's size and channel count.
Tensor load_entry(const DatasetManifest& manifest, const DatasetEntry& entry);
std::vector<Tensor> load_split(const DatasetManifest& manifest, Split split);

/// Concatenates [1,C,H,W] images along the batch axis.
Tensor stack_images(const std::vector<Tensor>& images);
Tensor stack_images(const std::vector<Tensor>& images, const std::vector<int64_t>& indices);

/// Writes every split as `out_dir/<split>/<index>.png`, index zero-padded to 5 digits.
void export_dataset_pngs(const DatasetManifest& manifest, const std::string& out_dir);

}  // namespace saad
