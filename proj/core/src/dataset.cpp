#include "saad/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "saad/image_io.hpp"
#include "saad/rng.hpp"
#include "saad/text.hpp"

namespace saad {

namespace fs = std::filesystem;

namespace {

constexpr Split kSplits[] = {Split::train, Split::val, Split::test};

uint64_t split_stream(Split s) {
  switch (s) {
    case Split::train:
      return 0x7261696eu;
    case Split::val:
      return 0x76616cu;
    case Split::test:
      return 0x74657374u;
  }
  return 0;
}

std::string entry_to_line(const DatasetEntry& e) {
  if (e.source == DatasetEntry::Source::file) return "file " + e.path;
  const auto& s = e.spec;
  return "synthetic kind=" + to_string(s.kind) + " period=" + format_double(s.period) +
         " angle=" + format_double(s.angle) + " bands=" + std::to_string(s.bands) +
         " amplitude=" + format_double(s.amplitude) + " noise=" + format_double(s.noise) +
         " seed=" + std::to_string(s.seed);
}

DatasetEntry parse_entry_line(std::string_view line, int64_t channels, int64_t line_no) {
  auto fail = [&](const std::string& msg) -> std::runtime_error {
    return std::runtime_error("manifest line " + std::to_string(line_no) + ": " + msg);
  };
  if (line.starts_with("file ")) {
    const auto path = trim(line.substr(5));
    if (path.empty()) throw fail("empty path");
    return DatasetEntry::file(std::string(path));
  }
  if (!line.starts_with("synthetic")) throw fail("expected 'synthetic' or 'file'");
  TextureSpec spec;
  spec.channels = channels;
  std::set<std::string> seen;
  for (const auto& token : split(line.substr(9), ' ')) {
    if (token.empty()) continue;
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw fail("malformed token '" + token + "'");
    const std::string key = token.substr(0, eq);
    const std::string value = token.substr(eq + 1);
    if (!seen.insert(key).second) throw fail("duplicate key " + key);
    if (key == "kind") {
      spec.kind = parse_texture_kind(value);
    } else if (key == "period") {
      spec.period = parse_double(value);
    } else if (key == "angle") {
      spec.angle = parse_double(value);
    } else if (key == "bands") {
      spec.bands = parse_int(value);
    } else if (key == "amplitude") {
      spec.amplitude = parse_double(value);
    } else if (key == "noise") {
      spec.noise = parse_double(value);
    } else if (key == "seed") {
      spec.seed = parse_uint(value);
    } else {
      throw fail("unknown key " + key);
    }
  }
  if (!seen.contains("kind") || !seen.contains("seed")) throw fail("kind and seed are required");
  return DatasetEntry::synthetic(spec);
}

}  // namespace

DatasetEntry DatasetEntry::synthetic(const TextureSpec& s) {
  DatasetEntry e;
  e.source = Source::synthetic;
  e.spec = s;
  return e;
}

DatasetEntry DatasetEntry::file(std::string p) {
  DatasetEntry e;
  e.source = Source::file;
  e.path = std::move(p);
  return e;
}

std::string to_string(Split split) {
  switch (split) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "unknown";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split: " + s);
}

const std::vector<DatasetEntry>& DatasetManifest::entries(Split split) const {
  switch (split) {
    case Split::train:
      return train;
    case Split::val:
      return val;
    case Split::test:
      break;
  }
  return test;
}

std::vector<DatasetEntry>& DatasetManifest::entries(Split split) {
  return const_cast<std::vector<DatasetEntry>&>(std::as_const(*this).entries(split));
}

DatasetManifest make_synthetic_dataset(const SyntheticDatasetParams& params) {
  if (params.kinds.empty()) throw std::invalid_argument("at least one texture kind is required");
  if (params.n_train < 0 || params.n_val < 0 || params.n_test < 0) {
    throw std::invalid_argument("split sizes must be non-negative");
  }
  DatasetManifest m;
  m.image_size = params.image_size;
  m.channels = params.channels;
  m.seed = params.seed;
  const int64_t counts[] = {params.n_train, params.n_val, params.n_test};
  for (int s = 0; s < 3; ++s) {
    auto& list = m.entries(kSplits[s]);
    for (int64_t i = 0; i < counts[s]; ++i) {
      const auto kind = params.kinds[static_cast<size_t>(i) % params.kinds.size()];
      const uint64_t image_seed =
          derive_seed(params.seed, split_stream(kSplits[s]), static_cast<uint64_t>(i));
      list.push_back(DatasetEntry::synthetic(
          random_texture_spec(kind, image_seed, params.channels, params.image_size)));
    }
  }
  validate_manifest(m);
  return m;
}

void validate_manifest(const DatasetManifest& m) {
  if (m.version != 1) throw std::runtime_error("unsupported manifest version " + std::to_string(m.version));
  if (m.image_size < 8) throw std::runtime_error("manifest image_size must be >= 8");
  if (m.channels != 1 && m.channels != 3) throw std::runtime_error("manifest channels must be 1 or 3");
  std::set<std::string> paths;
  std::set<uint64_t> seeds;
  for (Split s : kSplits) {
    std::set<std::string> local;
    for (const auto& e : m.entries(s)) {
      if (e.source == DatasetEntry::Source::file) {
        const std::string key = fs::path(e.path).lexically_normal().string();
        if (paths.contains(key) && !local.contains(key)) {
          throw std::runtime_error("path appears in two splits: " + e.path);
        }
        paths.insert(key);
        local.insert(key);
      } else if (e.spec.channels != m.channels) {
        throw std::runtime_error("texture channel count differs from manifest");
      }
    }
  }
}

std::string manifest_to_text(const DatasetManifest& m) {
  std::ostringstream os;
  os << "version=" << m.version << "\n"
     << "image_size=" << m.image_size << "\n"
     << "channels=" << m.channels << "\n"
     << "seed=" << m.seed << "\n"
     << "center_crop=" << (m.center_crop ? "true" : "false") << "\n";
  for (Split s : kSplits) {
    os << "\n[" << to_string(s) << "]\n";
    for (const auto& e : m.entries(s)) os << entry_to_line(e) << "\n";
  }
  return os.str();
}

DatasetManifest parse_manifest(const std::string& text) {
  DatasetManifest m;
  std::istringstream is(text);
  std::string raw;
  int64_t line_no = 0;
  std::string header;
  std::vector<std::pair<Split, std::pair<int64_t, std::string>>> pending;
  std::optional<Split> current;
  while (std::getline(is, raw)) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw std::runtime_error("manifest line " + std::to_string(line_no) + ": bad section");
      current = parse_split(std::string(line.substr(1, line.size() - 2)));
      continue;
    }
    if (!current) {
      header += std::string(line) + "\n";
    } else {
      pending.push_back({*current, {line_no, std::string(line)}});
    }
  }
  const KeyValues kv = parse_key_values(header);
  for (const auto& [key, value] : kv.entries) {
    if (key == "version") {
      m.version = parse_int(value);
    } else if (key == "image_size") {
      m.image_size = parse_int(value);
    } else if (key == "channels") {
      m.channels = parse_int(value);
    } else if (key == "seed") {
      m.seed = parse_uint(value);
    } else if (key == "center_crop") {
      m.center_crop = parse_bool(value);
    } else {
      throw std::runtime_error("unknown manifest key " + key);
    }
  }
  for (const auto& [split, line] : pending) {
    m.entries(split).push_back(parse_entry_line(line.second, m.channels, line.first));
  }
  validate_manifest(m);
  return m;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
  write_text_file(path, manifest_to_text(manifest));
}

DatasetManifest load_manifest(const std::string& path) {
  return parse_manifest(read_text_file(path));
}

DatasetManifest ingest_directory(const std::string& root, int64_t image_size, int64_t channels,
                                 bool center_crop) {
  DatasetManifest m;
  m.image_size = image_size;
  m.channels = channels;
  m.center_crop = center_crop;
  if (!fs::is_directory(root)) throw std::runtime_error("not a directory: " + root);
  for (Split s : kSplits) {
    const fs::path dir = fs::path(root) / to_string(s);
    if (!fs::is_directory(dir)) continue;
    std::vector<std::string> files;
    for (const auto& item : fs::directory_iterator(dir)) {
      if (item.is_regular_file() && item.path().extension() == ".png") {
        files.push_back(item.path().string());
      }
    }
    std::sort(files.begin(), files.end());
    for (auto& f : files) m.entries(s).push_back(DatasetEntry::file(std::move(f)));
  }
  validate_manifest(m);
  return m;
}

Tensor load_entry(const DatasetManifest& manifest, const DatasetEntry& entry) {
  if (entry.source == DatasetEntry::Source::synthetic) {
    return gen_texture(entry.spec, manifest.image_size, manifest.image_size);
  }
  Tensor img = load_image(entry.path, {manifest.image_size, manifest.center_crop});
  if (img.dim(1) != manifest.channels) {
    throw ImageFormatError(entry.path + ": expected " + std::to_string(manifest.channels) +
                           " channels, found " + std::to_string(img.dim(1)));
  }
  return img;
}

std::vector<Tensor> load_split(const DatasetManifest& manifest, Split split) {
  std::vector<Tensor> out;
  for (const auto& e : manifest.entries(split)) out.push_back(load_entry(manifest, e));
  return out;
}

Tensor stack_images(const std::vector<Tensor>& images) {
  std::vector<int64_t> idx(images.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int64_t>(i);
  return stack_images(images, idx);
}

Tensor stack_images(const std::vector<Tensor>& images, const std::vector<int64_t>& indices) {
  if (indices.empty()) throw std::invalid_argument("stack_images: no images selected");
  const Shape first = images.at(static_cast<size_t>(indices[0])).shape();
  if (first.size() != 4 || first[0] != 1) throw ShapeError("stack_images expects [1,C,H,W] images");
  std::vector<double> data;
  data.reserve(static_cast<size_t>(shape_numel(first)) * indices.size());
  for (int64_t i : indices) {
    const Tensor& t = images.at(static_cast<size_t>(i));
    if (t.shape() != first) throw ShapeError("stack_images: inconsistent image shapes");
    const auto d = t.data();
    data.insert(data.end(), d.begin(), d.end());
  }
  return Tensor::from_data({static_cast<int64_t>(indices.size()), first[1], first[2], first[3]},
                           std::move(data));
}

void export_dataset_pngs(const DatasetManifest& manifest, const std::string& out_dir) {
  for (Split s : kSplits) {
    const auto& list = manifest.entries(s);
    if (list.empty()) continue;
    const fs::path dir = fs::path(out_dir) / to_string(s);
    fs::create_directories(dir);
    for (size_t i = 0; i < list.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "%05zu.png", i);
      save_image(load_entry(manifest, list[i]), (dir / name).string());
    }
  }
}

}  // namespace saad
