#include "saad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "saad/text.hpp"

namespace saad {

namespace {

void require_same_shape(const Tensor& x, const Tensor& y, const char* what) {
  if (x.shape() != y.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_to_string(x.shape()) +
                     " vs " + shape_to_string(y.shape()));
  }
}

double psnr_from_mse(double mse, double peak) {
  if (mse == 0.0) return kInfinitePsnr;
  return 10.0 * std::log10(peak * peak / mse);
}

// numpy-style 'reflect': -1 -> 1, n -> n - 2.
int64_t reflect(int64_t i, int64_t n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

// Separable Gaussian filter of one plane with reflection padding.
std::vector<double> filter_plane(const double* src, int64_t h, int64_t w,
                                 const std::vector<double>& taps) {
  const auto r = static_cast<int64_t>(taps.size() / 2);
  std::vector<double> tmp(static_cast<size_t>(h * w)), out(static_cast<size_t>(h * w));
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (int64_t k = -r; k <= r; ++k) {
        s += taps[static_cast<size_t>(k + r)] * src[y * w + reflect(x + k, w)];
      }
      tmp[static_cast<size_t>(y * w + x)] = s;
    }
  }
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (int64_t k = -r; k <= r; ++k) {
        s += taps[static_cast<size_t>(k + r)] * tmp[static_cast<size_t>(reflect(y + k, h) * w + x)];
      }
      out[static_cast<size_t>(y * w + x)] = s;
    }
  }
  return out;
}

}  // namespace

double psnr(const Tensor& x, const Tensor& y, double peak) {
  require_same_shape(x, y, "psnr");
  if (x.numel() == 0) throw ShapeError("psnr: empty tensors");
  const auto a = x.data(), b = y.data();
  double sse = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sse += d * d;
  }
  return psnr_from_mse(sse / static_cast<double>(a.size()), peak);
}

double psnr_masked(const Tensor& x, const Tensor& y, const Mask& mask, double peak) {
  require_same_shape(x, y, "psnr_masked");
  if (x.rank() != 4 || mask.batch() != x.dim(0) || mask.height() != x.dim(2) ||
      mask.width() != x.dim(3)) {
    throw ShapeError("psnr_masked: mask does not match image");
  }
  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const auto a = x.data(), b = y.data(), m = mask.tensor().data();
  double sse = 0.0;
  int64_t count = 0;
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t p = 0; p < hw; ++p) {
      if (m[static_cast<size_t>(i * hw + p)] == 0.0) continue;
      for (int64_t ch = 0; ch < c; ++ch) {
        const auto u = static_cast<size_t>((i * c + ch) * hw + p);
        const double d = a[u] - b[u];
        sse += d * d;
        ++count;
      }
    }
  }
  if (count == 0) return kInfinitePsnr;
  return psnr_from_mse(sse / static_cast<double>(count), peak);
}

std::vector<double> gaussian_window(int64_t size, double sigma) {
  if (size < 1 || size % 2 == 0) throw std::invalid_argument("window size must be odd");
  std::vector<double> taps(static_cast<size_t>(size));
  const double center = static_cast<double>(size / 2);
  for (int64_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - center;
    taps[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
  }
  const double total = std::accumulate(taps.begin(), taps.end(), 0.0);
  for (auto& t : taps) t /= total;
  return taps;
}

double ssim(const Tensor& x, const Tensor& y, const SsimParams& params) {
  require_same_shape(x, y, "ssim");
  int64_t c, h, w;
  if (x.rank() == 4 && x.dim(0) == 1) {
    c = x.dim(1), h = x.dim(2), w = x.dim(3);
  } else if (x.rank() == 3) {
    c = x.dim(0), h = x.dim(1), w = x.dim(2);
  } else {
    throw ShapeError("ssim expects one image, got " + shape_to_string(x.shape()));
  }
  if (h < params.window || w < params.window) {
    throw DimensionError("ssim: image " + std::to_string(h) + "x" + std::to_string(w) +
                         " is smaller than the " + std::to_string(params.window) + "-pixel window");
  }
  const auto taps = gaussian_window(params.window, params.sigma);
  const double c1 = std::pow(params.k1 * params.dynamic_range, 2);
  const double c2 = std::pow(params.k2 * params.dynamic_range, 2);
  const int64_t hw = h * w;
  const auto a = x.data(), b = y.data();

  double total = 0.0;
  std::vector<double> xx(static_cast<size_t>(hw)), yy(static_cast<size_t>(hw)),
      xy(static_cast<size_t>(hw));
  for (int64_t ch = 0; ch < c; ++ch) {
    const double* px = a.data() + ch * hw;
    const double* py = b.data() + ch * hw;
    for (int64_t i = 0; i < hw; ++i) {
      xx[static_cast<size_t>(i)] = px[i] * px[i];
      yy[static_cast<size_t>(i)] = py[i] * py[i];
      xy[static_cast<size_t>(i)] = px[i] * py[i];
    }
    const auto mx = filter_plane(px, h, w, taps);
    const auto my = filter_plane(py, h, w, taps);
    const auto exx = filter_plane(xx.data(), h, w, taps);
    const auto eyy = filter_plane(yy.data(), h, w, taps);
    const auto exy = filter_plane(xy.data(), h, w, taps);
    double plane = 0.0;
    for (size_t i = 0; i < static_cast<size_t>(hw); ++i) {
      const double vx = exx[i] - mx[i] * mx[i];
      const double vy = eyy[i] - my[i] * my[i];
      const double cov = exy[i] - mx[i] * my[i];
      plane += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
               ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += plane / static_cast<double>(hw);
  }
  return total / static_cast<double>(c);
}

double coverage(const Mask& mask) { return 1.0 - mask.hole_fraction(); }

double coverage(const Mask& mask, int64_t index) { return coverage(mask.sample(index)); }

double pixel_auc(const std::vector<double>& scores, const std::vector<uint8_t>& labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("pixel_auc: size mismatch");
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t i, size_t j) { return scores[i] < scores[j]; });
  // Mann-Whitney U with midranks for ties.
  double rank_sum = 0.0;
  int64_t positives = 0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (size_t k = i; k < j; ++k) {
      if (labels[order[k]] != 0) {
        rank_sum += midrank;
        ++positives;
      }
    }
    i = j;
  }
  const auto negatives = static_cast<int64_t>(scores.size()) - positives;
  if (positives == 0 || negatives == 0) {
    throw std::invalid_argument("pixel_auc needs both positive and negative labels");
  }
  const double p = static_cast<double>(positives);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

MetricsSummary summarize(const std::vector<MetricsRecord>& records) {
  MetricsSummary s;
  s.count = static_cast<int64_t>(records.size());
  if (records.empty()) return s;
  const double n = static_cast<double>(records.size());
  for (const auto& r : records) {
    if (std::isinf(r.psnr_db)) ++s.infinite_psnr;
    s.psnr_mean += r.psnr_db;
    s.ssim_mean += r.ssim;
    s.coverage_mean += r.coverage;
  }
  s.psnr_mean /= n;
  s.ssim_mean /= n;
  s.coverage_mean /= n;
  for (const auto& r : records) {
    if (s.infinite_psnr == 0) s.psnr_std += (r.psnr_db - s.psnr_mean) * (r.psnr_db - s.psnr_mean);
    s.ssim_std += (r.ssim - s.ssim_mean) * (r.ssim - s.ssim_mean);
  }
  s.psnr_std = std::sqrt(s.psnr_std / n);
  s.ssim_std = std::sqrt(s.ssim_std / n);
  return s;
}

std::string metrics_csv(const std::vector<MetricsRecord>& records) {
  std::string out = std::string(kMetricsCsvHeader) + "\n";
  for (const auto& r : records) {
    out += r.image_id + "," + r.method + "," + format_double(r.coverage) + "," +
           format_double(r.psnr_db) + "," + format_double(r.ssim) + "\n";
  }
  return out;
}

void write_metrics_csv(const std::vector<MetricsRecord>& records, const std::string& path) {
  write_text_file(path, metrics_csv(records));
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = std::string(kSweepCsvHeader) + "\n";
  for (const auto& r : rows) {
    out += format_double(r.coverage) + "," + r.method + "," + format_double(r.psnr_db) + "," +
           format_double(r.ssim) + "\n";
  }
  return out;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
  write_text_file(path, sweep_csv(rows));
}

}  // namespace saad
