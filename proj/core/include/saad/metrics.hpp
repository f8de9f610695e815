#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "saad/masking.hpp"
#include "saad/tensor.hpp"

namespace saad {

inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

/// 10*log10(peak^2 / MSE) over every element; +inf for identical inputs.
double psnr(const Tensor& x, const Tensor& y, double peak = 1.0);
/// PSNR restricted to hole pixels (all channels) of a [N,1,H,W] mask.
/// +inf when the mask is empty or the holes match exactly.
double psnr_masked(const Tensor& x, const Tensor& y, const Mask& mask, double peak = 1.0);

struct SsimParams {
  int64_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
std::vector<double> gaussian_window(int64_t size, double sigma);

/// Mean SSIM of a [1,C,H,W] (or [C,H,W]) pair, averaged over channels.
/// Borders use reflection padding without edge repetition.
double ssim(const Tensor& x, const Tensor& y, const SsimParams& params = {});

/// Observed fraction (1 - hole fraction) of the whole mask.
double coverage(const Mask& mask);
double coverage(const Mask& mask, int64_t index);

/// Area under the ROC curve for scores separating positives (label 1)
/// from negatives, with ties counted as one half.
double pixel_auc(const std::vector<double>& scores, const std::vector<uint8_t>& labels);

struct MetricsRecord {
  std::string image_id;
  std::string method;
  double coverage = 1.0;
  double psnr_db = kInfinitePsnr;
  double ssim = 1.0;
  std::string checkpoint_id;
};

struct MetricsSummary {
  int64_t count = 0;
  double psnr_mean = 0.0;
  double psnr_std = 0.0;
  double ssim_mean = 0.0;
  double ssim_std = 0.0;
  double coverage_mean = 0.0;
  int64_t infinite_psnr = 0;
};

/// Population mean and standard deviation. Any infinite PSNR makes the
/// PSNR mean infinite; its deviation is then reported as 0.
MetricsSummary summarize(const std::vector<MetricsRecord>& records);

inline constexpr const char* kMetricsCsvHeader = "image_id,method,coverage,psnr_db,ssim";
std::string metrics_csv(const std::vector<MetricsRecord>& records);
void write_metrics_csv(const std::vector<MetricsRecord>& records, const std::string& path);

struct SweepRow {
  double coverage = 0.0;
  std::string method;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

inline constexpr const char* kSweepCsvHeader = "coverage,method,psnr_db,ssim";
std::string sweep_csv(const std::vector<SweepRow>& rows);
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path);

}  // namespace saad
