#pragma once

#include <string>
#include <vector>

#include "ffr/ndarray.hpp"
#include "ffr/ops.hpp"

namespace ffr::metrics {

/// ||pred - gt||^2 / ||gt||^2. Rejects an all-zero ground truth.
double nmse(const ArrayD& pred, const ArrayD& gt);

/// 10 log10(range^2 / MSE) in dB; +inf for identical inputs. `data_range`
/// defaults to max(gt) (the fastMRI convention: the ground-truth volume max).
double psnr(const ArrayD& pred, const ArrayD& gt, double data_range = -1.0);

/// Mean local SSIM of one 2-d slice over valid 7x7 (by default) uniform
/// windows, k1 = 0.01, k2 = 0.03. Value in [-1, 1].
double ssim2d(const ArrayD& pred, const ArrayD& gt, double data_range, Index window = 7);

struct SliceMetrics {
  Index slice = 0;
  double nmse = 0, psnr = 0, ssim = 0;
};

struct MetricsReport {
  std::vector<SliceMetrics> slices;
  double mean_nmse = 0, mean_psnr = 0, mean_ssim = 0;
  std::string config;
};

/// Volumes (F, P, S) are evaluated slice-wise along F and averaged; 2-d
/// arrays count as a single slice. data_range for SSIM/PSNR is max(gt).
MetricsReport evaluate_volume(const ArrayD& pred, const ArrayD& gt);

/// CSV: provenance comment, `slice-index,nmse,psnr,ssim` header, one row per
/// slice, then a trailing mean comment.
void write_csv(const std::string& path, const MetricsReport& r, const std::string& provenance);

/// Differentiable 1 - SSIM on a batch of single-channel slices
/// (B, 1, H, W); same window/constants/valid-window convention as ssim2d,
/// so values agree with the metric to rounding.
ad::Tensor ssim_loss(ad::Tape& t, ad::Tensor pred, const ArrayD& gt, double data_range,
                     Index window = 7);

}  // namespace ffr::metrics
