// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "vp/tensor.hpp"

namespace vp {

inline constexpr double kPsnrCapDb = 100.0;
/// Dynamic range of frames normalized to [-1, 1].
inline constexpr double kFrameRange = 2.0;

/// Per-element mean squared error.
double mse(const Tensor& pred, const Tensor& target);

/// 10 log10(range^2 / mse), capped at `cap` (identical inputs return the cap).
double psnr(const Tensor& pred, const Tensor& target, double data_range, double cap = kPsnrCapDb);

struct SsimOptions {
  std::size_t window = 8;  // uniform window, stride 1
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = kFrameRange;
};

/// Mean SSIM over all fully contained windows, averaged over channels.
/// Window statistics use population (1/n) moments.
double ssim(const Tensor& pred, const Tensor& target, const SsimOptions& options = {});

struct FrameMetrics {
  double psnr = 0;
  double ssim = 0;
  double mse = 0;  // on [0, 1]-scaled frames, in units of 1e-3
};

/// Metrics of one normalized [-1, 1] frame against its ground truth.
FrameMetrics frame_metrics(const Tensor& pred, const Tensor& target);

struct MetricReport {
  std::vector<FrameMetrics> frames;

  FrameMetrics mean() const;
  /// CSV with header frame_index,psnr,ssim,mse.
  void write_csv(const std::filesystem::path& path) const;
};

}  // namespace vp
