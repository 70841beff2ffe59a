// SPDX-License-Identifier: Apache-2.0
#include "vp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "vp/errors.hpp"

namespace vp {

namespace {
void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}
}  // namespace

double mse(const Tensor& pred, const Tensor& target) {
  require_same("mse", pred, target);
  if (pred.numel() == 0) throw ShapeError("mse: empty input");
  auto a = pred.data(), b = target.data();
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

double psnr(const Tensor& pred, const Tensor& target, double data_range, double cap) {
  const double err = mse(pred, target);
  if (err == 0) return cap;
  return std::min(cap, 10.0 * std::log10(data_range * data_range / err));
}

double ssim(const Tensor& pred, const Tensor& target, const SsimOptions& options) {
  require_same("ssim", pred, target);
  if (pred.rank() != 3) throw ShapeError("ssim: expected H x W x C, got " + shape_str(pred.shape()));
  const std::size_t H = pred.dim(0), W = pred.dim(1), C = pred.dim(2);
  const std::size_t n = options.window;
  if (n == 0 || H < n || W < n) {
    throw ShapeError("ssim: image " + shape_str(pred.shape()) + " smaller than the " + std::to_string(n) + "x" +
                     std::to_string(n) + " window");
  }
  const double c1 = (options.k1 * options.data_range) * (options.k1 * options.data_range);
  const double c2 = (options.k2 * options.data_range) * (options.k2 * options.data_range);
  const double count = static_cast<double>(n * n);
  auto x = pred.data(), y = target.data();

  double total = 0;
  std::size_t windows = 0;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t top = 0; top + n <= H; ++top) {
      for (std::size_t left = 0; left + n <= W; ++left) {
        double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
        for (std::size_t i = top; i < top + n; ++i) {
          for (std::size_t j = left; j < left + n; ++j) {
            const double a = x[(i * W + j) * C + c];
            const double b = y[(i * W + j) * C + c];
            sx += a;
            sy += b;
            sxx += a * a;
            syy += b * b;
            sxy += a * b;
          }
        }
        const double mx = sx / count, my = sy / count;
        const double vx = sxx / count - mx * mx;
        const double vy = syy / count - my * my;
        const double cov = sxy / count - mx * my;
        total += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++windows;
      }
    }
  }
  return total / static_cast<double>(windows);
}

FrameMetrics frame_metrics(const Tensor& pred, const Tensor& target) {
  FrameMetrics m;
  m.psnr = psnr(pred, target, kFrameRange);
  m.ssim = ssim(pred, target);
  // [-1, 1] -> [0, 1] halves differences, so the squared error shrinks by 4.
  m.mse = mse(pred, target) / 4.0 * 1e3;
  return m;
}

FrameMetrics MetricReport::mean() const {
  FrameMetrics out;
  if (frames.empty()) return out;
  for (const auto& f : frames) {
    out.psnr += f.psnr;
    out.ssim += f.ssim;
    out.mse += f.mse;
  }
  const double n = static_cast<double>(frames.size());
  out.psnr /= n;
  out.ssim /= n;
  out.mse /= n;
  return out;
}

void MetricReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot create " + path.string());
  out.precision(17);
  out << "frame_index,psnr,ssim,mse\n";
  for (std::size_t i = 0; i < frames.size(); ++i) {
    out << i << ',' << frames[i].psnr << ',' << frames[i].ssim << ',' << frames[i].mse << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace vp
