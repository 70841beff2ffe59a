// SPDX-License-Identifier: Apache-2.0
// Plain-loop reference implementations. Nothing here touches the autograd
// graph; inputs are read as flat row-major buffers.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "vp/random.hpp"
#include "vp/tensor.hpp"

namespace oracle {

using vp::real;
using Buf = std::vector<double>;

inline Buf values(const vp::Tensor& t) { return Buf(t.data().begin(), t.data().end()); }

inline double max_abs_diff(const vp::Tensor& a, const Buf& b) {
  double m = 0;
  auto x = a.data();
  if (x.size() != b.size()) return INFINITY;
  for (std::size_t i = 0; i < b.size(); ++i) m = std::max(m, std::abs(static_cast<double>(x[i]) - b[i]));
  return m;
}

// in: H x W x Ci, k: Co x Ci x K x K
inline Buf conv2d(const Buf& in, std::size_t H, std::size_t W, std::size_t Ci, const Buf& k, std::size_t Co,
                  std::size_t K, int stride, int pad, std::size_t& Ho, std::size_t& Wo) {
  Ho = (H + 2 * pad - K) / stride + 1;
  Wo = (W + 2 * pad - K) / stride + 1;
  Buf out(Ho * Wo * Co, 0.0);
  for (std::size_t oy = 0; oy < Ho; ++oy)
    for (std::size_t ox = 0; ox < Wo; ++ox)
      for (std::size_t co = 0; co < Co; ++co) {
        double acc = 0;
        for (std::size_t ci = 0; ci < Ci; ++ci)
          for (std::size_t a = 0; a < K; ++a)
            for (std::size_t b = 0; b < K; ++b) {
              const long y = static_cast<long>(oy) * stride - pad + static_cast<long>(a);
              const long x = static_cast<long>(ox) * stride - pad + static_cast<long>(b);
              if (y < 0 || x < 0 || y >= static_cast<long>(H) || x >= static_cast<long>(W)) continue;
              acc += in[(y * W + x) * Ci + ci] * k[((co * Ci + ci) * K + a) * K + b];
            }
        out[(oy * Wo + ox) * Co + co] = acc;
      }
  return out;
}

// Scatter form. k: Ci x Co x K x K
inline Buf conv_transpose2d(const Buf& in, std::size_t H, std::size_t W, std::size_t Ci, const Buf& k,
                            std::size_t Co, std::size_t K, int stride, int pad, int output_pad, std::size_t& Ho,
                            std::size_t& Wo) {
  Ho = (H - 1) * stride - 2 * pad + K + output_pad;
  Wo = (W - 1) * stride - 2 * pad + K + output_pad;
  Buf out(Ho * Wo * Co, 0.0);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t ci = 0; ci < Ci; ++ci)
        for (std::size_t co = 0; co < Co; ++co)
          for (std::size_t a = 0; a < K; ++a)
            for (std::size_t b = 0; b < K; ++b) {
              const long oy = static_cast<long>(y * stride + a) - pad;
              const long ox = static_cast<long>(x * stride + b) - pad;
              if (oy < 0 || ox < 0 || oy >= static_cast<long>(Ho) || ox >= static_cast<long>(Wo)) continue;
              out[(oy * Wo + ox) * Co + co] += in[(y * W + x) * Ci + ci] * k[((ci * Co + co) * K + a) * K + b];
            }
  return out;
}

// filters: H x W x Co x C x K x K
inline Buf dynamic_filter(const Buf& in, std::size_t H, std::size_t W, std::size_t C, const Buf& f, std::size_t Co,
                          std::size_t K) {
  const long r = static_cast<long>(K / 2);
  Buf out(H * W * Co, 0.0);
  for (std::size_t u = 0; u < H; ++u)
    for (std::size_t v = 0; v < W; ++v)
      for (std::size_t co = 0; co < Co; ++co) {
        double acc = 0;
        for (std::size_t c = 0; c < C; ++c)
          for (long du = -r; du <= r; ++du)
            for (long dv = -r; dv <= r; ++dv) {
              const long y = static_cast<long>(u) + du, x = static_cast<long>(v) + dv;
              if (y < 0 || x < 0 || y >= static_cast<long>(H) || x >= static_cast<long>(W)) continue;
              const std::size_t fi = ((((u * W + v) * Co + co) * C + c) * K + (du + r)) * K + (dv + r);
              acc += f[fi] * in[(y * W + x) * C + c];
            }
        out[(u * W + v) * Co + co] = acc;
      }
  return out;
}

// filters: H x W x C x K x K
inline Buf dynamic_filter_depthwise(const Buf& in, std::size_t H, std::size_t W, std::size_t C, const Buf& f,
                                    std::size_t K) {
  const long r = static_cast<long>(K / 2);
  Buf out(H * W * C, 0.0);
  for (std::size_t u = 0; u < H; ++u)
    for (std::size_t v = 0; v < W; ++v)
      for (std::size_t c = 0; c < C; ++c) {
        double acc = 0;
        for (long du = -r; du <= r; ++du)
          for (long dv = -r; dv <= r; ++dv) {
            const long y = static_cast<long>(u) + du, x = static_cast<long>(v) + dv;
            if (y < 0 || x < 0 || y >= static_cast<long>(H) || x >= static_cast<long>(W)) continue;
            acc += f[(((u * W + v) * C + c) * K + (du + r)) * K + (dv + r)] * in[(y * W + x) * C + c];
          }
        out[(u * W + v) * C + c] = acc;
      }
  return out;
}

// z: P x C (P pixels), mem: N x C -> P x N
inline Buf address(const Buf& z, std::size_t P, std::size_t C, const Buf& mem, std::size_t N) {
  Buf w(P * N);
  for (std::size_t p = 0; p < P; ++p) {
    double zn = 0;
    for (std::size_t c = 0; c < C; ++c) zn += z[p * C + c] * z[p * C + c];
    zn = std::sqrt(zn);
    Buf s(N);
    for (std::size_t i = 0; i < N; ++i) {
      double dot = 0, mn = 0;
      for (std::size_t c = 0; c < C; ++c) {
        dot += z[p * C + c] * mem[i * C + c];
        mn += mem[i * C + c] * mem[i * C + c];
      }
      s[i] = dot / ((zn + 1e-12) * (std::sqrt(mn) + 1e-12));
    }
    const double mx = *std::max_element(s.begin(), s.end());
    double total = 0;
    for (std::size_t i = 0; i < N; ++i) total += (s[i] = std::exp(s[i] - mx));
    for (std::size_t i = 0; i < N; ++i) w[p * N + i] = s[i] / total;
  }
  return w;
}

inline Buf read(const Buf& w, std::size_t P, std::size_t N, const Buf& mem, std::size_t C) {
  Buf out(P * C, 0.0);
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < N; ++i) out[p * C + c] += w[p * N + i] * mem[i * C + c];
  return out;
}

inline Buf matmul(const Buf& a, const Buf& b, std::size_t n, std::size_t k, std::size_t m) {
  Buf out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t t = 0; t < k; ++t) out[i * m + j] += a[i * k + t] * b[t * m + j];
  return out;
}

// h: P x C. attention (P x P) is written when non-null.
inline Buf propagate_step(const Buf& h, std::size_t P, std::size_t C, const Buf& wt, const Buf& wp, const Buf& wg,
                          Buf* attention = nullptr) {
  const Buf q = matmul(h, wt, P, C, C), k = matmul(h, wp, P, C, C), g = matmul(h, wg, P, C, C);
  Buf a(P * P);
  for (std::size_t i = 0; i < P; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < P; ++j) {
      double s = 0;
      for (std::size_t c = 0; c < C; ++c) s += q[i * C + c] * k[j * C + c];
      a[i * P + j] = s;
      mx = std::max(mx, s);
    }
    double total = 0;
    for (std::size_t j = 0; j < P; ++j) total += (a[i * P + j] = std::exp(a[i * P + j] - mx));
    for (std::size_t j = 0; j < P; ++j) a[i * P + j] /= total;
  }
  if (attention) *attention = a;
  return matmul(a, g, P, P, C);
}

inline double l1(const Buf& pred, const Buf& target) {
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

inline double gradient_l1(const Buf& pred, const Buf& target, std::size_t H, std::size_t W, std::size_t C) {
  double s = 0;
  auto at = [&](const Buf& b, std::size_t u, std::size_t v, std::size_t c) { return b[(u * W + v) * C + c]; };
  for (std::size_t u = 1; u < H; ++u)
    for (std::size_t v = 1; v < W; ++v)
      for (std::size_t c = 0; c < C; ++c) {
        const double tu = std::abs(at(target, u, v, c) - at(target, u - 1, v, c));
        const double pu = std::abs(at(pred, u, v, c) - at(pred, u - 1, v, c));
        const double tv = std::abs(at(target, u, v, c) - at(target, u, v - 1, c));
        const double pv = std::abs(at(pred, u, v, c) - at(pred, u, v - 1, c));
        s += std::abs(tu - pu) + std::abs(tv - pv);
      }
  return s / static_cast<double>((H - 1) * (W - 1) * C);
}

// Two-pass window moments, independent of the single-pass sums in the library.
inline double ssim(const Buf& x, const Buf& y, std::size_t H, std::size_t W, std::size_t C, std::size_t n,
                   double range) {
  const double c1 = (0.01 * range) * (0.01 * range), c2 = (0.03 * range) * (0.03 * range);
  double total = 0;
  std::size_t count = 0;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t + n <= H; ++t)
      for (std::size_t l = 0; l + n <= W; ++l) {
        double mx = 0, my = 0;
        for (std::size_t i = t; i < t + n; ++i)
          for (std::size_t j = l; j < l + n; ++j) {
            mx += x[(i * W + j) * C + c];
            my += y[(i * W + j) * C + c];
          }
        mx /= n * n;
        my /= n * n;
        double vx = 0, vy = 0, cov = 0;
        for (std::size_t i = t; i < t + n; ++i)
          for (std::size_t j = l; j < l + n; ++j) {
            const double a = x[(i * W + j) * C + c] - mx, b = y[(i * W + j) * C + c] - my;
            vx += a * a;
            vy += b * b;
            cov += a * b;
          }
        vx /= n * n;
        vy /= n * n;
        cov /= n * n;
        total += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
  return total / static_cast<double>(count);
}

inline Buf random_buf(std::size_t n, vp::Rng& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> d(lo, hi);
  Buf b(n);
  for (auto& v : b) v = d(rng);
  return b;
}

inline vp::Tensor tensor(vp::Shape shape, const Buf& b) {
  return vp::Tensor(std::move(shape), std::vector<real>(b.begin(), b.end()));
}

}  // namespace oracle
