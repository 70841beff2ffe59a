// SPDX-License-Identifier: Apache-2.0
#include "vp/ops.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>

#include "vp/errors.hpp"

namespace vp {

namespace {

thread_local KinkTracer* g_tracer = nullptr;
std::atomic<bool> g_corrupt_backward{false};

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                     shape_str(t.shape()));
  }
}

std::size_t last_extent(const char* op, const Tensor& t) {
  if (t.rank() == 0) throw ShapeError(std::string(op) + ": scalar input has no last axis");
  std::size_t n = t.shape().back();
  if (n == 0) throw ShapeError(std::string(op) + ": empty last dimension in " + shape_str(t.shape()));
  return n;
}

template <typename Fn>
Tensor unary(const char* name, const Tensor& a, Fn&& fwd, BackwardFn bwd) {
  std::vector<real> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x[i]);
  return make_result(name, a.shape(), std::move(out), {a}, std::move(bwd));
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<real> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_result("add", a.shape(), std::move(out), {a, b}, [a, b](const TensorImpl& o) {
    for (const Tensor* t : {&a, &b}) {
      auto g = grad_sink(*t);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<real> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_result("sub", a.shape(), std::move(out), {a, b}, [a, b](const TensorImpl& o) {
    auto ga = grad_sink(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i];
    auto gb = grad_sink(b);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= o.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<real> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [a, b](const TensorImpl& o) {
    auto x = a.data(), y = b.data();
    auto ga = grad_sink(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i] * y[i];
    auto gb = grad_sink(b);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += o.grad[i] * x[i];
  });
}

Tensor scale(const Tensor& a, real factor) {
  return unary("scale", a, [factor](real v) { return v * factor; }, [a, factor](const TensorImpl& o) {
    auto g = grad_sink(a);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * factor;
  });
}

Tensor abs(const Tensor& a) {
  if (KinkTracer::active()) {
    for (real v : a.data()) KinkTracer::record(v);
  }
  return unary("abs", a, [](real v) { return std::abs(v); }, [a](const TensorImpl& o) {
    auto x = a.data();
    auto g = grad_sink(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      real s = x[i] > 0 ? real(1) : (x[i] < 0 ? real(-1) : real(0));
      g[i] += o.grad[i] * s;
    }
  });
}

Tensor tanh(const Tensor& a) {
  return unary("tanh", a, [](real v) { return std::tanh(v); }, [a](const TensorImpl& o) {
    auto g = grad_sink(a);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * (real(1) - o.data[i] * o.data[i]);
  });
}

Tensor leaky_relu(const Tensor& a, real slope) {
  if (KinkTracer::active()) {
    for (real v : a.data()) KinkTracer::record(v);
  }
  return unary("leaky_relu", a, [slope](real v) { return v > 0 ? v : slope * v; }, [a, slope](const TensorImpl& o) {
    auto x = a.data();
    auto g = grad_sink(a);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * (x[i] > 0 ? real(1) : slope);
  });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& a) {
  real acc = 0;
  for (real v : a.data()) acc += v;
  return make_result("sum", Shape{}, {acc}, {a}, [a](const TensorImpl& o) {
    auto g = grad_sink(a);
    for (real& v : g) v += o.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean: empty tensor");
  real acc = 0;
  for (real v : a.data()) acc += v;
  const real inv = real(1) / static_cast<real>(a.numel());
  return make_result("mean", Shape{}, {acc * inv}, {a}, [a, inv](const TensorImpl& o) {
    auto g = grad_sink(a);
    for (real& v : g) v += o.grad[0] * inv;
  });
}

// ---------------------------------------------------------------------------
// Structural

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<real> out(a.data().begin(), a.data().end());
  return make_result("reshape", std::move(shape), std::move(out), {a}, [a](const TensorImpl& o) {
    auto g = grad_sink(a);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

Tensor transpose(const Tensor& a) {
  require_rank("transpose", a, 2, "input");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<real> out(m * n);
  auto x = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  return make_result("transpose", Shape{n, m}, std::move(out), {a}, [a, m, n](const TensorImpl& o) {
    auto g = grad_sink(a);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += o.grad[j * m + i];
  });
}

Tensor concat_lastdim(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_lastdim: no inputs");
  Shape lead = parts[0].shape();
  if (lead.empty()) throw ShapeError("concat_lastdim: scalar input");
  lead.pop_back();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    Shape s = p.shape();
    if (s.empty()) throw ShapeError("concat_lastdim: scalar input");
    widths.push_back(s.back());
    total += s.back();
    s.pop_back();
    if (s != lead) throw ShapeError("concat_lastdim: leading extents differ: " + shape_str(p.shape()));
  }
  const std::size_t rows = shape_numel(lead);
  std::vector<real> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto x = parts[k].data();
    const std::size_t w = widths[k];
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(x.data() + r * w, w, out.data() + r * total + offset);
    offset += w;
  }
  Shape shape = lead;
  shape.push_back(total);
  return make_result("concat_lastdim", std::move(shape), std::move(out), parts,
                     [parts, widths, rows, total](const TensorImpl& o) {
                       std::size_t offset = 0;
                       for (std::size_t k = 0; k < parts.size(); ++k) {
                         const std::size_t w = widths[k];
                         auto g = grad_sink(parts[k]);
                         if (!g.empty()) {
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t c = 0; c < w; ++c) g[r * w + c] += o.grad[r * total + offset + c];
                         }
                         offset += w;
                       }
                     });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  const std::size_t n = last_extent("add_bias", a);
  if (bias.rank() != 1 || bias.dim(0) != n) {
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not match last axis of " +
                     shape_str(a.shape()));
  }
  const std::size_t rows = a.numel() / n;
  std::vector<real> out(a.numel());
  auto x = a.data(), b = bias.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = x[r * n + c] + b[c];
  return make_result("add_bias", a.shape(), std::move(out), {a, bias}, [a, bias, rows, n](const TensorImpl& o) {
    auto ga = grad_sink(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i];
    auto gb = grad_sink(bias);
    if (!gb.empty()) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < n; ++c) gb[c] += o.grad[r * n + c];
    }
  });
}

namespace {
// Four independent partial sums so the loop vectorizes without reassociation.
real dot(const real* a, const real* b, std::size_t n) {
  real acc[4] = {0, 0, 0, 0};
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4)
    for (std::size_t l = 0; l < 4; ++l) acc[l] += a[j + l] * b[j + l];
  for (; j < n; ++j) acc[0] += a[j] * b[j];
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}
}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2, "lhs");
  require_rank("matmul", b, 2, "rhs");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner extents differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<real> out(m * n, real(0));
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    real* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const real s = x[i * k + p];
      const real* brow = y.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += s * brow[j];
    }
  }
  return make_result("matmul", Shape{m, n}, std::move(out), {a, b}, [a, b, m, k, n](const TensorImpl& o) {
    auto x = a.data(), y = b.data();
    const real* g = o.grad.data();
    auto ga = grad_sink(a);
    if (!ga.empty()) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const real* brow = y.data() + p * n;
          const real* grow = g + i * n;
          ga[i * k + p] += dot(grow, brow, n);
        }
    }
    auto gb = grad_sink(b);
    if (!gb.empty()) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const real s = x[i * k + p];
          const real* grow = g + i * n;
          real* gbrow = gb.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += s * grow[j];
        }
    }
  });
}

// ---------------------------------------------------------------------------
// Normalizations

Tensor softmax_lastdim(const Tensor& x) {
  const std::size_t n = last_extent("softmax_lastdim", x);
  const std::size_t rows = x.numel() / n;
  std::vector<real> out(x.numel());
  auto in = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const real* xr = in.data() + r * n;
    real* yr = out.data() + r * n;
    const real mx = *std::max_element(xr, xr + n);
    real total = 0;
    for (std::size_t c = 0; c < n; ++c) {
      yr[c] = std::exp(xr[c] - mx);
      total += yr[c];
    }
    for (std::size_t c = 0; c < n; ++c) yr[c] /= total;
  }
  return make_result("softmax_lastdim", x.shape(), std::move(out), {x}, [x, rows, n](const TensorImpl& o) {
    auto g = grad_sink(x);
    for (std::size_t r = 0; r < rows; ++r) {
      const real* y = o.data.data() + r * n;
      const real* go = o.grad.data() + r * n;
      real dot = 0;
      for (std::size_t c = 0; c < n; ++c) dot += go[c] * y[c];
      for (std::size_t c = 0; c < n; ++c) g[r * n + c] += y[c] * (go[c] - dot);
    }
  });
}

Tensor normalize_lastdim(const Tensor& x, real eps) {
  const std::size_t n = last_extent("normalize_lastdim", x);
  const std::size_t rows = x.numel() / n;
  std::vector<real> out(x.numel());
  std::vector<real> norms(rows);
  auto in = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    real ss = 0;
    for (std::size_t c = 0; c < n; ++c) ss += in[r * n + c] * in[r * n + c];
    norms[r] = std::sqrt(ss);
    const real d = norms[r] + eps;
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = in[r * n + c] / d;
  }
  return make_result("normalize_lastdim", x.shape(), std::move(out), {x},
                     [x, rows, n, eps, norms = std::move(norms)](const TensorImpl& o) {
                       auto in = x.data();
                       auto g = grad_sink(x);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const real nr = norms[r];
                         const real d = nr + eps;
                         const real* xr = in.data() + r * n;
                         const real* go = o.grad.data() + r * n;
                         real dot = 0;
                         for (std::size_t c = 0; c < n; ++c) dot += go[c] * xr[c];
                         const real k = nr > 0 ? dot / (d * d * nr) : real(0);
                         for (std::size_t c = 0; c < n; ++c) g[r * n + c] += go[c] / d - xr[c] * k;
                       }
                     });
}

Tensor cosine_sim(const Tensor& a, const Tensor& b, real eps) {
  require_rank("cosine_sim", a, 1, "lhs");
  require_same_shape("cosine_sim", a, b);
  return sum(mul(normalize_lastdim(a, eps), normalize_lastdim(b, eps)));
}

// ---------------------------------------------------------------------------
// Convolutions

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int pad) {
  require_rank("conv2d", input, 3, "input");
  require_rank("conv2d", kernel, 4, "kernel");
  const std::size_t H = input.dim(0), W = input.dim(1), Ci = input.dim(2);
  const std::size_t Co = kernel.dim(0), k = kernel.dim(2);
  if (kernel.dim(1) != Ci || kernel.dim(3) != k) {
    throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) + " incompatible with input " +
                     shape_str(input.shape()));
  }
  if (k % 2 == 0) throw ShapeError("conv2d: kernel size must be odd");
  if (stride < 1 || pad < 0) throw ShapeError("conv2d: stride must be >= 1 and pad >= 0");
  const long ho = (static_cast<long>(H) + 2 * pad - static_cast<long>(k)) / stride + 1;
  const long wo = (static_cast<long>(W) + 2 * pad - static_cast<long>(k)) / stride + 1;
  if (static_cast<long>(H) + 2 * pad < static_cast<long>(k) || static_cast<long>(W) + 2 * pad < static_cast<long>(k) ||
      ho < 1 || wo < 1) {
    throw ShapeError("conv2d: output extent < 1 for input " + shape_str(input.shape()));
  }
  const std::size_t Ho = static_cast<std::size_t>(ho), Wo = static_cast<std::size_t>(wo);

  // Tap-major layout [ky][kx][co][ci] keeps the channel loop contiguous.
  auto kt = std::make_shared<std::vector<real>>(k * k * Co * Ci);
  {
    auto kd = kernel.data();
    for (std::size_t co = 0; co < Co; ++co)
      for (std::size_t ci = 0; ci < Ci; ++ci)
        for (std::size_t t = 0; t < k * k; ++t) (*kt)[(t * Co + co) * Ci + ci] = kd[(co * Ci + ci) * k * k + t];
  }

  std::vector<real> out(Ho * Wo * Co, real(0));
  auto x = input.data();
  for (std::size_t oy = 0; oy < Ho; ++oy) {
    for (std::size_t ox = 0; ox < Wo; ++ox) {
      real* o = out.data() + (oy * Wo + ox) * Co;
      for (std::size_t ky = 0; ky < k; ++ky) {
        const long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(ky);
        if (iy < 0 || iy >= static_cast<long>(H)) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const long ix = static_cast<long>(ox) * stride - pad + static_cast<long>(kx);
          if (ix < 0 || ix >= static_cast<long>(W)) continue;
          const real* in = x.data() + (static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix)) * Ci;
          const real* kk = kt->data() + (ky * k + kx) * Co * Ci;
          for (std::size_t co = 0; co < Co; ++co) {
            real acc = 0;
            const real* kr = kk + co * Ci;
            for (std::size_t ci = 0; ci < Ci; ++ci) acc += in[ci] * kr[ci];
            o[co] += acc;
          }
        }
      }
    }
  }

  return make_result(
      "conv2d", Shape{Ho, Wo, Co}, std::move(out), {input, kernel},
      [input, kernel, kt, H, W, Ci, Co, k, Ho, Wo, stride, pad](const TensorImpl& o) {
        auto x = input.data();
        auto gx = grad_sink(input);
        auto gk = grad_sink(kernel);
        std::vector<real> gkt(gk.empty() ? 0 : kt->size(), real(0));
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            const real* g = o.grad.data() + (oy * Wo + ox) * Co;
            for (std::size_t ky = 0; ky < k; ++ky) {
              const long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(ky);
              if (iy < 0 || iy >= static_cast<long>(H)) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long ix = static_cast<long>(ox) * stride - pad + static_cast<long>(kx);
                if (ix < 0 || ix >= static_cast<long>(W)) continue;
                const std::size_t base = (static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix)) * Ci;
                const std::size_t tap = (ky * k + kx) * Co * Ci;
                const real* in = x.data() + base;
                for (std::size_t co = 0; co < Co; ++co) {
                  const real gc = g[co];
                  const real* kr = kt->data() + tap + co * Ci;
                  if (!gx.empty()) {
                    real* gi = gx.data() + base;
                    for (std::size_t ci = 0; ci < Ci; ++ci) gi[ci] += gc * kr[ci];
                  }
                  if (!gkt.empty()) {
                    real* gr = gkt.data() + tap + co * Ci;
                    for (std::size_t ci = 0; ci < Ci; ++ci) gr[ci] += gc * in[ci];
                  }
                }
              }
            }
          }
        }
        if (!gk.empty()) {
          const real fudge = debug::corrupt_backward() ? real(1.01) : real(1);
          for (std::size_t co = 0; co < Co; ++co)
            for (std::size_t ci = 0; ci < Ci; ++ci)
              for (std::size_t t = 0; t < k * k; ++t)
                gk[(co * Ci + ci) * k * k + t] += fudge * gkt[(t * Co + co) * Ci + ci];
        }
      });
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel, int stride, int pad, int output_pad) {
  require_rank("conv_transpose2d", input, 3, "input");
  require_rank("conv_transpose2d", kernel, 4, "kernel");
  const std::size_t H = input.dim(0), W = input.dim(1), Ci = input.dim(2);
  const std::size_t Co = kernel.dim(1), k = kernel.dim(2);
  if (kernel.dim(0) != Ci || kernel.dim(3) != k) {
    throw ShapeError("conv_transpose2d: kernel " + shape_str(kernel.shape()) + " incompatible with input " +
                     shape_str(input.shape()));
  }
  if (k % 2 == 0) throw ShapeError("conv_transpose2d: kernel size must be odd");
  if (stride < 1 || pad < 0 || output_pad < 0 || output_pad >= stride) {
    throw ShapeError("conv_transpose2d: need stride >= 1, pad >= 0, 0 <= output_pad < stride");
  }
  const long ho = (static_cast<long>(H) - 1) * stride - 2 * pad + static_cast<long>(k) + output_pad;
  const long wo = (static_cast<long>(W) - 1) * stride - 2 * pad + static_cast<long>(k) + output_pad;
  if (H == 0 || W == 0 || ho < 1 || wo < 1) throw ShapeError("conv_transpose2d: output extent < 1");
  const std::size_t Ho = static_cast<std::size_t>(ho), Wo = static_cast<std::size_t>(wo);

  // Layout [ky][kx][ci][co].
  auto kt = std::make_shared<std::vector<real>>(k * k * Ci * Co);
  {
    auto kd = kernel.data();
    for (std::size_t ci = 0; ci < Ci; ++ci)
      for (std::size_t co = 0; co < Co; ++co)
        for (std::size_t t = 0; t < k * k; ++t) (*kt)[(t * Ci + ci) * Co + co] = kd[(ci * Co + co) * k * k + t];
  }

  std::vector<real> out(Ho * Wo * Co, real(0));
  auto x = input.data();
  for (std::size_t iy = 0; iy < H; ++iy) {
    for (std::size_t ix = 0; ix < W; ++ix) {
      const real* in = x.data() + (iy * W + ix) * Ci;
      for (std::size_t ky = 0; ky < k; ++ky) {
        const long oy = static_cast<long>(iy) * stride - pad + static_cast<long>(ky);
        if (oy < 0 || oy >= ho) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const long ox = static_cast<long>(ix) * stride - pad + static_cast<long>(kx);
          if (ox < 0 || ox >= wo) continue;
          real* o = out.data() + (static_cast<std::size_t>(oy) * Wo + static_cast<std::size_t>(ox)) * Co;
          const real* kk = kt->data() + (ky * k + kx) * Ci * Co;
          for (std::size_t ci = 0; ci < Ci; ++ci) {
            const real v = in[ci];
            const real* kr = kk + ci * Co;
            for (std::size_t co = 0; co < Co; ++co) o[co] += v * kr[co];
          }
        }
      }
    }
  }

  return make_result(
      "conv_transpose2d", Shape{Ho, Wo, Co}, std::move(out), {input, kernel},
      [input, kernel, kt, H, W, Ci, Co, k, ho, wo, Wo, stride, pad](const TensorImpl& o) {
        auto x = input.data();
        auto gx = grad_sink(input);
        auto gk = grad_sink(kernel);
        std::vector<real> gkt(gk.empty() ? 0 : kt->size(), real(0));
        for (std::size_t iy = 0; iy < H; ++iy) {
          for (std::size_t ix = 0; ix < W; ++ix) {
            const std::size_t base = (iy * W + ix) * Ci;
            const real* in = x.data() + base;
            for (std::size_t ky = 0; ky < k; ++ky) {
              const long oy = static_cast<long>(iy) * stride - pad + static_cast<long>(ky);
              if (oy < 0 || oy >= ho) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long ox = static_cast<long>(ix) * stride - pad + static_cast<long>(kx);
                if (ox < 0 || ox >= wo) continue;
                const real* g =
                    o.grad.data() + (static_cast<std::size_t>(oy) * Wo + static_cast<std::size_t>(ox)) * Co;
                const std::size_t tap = (ky * k + kx) * Ci * Co;
                for (std::size_t ci = 0; ci < Ci; ++ci) {
                  const real* kr = kt->data() + tap + ci * Co;
                  if (!gx.empty()) {
                    real acc = 0;
                    for (std::size_t co = 0; co < Co; ++co) acc += g[co] * kr[co];
                    gx[base + ci] += acc;
                  }
                  if (!gkt.empty()) {
                    real* gr = gkt.data() + tap + ci * Co;
                    const real v = in[ci];
                    for (std::size_t co = 0; co < Co; ++co) gr[co] += v * g[co];
                  }
                }
              }
            }
          }
        }
        if (!gk.empty()) {
          for (std::size_t ci = 0; ci < Ci; ++ci)
            for (std::size_t co = 0; co < Co; ++co)
              for (std::size_t t = 0; t < k * k; ++t) gk[(ci * Co + co) * k * k + t] += gkt[(t * Ci + ci) * Co + co];
        }
      });
}

Tensor dynamic_filter(const Tensor& input, const Tensor& filters) {
  require_rank("dynamic_filter", input, 3, "input");
  require_rank("dynamic_filter", filters, 6, "filters");
  const std::size_t H = input.dim(0), W = input.dim(1), C = input.dim(2);
  const std::size_t Co = filters.dim(2), k = filters.dim(4);
  if (filters.dim(0) != H || filters.dim(1) != W || filters.dim(3) != C || filters.dim(5) != k) {
    throw ShapeError("dynamic_filter: filters " + shape_str(filters.shape()) + " incompatible with input " +
                     shape_str(input.shape()));
  }
  if (k % 2 == 0) throw ShapeError("dynamic_filter: kernel size must be odd");
  const long r = static_cast<long>(k / 2);
  const std::size_t per_pixel = Co * C * k * k;

  std::vector<real> out(H * W * Co, real(0));
  auto z = input.data();
  auto f = filters.data();
  for (std::size_t u = 0; u < H; ++u) {
    for (std::size_t v = 0; v < W; ++v) {
      const real* fb = f.data() + (u * W + v) * per_pixel;
      real* o = out.data() + (u * W + v) * Co;
      for (std::size_t co = 0; co < Co; ++co) {
        real acc = 0;
        for (std::size_t ci = 0; ci < C; ++ci) {
          const real* fk = fb + (co * C + ci) * k * k;
          for (std::size_t dy = 0; dy < k; ++dy) {
            const long y = static_cast<long>(u) + static_cast<long>(dy) - r;
            if (y < 0 || y >= static_cast<long>(H)) continue;
            for (std::size_t dx = 0; dx < k; ++dx) {
              const long x = static_cast<long>(v) + static_cast<long>(dx) - r;
              if (x < 0 || x >= static_cast<long>(W)) continue;
              acc += z[(static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x)) * C + ci] * fk[dy * k + dx];
            }
          }
        }
        o[co] = acc;
      }
    }
  }

  return make_result(
      "dynamic_filter", Shape{H, W, Co}, std::move(out), {input, filters},
      [input, filters, H, W, C, Co, k, r, per_pixel](const TensorImpl& o) {
        auto z = input.data();
        auto f = filters.data();
        auto gz = grad_sink(input);
        auto gf = grad_sink(filters);
        const real fudge = debug::corrupt_backward() ? real(1.01) : real(1);
        for (std::size_t u = 0; u < H; ++u) {
          for (std::size_t v = 0; v < W; ++v) {
            const std::size_t pix = (u * W + v) * per_pixel;
            for (std::size_t co = 0; co < Co; ++co) {
              const real g = o.grad[(u * W + v) * Co + co];
              for (std::size_t ci = 0; ci < C; ++ci) {
                const std::size_t fo = pix + (co * C + ci) * k * k;
                for (std::size_t dy = 0; dy < k; ++dy) {
                  const long y = static_cast<long>(u) + static_cast<long>(dy) - r;
                  if (y < 0 || y >= static_cast<long>(H)) continue;
                  for (std::size_t dx = 0; dx < k; ++dx) {
                    const long x = static_cast<long>(v) + static_cast<long>(dx) - r;
                    if (x < 0 || x >= static_cast<long>(W)) continue;
                    const std::size_t zi = (static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x)) * C + ci;
                    if (!gz.empty()) gz[zi] += fudge * g * f[fo + dy * k + dx];
                    if (!gf.empty()) gf[fo + dy * k + dx] += g * z[zi];
                  }
                }
              }
            }
          }
        }
      });
}

Tensor dynamic_filter_depthwise(const Tensor& input, const Tensor& filters) {
  require_rank("dynamic_filter_depthwise", input, 3, "input");
  require_rank("dynamic_filter_depthwise", filters, 5, "filters");
  const std::size_t H = input.dim(0), W = input.dim(1), C = input.dim(2);
  const std::size_t k = filters.dim(3);
  if (filters.dim(0) != H || filters.dim(1) != W || filters.dim(2) != C || filters.dim(4) != k) {
    throw ShapeError("dynamic_filter_depthwise: filters " + shape_str(filters.shape()) +
                     " incompatible with input " + shape_str(input.shape()));
  }
  if (k % 2 == 0) throw ShapeError("dynamic_filter_depthwise: kernel size must be odd");
  const long r = static_cast<long>(k / 2);

  std::vector<real> out(H * W * C, real(0));
  auto z = input.data();
  auto f = filters.data();
  for (std::size_t u = 0; u < H; ++u)
    for (std::size_t v = 0; v < W; ++v)
      for (std::size_t c = 0; c < C; ++c) {
        const real* fk = f.data() + ((u * W + v) * C + c) * k * k;
        real acc = 0;
        for (std::size_t dy = 0; dy < k; ++dy) {
          const long y = static_cast<long>(u) + static_cast<long>(dy) - r;
          if (y < 0 || y >= static_cast<long>(H)) continue;
          for (std::size_t dx = 0; dx < k; ++dx) {
            const long x = static_cast<long>(v) + static_cast<long>(dx) - r;
            if (x < 0 || x >= static_cast<long>(W)) continue;
            acc += z[(static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x)) * C + c] * fk[dy * k + dx];
          }
        }
        out[(u * W + v) * C + c] = acc;
      }

  return make_result("dynamic_filter_depthwise", Shape{H, W, C}, std::move(out), {input, filters},
                     [input, filters, H, W, C, k, r](const TensorImpl& o) {
                       auto z = input.data();
                       auto f = filters.data();
                       auto gz = grad_sink(input);
                       auto gf = grad_sink(filters);
                       for (std::size_t u = 0; u < H; ++u)
                         for (std::size_t v = 0; v < W; ++v)
                           for (std::size_t c = 0; c < C; ++c) {
                             const real g = o.grad[(u * W + v) * C + c];
                             const std::size_t fo = ((u * W + v) * C + c) * k * k;
                             for (std::size_t dy = 0; dy < k; ++dy) {
                               const long y = static_cast<long>(u) + static_cast<long>(dy) - r;
                               if (y < 0 || y >= static_cast<long>(H)) continue;
                               for (std::size_t dx = 0; dx < k; ++dx) {
                                 const long x = static_cast<long>(v) + static_cast<long>(dx) - r;
                                 if (x < 0 || x >= static_cast<long>(W)) continue;
                                 const std::size_t zi =
                                     (static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x)) * C + c;
                                 if (!gz.empty()) gz[zi] += g * f[fo + dy * k + dx];
                                 if (!gf.empty()) gf[fo + dy * k + dx] += g * z[zi];
                               }
                             }
                           }
                     });
}

Tensor backward_diff(const Tensor& input, int axis) {
  require_rank("backward_diff", input, 3, "input");
  if (axis != 0 && axis != 1) throw ShapeError("backward_diff: axis must be 0 or 1");
  const std::size_t H = input.dim(0), W = input.dim(1), C = input.dim(2);
  if (H < 2 || W < 2) throw ShapeError("backward_diff: need at least 2x2 pixels, got " + shape_str(input.shape()));
  const std::size_t step = axis == 0 ? W * C : C;
  std::vector<real> out((H - 1) * (W - 1) * C);
  auto x = input.data();
  for (std::size_t u = 1; u < H; ++u)
    for (std::size_t v = 1; v < W; ++v)
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t i = (u * W + v) * C + c;
        out[((u - 1) * (W - 1) + (v - 1)) * C + c] = x[i] - x[i - step];
      }
  return make_result("backward_diff", Shape{H - 1, W - 1, C}, std::move(out), {input},
                     [input, H, W, C, step](const TensorImpl& o) {
                       auto g = grad_sink(input);
                       for (std::size_t u = 1; u < H; ++u)
                         for (std::size_t v = 1; v < W; ++v)
                           for (std::size_t c = 0; c < C; ++c) {
                             const std::size_t i = (u * W + v) * C + c;
                             const real go = o.grad[((u - 1) * (W - 1) + (v - 1)) * C + c];
                             g[i] += go;
                             g[i - step] -= go;
                           }
                     });
}

// ---------------------------------------------------------------------------
// Kink tracing

KinkTracer::KinkTracer() : previous_(g_tracer) { g_tracer = this; }
KinkTracer::~KinkTracer() { g_tracer = previous_; }

void KinkTracer::record(real value) {
  if (g_tracer) g_tracer->signs_.push_back(value > 0 ? 1 : (value < 0 ? -1 : 0));
}

bool KinkTracer::active() { return g_tracer != nullptr; }

namespace debug {
void set_corrupt_backward(bool enabled) { g_corrupt_backward.store(enabled); }
bool corrupt_backward() { return g_corrupt_backward.load(); }
}  // namespace debug

}  // namespace vp
